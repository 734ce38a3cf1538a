#include "sgnn/synth/scene.h"

#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace sgnn::synth {

double primitive_sdf(const Primitive& prim, const Vec3& p) {
    return std::visit(
        [&](const auto& s) -> double {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, BoxPrim>) {
                const Vec3 q = (p - s.center).cwiseAbs() - s.half;
                const Vec3 qpos = q.cwiseMax(0.0);
                return qpos.norm() + std::min(q.maxCoeff(), 0.0);
            } else if constexpr (std::is_same_v<T, SpherePrim>) {
                return (p - s.center).norm() - s.radius;
            } else {
                return s.normal.dot(p) - s.offset;
            }
        },
        prim);
}

double Scene::sdf(const Vec3& p) const {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& prim : primitives) best = std::min(best, primitive_sdf(prim, p));
    return best;
}

namespace {

Eigen::AlignedBox3d extent_from_primitives(const std::vector<Primitive>& prims) {
    Eigen::AlignedBox3d box;
    for (const auto& prim : prims) {
        if (const auto* b = std::get_if<BoxPrim>(&prim)) {
            box.extend(b->center - b->half);
            box.extend(b->center + b->half);
        } else if (const auto* s = std::get_if<SpherePrim>(&prim)) {
            box.extend(s->center - Vec3::Constant(s->radius));
            box.extend(s->center + Vec3::Constant(s->radius));
        }
    }
    return box;
}

}  // namespace

void write_scene(const std::string& path, const Scene& scene) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os << std::setprecision(17);
    for (const auto& prim : scene.primitives) {
        if (const auto* b = std::get_if<BoxPrim>(&prim)) {
            os << "box " << b->center.x() << ' ' << b->center.y() << ' ' << b->center.z() << ' '
               << b->half.x() << ' ' << b->half.y() << ' ' << b->half.z() << '\n';
        } else if (const auto* s = std::get_if<SpherePrim>(&prim)) {
            os << "sphere " << s->center.x() << ' ' << s->center.y() << ' ' << s->center.z() << ' '
               << s->radius << '\n';
        } else {
            const auto& pl = std::get<PlanePrim>(prim);
            os << "plane " << pl.normal.x() << ' ' << pl.normal.y() << ' ' << pl.normal.z() << ' '
               << pl.offset << '\n';
        }
    }
    if (!os) throw std::runtime_error("write failed: " + path);
}

Scene read_scene(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open: " + path);
    Scene scene;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string kind;
        ls >> kind;
        if (kind == "box") {
            BoxPrim b;
            ls >> b.center.x() >> b.center.y() >> b.center.z() >> b.half.x() >> b.half.y() >> b.half.z();
            if (!ls) throw std::runtime_error("bad box line in " + path);
            scene.primitives.emplace_back(b);
        } else if (kind == "sphere") {
            SpherePrim s;
            ls >> s.center.x() >> s.center.y() >> s.center.z() >> s.radius;
            if (!ls) throw std::runtime_error("bad sphere line in " + path);
            scene.primitives.emplace_back(s);
        } else if (kind == "plane") {
            PlanePrim pl;
            ls >> pl.normal.x() >> pl.normal.y() >> pl.normal.z() >> pl.offset;
            if (!ls) throw std::runtime_error("bad plane line in " + path);
            scene.primitives.emplace_back(pl);
        } else {
            throw std::runtime_error("unknown primitive '" + kind + "' in " + path);
        }
    }
    scene.extent = extent_from_primitives(scene.primitives);
    return scene;
}

}  // namespace sgnn::synth
