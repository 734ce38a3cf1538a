#include "sgnn/eval/metrics.h"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "sgnn/grid/grid_ops.h"

namespace sgnn::eval {

using grid::CropSpec;
using grid::SparseTSDF;
using grid::VoxelCoord;

namespace {

constexpr double kGlobalTruncation = 3.0;
constexpr double kNearbyThreshold = 1.0;

bool observed_in(const SparseTSDF& s, const VoxelCoord& c) {
    const auto* v = s.find(c);
    return v && v->observed;
}

}  // namespace

std::string MetricsReport::csv() const {
    std::ostringstream os;
    os << l1_entire_volume << ',' << l1_unobserved << ',' << l1_target << ',' << l1_predicted << ','
       << count_entire << ',' << count_unobserved << ',' << count_target << ',' << count_predicted;
    return os.str();
}

std::string MetricsReport::table() const {
    std::ostringstream os;
    os << "region            l1 error   voxels\n";
    os << "entire volume     " << l1_entire_volume << "  " << count_entire << "\n";
    os << "unobserved space  " << l1_unobserved << "  " << count_unobserved << "\n";
    os << "target            " << l1_target << "  " << count_target << "\n";
    os << "predicted         " << l1_predicted << "  " << count_predicted << "\n";
    return os.str();
}

MetricsReport l1_metrics(const SparseTSDF& pred, const SparseTSDF& target, const CropSpec& box,
                         const SparseTSDF* input) {
    if (pred.voxel_size() != target.voxel_size())
        throw std::invalid_argument("l1_metrics: voxel size mismatch");
    if (input && input->voxel_size() != target.voxel_size())
        throw std::invalid_argument("l1_metrics: input voxel size mismatch");

    const grid::DenseGrid dp = grid::densify(pred, box, static_cast<float>(kGlobalTruncation));
    const grid::DenseGrid dt = grid::densify(target, box, static_cast<float>(kGlobalTruncation));

    MetricsReport rep;
    double sum_entire = 0, sum_unobs = 0, sum_target = 0, sum_pred = 0;
    for (int32_t iz = 0; iz < box.dz; ++iz)
        for (int32_t iy = 0; iy < box.dy; ++iy)
            for (int32_t ix = 0; ix < box.dx; ++ix) {
                const VoxelCoord c{box.origin.x + ix, box.origin.y + iy, box.origin.z + iz, box.origin.batch};
                if (!observed_in(target, c)) continue;  // target-unobserved masked from every metric
                const double pa = std::min(std::abs(static_cast<double>(dp.at(ix, iy, iz))), kGlobalTruncation);
                const double ta = std::min(std::abs(static_cast<double>(dt.at(ix, iy, iz))), kGlobalTruncation);
                const double err = std::abs(pa - ta);

                sum_entire += err;
                rep.count_entire += 1;
                bool in_unobserved;
                if (input) {
                    in_unobserved = !observed_in(*input, c);
                } else {
                    in_unobserved = false;
                    for (int dz = -1; dz <= 1 && !in_unobserved; ++dz)
                        for (int dy = -1; dy <= 1 && !in_unobserved; ++dy)
                            for (int dx = -1; dx <= 1 && !in_unobserved; ++dx)
                                if (!observed_in(target, VoxelCoord{c.x + dx, c.y + dy, c.z + dz, c.batch}))
                                    in_unobserved = true;
                }
                if (in_unobserved) {
                    sum_unobs += err;
                    rep.count_unobserved += 1;
                }
                if (ta <= kNearbyThreshold) {
                    sum_target += err;
                    rep.count_target += 1;
                }
                if (pa <= kNearbyThreshold) {
                    sum_pred += err;
                    rep.count_predicted += 1;
                }
            }
    if (rep.count_entire > 0) rep.l1_entire_volume = sum_entire / static_cast<double>(rep.count_entire);
    if (rep.count_unobserved > 0) rep.l1_unobserved = sum_unobs / static_cast<double>(rep.count_unobserved);
    if (rep.count_target > 0) rep.l1_target = sum_target / static_cast<double>(rep.count_target);
    if (rep.count_predicted > 0) rep.l1_predicted = sum_pred / static_cast<double>(rep.count_predicted);
    return rep;
}

double completion_recall(const SparseTSDF& pred, const synth::Scene& scene, const SparseTSDF& input) {
    const double vs = input.voxel_size();

    auto surface_set = [&](const SparseTSDF& s) {
        grid::CoordSetU set;
        for (const auto& [c, v] : s.entries())
            if (std::abs(v.d) <= kNearbyThreshold) set.insert(c);
        return set;
    };
    auto near_surface = [](const grid::CoordSetU& set, const VoxelCoord& c) {
        for (int dz = -1; dz <= 1; ++dz)
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx)
                    if (set.contains(VoxelCoord{c.x + dx, c.y + dy, c.z + dz, c.batch})) return true;
        return false;
    };

    const grid::CoordSetU input_surface = surface_set(input);
    const grid::CoordSetU pred_surface = surface_set(pred);

    const synth::Vec3 lo = scene.extent.min(), hi = scene.extent.max();
    const int32_t x0 = static_cast<int32_t>(std::floor(lo.x() / vs)) - 1;
    const int32_t y0 = static_cast<int32_t>(std::floor(lo.y() / vs)) - 1;
    const int32_t z0 = static_cast<int32_t>(std::floor(lo.z() / vs)) - 1;
    const int32_t x1 = static_cast<int32_t>(std::ceil(hi.x() / vs)) + 1;
    const int32_t y1 = static_cast<int32_t>(std::ceil(hi.y() / vs)) + 1;
    const int32_t z1 = static_cast<int32_t>(std::ceil(hi.z() / vs)) + 1;

    int64_t missing = 0, completed = 0;
    for (int32_t iz = z0; iz <= z1; ++iz)
        for (int32_t iy = y0; iy <= y1; ++iy)
            for (int32_t ix = x0; ix <= x1; ++ix) {
                const synth::Vec3 p(ix * vs, iy * vs, iz * vs);
                if (std::abs(scene.sdf(p)) >= vs) continue;
                const VoxelCoord c{ix, iy, iz, 0};
                if (near_surface(input_surface, c)) continue;
                missing += 1;
                if (near_surface(pred_surface, c)) completed += 1;
            }
    if (missing == 0) return 0.0;
    return static_cast<double>(completed) / static_cast<double>(missing);
}

}  // namespace sgnn::eval
