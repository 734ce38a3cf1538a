#pragma once

#include <Eigen/Dense>
#include <string>
#include <variant>
#include <vector>

namespace sgnn::synth {

using Vec3 = Eigen::Vector3d;

struct BoxPrim {
    Vec3 center;
    Vec3 half;  // half extents, meters
};

struct SpherePrim {
    Vec3 center;
    double radius = 0.0;
};

struct PlanePrim {
    Vec3 normal;     // unit
    double offset = 0.0;  // sdf(p) = normal.dot(p) - offset
};

using Primitive = std::variant<BoxPrim, SpherePrim, PlanePrim>;

double primitive_sdf(const Primitive& prim, const Vec3& p);

/// Analytic scene: composite SDF is the min over primitives, exact per
/// primitive. extent is the axis-aligned working volume of the scene.
struct Scene {
    std::vector<Primitive> primitives;
    Eigen::AlignedBox3d extent;

    double sdf(const Vec3& p) const;
};

// Text format, one primitive per line:
//   box cx cy cz hx hy hz
//   sphere cx cy cz r
//   plane nx ny nz offset
// The extent is recomputed from box/sphere bounds on load.
void write_scene(const std::string& path, const Scene& scene);
Scene read_scene(const std::string& path);

}  // namespace sgnn::synth
