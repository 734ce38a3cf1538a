#include "sgnn/synth/synth.h"

#include <stdexcept>

#include "sgnn/util/rng.h"

namespace sgnn::synth {

namespace {
constexpr double kTraceTol = 1e-4;
constexpr double kMaxRange = 10.0;
constexpr int kMaxSteps = 2048;
constexpr double kMinCameraClearance = 0.3;
}  // namespace

Scene make_room_scene(uint64_t seed) {
    util::Rng rng(util::derive_seed(seed, 0x5ce7e));
    Scene scene;
    const double extent = rng.uniform(3.0, 6.0);
    const double height = rng.uniform(2.2, 2.8);
    scene.extent = Eigen::AlignedBox3d(Vec3(0, 0, 0), Vec3(extent, extent, height));

    scene.primitives.emplace_back(PlanePrim{Vec3(0, 0, 1), 0.0});

    const double wall_th = 0.08;
    const int n_walls = static_cast<int>(rng.uniform_int(2, 4));
    std::vector<int> sides{0, 1, 2, 3};
    rng.shuffle(sides);
    sides.resize(n_walls);
    for (int side : sides) {
        BoxPrim wall;
        const double half_span = extent / 2.0;
        switch (side) {
            case 0:  // x = 0
                wall.center = Vec3(wall_th / 2, half_span, height / 2);
                wall.half = Vec3(wall_th / 2, half_span, height / 2);
                break;
            case 1:  // x = extent
                wall.center = Vec3(extent - wall_th / 2, half_span, height / 2);
                wall.half = Vec3(wall_th / 2, half_span, height / 2);
                break;
            case 2:  // y = 0
                wall.center = Vec3(half_span, wall_th / 2, height / 2);
                wall.half = Vec3(half_span, wall_th / 2, height / 2);
                break;
            default:  // y = extent
                wall.center = Vec3(half_span, extent - wall_th / 2, height / 2);
                wall.half = Vec3(half_span, wall_th / 2, height / 2);
                break;
        }
        scene.primitives.emplace_back(wall);
    }

    const int n_furniture = static_cast<int>(rng.uniform_int(2, 6));
    const double margin = 0.8;
    for (int i = 0; i < n_furniture; ++i) {
        const bool is_box = rng.uniform() < 0.5;
        if (is_box) {
            BoxPrim b;
            b.half = Vec3(rng.uniform(0.15, 0.55), rng.uniform(0.15, 0.55), rng.uniform(0.15, 0.45));
            b.center = Vec3(rng.uniform(margin, extent - margin), rng.uniform(margin, extent - margin), b.half.z());
            scene.primitives.emplace_back(b);
        } else {
            SpherePrim s;
            s.radius = rng.uniform(0.15, 0.45);
            s.center = Vec3(rng.uniform(margin, extent - margin), rng.uniform(margin, extent - margin), s.radius);
            scene.primitives.emplace_back(s);
        }
    }
    return scene;
}

CameraIntrinsics default_intrinsics() {
    CameraIntrinsics k;
    k.width = 320;
    k.height = 240;
    k.fx = 280.0;
    k.fy = 280.0;
    k.cx = (k.width - 1) / 2.0;
    k.cy = (k.height - 1) / 2.0;
    return k;
}

DepthFrame render_depth(const Scene& scene, const Eigen::Matrix4d& pose, const CameraIntrinsics& intrinsics) {
    if (intrinsics.fx <= 0 || intrinsics.fy <= 0 || intrinsics.width <= 0 || intrinsics.height <= 0)
        throw std::invalid_argument("render_depth: invalid intrinsics");
    DepthFrame frame;
    frame.intrinsics = intrinsics;
    frame.pose = pose;
    if (!frame.pose_valid(1e-6)) throw std::invalid_argument("render_depth: pose is not rigid");
    frame.depths.assign(static_cast<size_t>(intrinsics.width) * intrinsics.height, 0.0f);

    const Eigen::Matrix3d rot = pose.topLeftCorner<3, 3>();
    const Vec3 origin = pose.topRightCorner<3, 1>();
    for (int j = 0; j < intrinsics.height; ++j) {
        for (int i = 0; i < intrinsics.width; ++i) {
            Vec3 dir_cam((i - intrinsics.cx) / intrinsics.fx, (j - intrinsics.cy) / intrinsics.fy, 1.0);
            const double inv_norm = 1.0 / dir_cam.norm();
            dir_cam *= inv_norm;
            const Vec3 dir = rot * dir_cam;
            double t = 0.0;
            for (int step = 0; step < kMaxSteps && t < kMaxRange; ++step) {
                const double s = scene.sdf(origin + t * dir);
                if (s < kTraceTol) {
                    // z-depth, not ray length
                    frame.depth_at(i, j) = static_cast<float>(t * dir_cam.z());
                    break;
                }
                t += s;
            }
        }
    }
    return frame;
}

std::vector<Eigen::Matrix4d> sample_trajectory(const Scene& scene, int n, uint64_t seed) {
    if (n < 1) throw std::invalid_argument("sample_trajectory: n must be >= 1");
    util::Rng rng(util::derive_seed(seed, 0x7ea11));
    const Vec3 lo = scene.extent.min(), hi = scene.extent.max();
    const Vec3 center = scene.extent.center();
    std::vector<Eigen::Matrix4d> poses;
    poses.reserve(n);
    for (int i = 0; i < n; ++i) {
        Eigen::Matrix4d pose = Eigen::Matrix4d::Identity();
        for (int attempt = 0; attempt < 10000; ++attempt) {
            const Vec3 eye(rng.uniform(lo.x() + 0.35, hi.x() - 0.35), rng.uniform(lo.y() + 0.35, hi.y() - 0.35),
                           rng.uniform(0.9, std::min(2.0, hi.z() - 0.4)));
            if (scene.sdf(eye) <= kMinCameraClearance) continue;
            const Vec3 target(center.x() + rng.uniform(-0.3, 0.3) * (hi.x() - lo.x()),
                              center.y() + rng.uniform(-0.3, 0.3) * (hi.y() - lo.y()), rng.uniform(0.2, 1.2));
            Vec3 forward = target - eye;
            if (forward.norm() < 0.3) continue;
            forward.normalize();
            const Vec3 up(0, 0, 1);
            if (std::abs(forward.dot(up)) > 0.9) continue;
            const Vec3 right = forward.cross(up).normalized();
            const Vec3 down = forward.cross(right);
            pose.block<3, 1>(0, 0) = right;
            pose.block<3, 1>(0, 1) = down;
            pose.block<3, 1>(0, 2) = forward;
            pose.block<3, 1>(0, 3) = eye;
            poses.push_back(pose);
            break;
        }
        if (static_cast<int>(poses.size()) != i + 1)
            throw std::runtime_error("sample_trajectory: no free-space pose found");
    }
    return poses;
}

}  // namespace sgnn::synth
