#include "sgnn/fusion/fusion.h"

#include <cmath>
#include <stdexcept>

namespace sgnn::fusion {

using grid::SparseTSDF;
using grid::TsdfVoxel;
using grid::VoxelCoord;
using synth::DepthFrame;
using Vec3 = Eigen::Vector3d;

void integrate(SparseTSDF& g, const DepthFrame& frame, const FusionConfig& cfg) {
    if (g.voxel_size() != cfg.voxel_size)
        throw std::invalid_argument("integrate: grid voxel size does not match fusion config");
    const auto& k = frame.intrinsics;

    float max_valid = 0.0f;
    for (float d : frame.depths)
        if (d > 0.0f && d <= cfg.max_depth) max_valid = std::max(max_valid, d);
    if (max_valid <= 0.0f) return;

    const double vs = cfg.voxel_size;
    const double band_behind = 2.0 * cfg.truncation * vs;
    const double z_far = max_valid + band_behind + vs;

    // frustum AABB in world space: camera origin plus corner rays at z_far
    const Eigen::Matrix3d rot = frame.pose.topLeftCorner<3, 3>();
    const Vec3 origin = frame.pose.topRightCorner<3, 1>();
    Eigen::AlignedBox3d aabb(origin, origin);
    const double us[2] = {-0.5, k.width - 0.5};
    const double vcs[2] = {-0.5, k.height - 0.5};
    for (double u : us)
        for (double v : vcs) {
            const Vec3 pc((u - k.cx) / k.fx * z_far, (v - k.cy) / k.fy * z_far, z_far);
            aabb.extend(rot * pc + origin);
        }

    const int32_t x0 = static_cast<int32_t>(std::floor(aabb.min().x() / vs)) - 1;
    const int32_t y0 = static_cast<int32_t>(std::floor(aabb.min().y() / vs)) - 1;
    const int32_t z0 = static_cast<int32_t>(std::floor(aabb.min().z() / vs)) - 1;
    const int32_t x1 = static_cast<int32_t>(std::floor(aabb.max().x() / vs)) + 1;
    const int32_t y1 = static_cast<int32_t>(std::floor(aabb.max().y() / vs)) + 1;
    const int32_t z1 = static_cast<int32_t>(std::floor(aabb.max().z() / vs)) + 1;

    const Eigen::Matrix3d rot_t = rot.transpose();
    const Vec3 cam_origin = -rot_t * origin;

    for (int32_t iz = z0; iz <= z1; ++iz)
        for (int32_t iy = y0; iy <= y1; ++iy)
            for (int32_t ix = x0; ix <= x1; ++ix) {
                const Vec3 p(ix * vs, iy * vs, iz * vs);
                const Vec3 pc = rot_t * p + cam_origin;
                const double z = pc.z();
                if (z <= 1e-9) continue;
                const long pi = std::lround(k.fx * pc.x() / z + k.cx);
                const long pj = std::lround(k.fy * pc.y() / z + k.cy);
                if (pi < 0 || pi >= k.width || pj < 0 || pj >= k.height) continue;
                const float D = frame.depth_at(static_cast<int>(pi), static_cast<int>(pj));
                if (D <= 0.0f || D > cfg.max_depth) continue;
                const double sdf_m = D - z;
                if (sdf_m <= -band_behind) continue;
                const double sample =
                    std::clamp(sdf_m / vs, -double(cfg.truncation), double(cfg.truncation));
                const VoxelCoord c{ix, iy, iz, 0};
                auto [it, inserted] = g.entries().try_emplace(c);
                TsdfVoxel& vox = it->second;
                if (inserted) {
                    vox.d = static_cast<float>(sample);
                    vox.w = 1.0f;
                } else {
                    vox.d = static_cast<float>((double(vox.w) * vox.d + sample) / (double(vox.w) + 1.0));
                    vox.w += 1.0f;
                }
                vox.observed = vox.d > -cfg.truncation;
            }
}

SparseTSDF fuse(const std::vector<DepthFrame>& frames, const FusionConfig& cfg) {
    if (frames.empty()) throw std::invalid_argument("fuse: empty frame list");
    SparseTSDF g(cfg.voxel_size, cfg.truncation);
    for (const auto& f : frames) integrate(g, f, cfg);
    return g;
}

}  // namespace sgnn::fusion
