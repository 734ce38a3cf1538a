#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace sgnn::synth {

struct CameraIntrinsics {
    double fx = 0, fy = 0, cx = 0, cy = 0;
    int width = 0, height = 0;
};

/// Depth raster in meters (0 = invalid) with intrinsics and a rigid
/// camera-to-world pose. Camera convention: x right, y down, z forward;
/// depths store camera-space z. Pixel (i, j) looks along
/// ((i - cx)/fx, (j - cy)/fy, 1).
struct DepthFrame {
    std::vector<float> depths;  // row-major, width*height
    CameraIntrinsics intrinsics;
    Eigen::Matrix4d pose = Eigen::Matrix4d::Identity();

    float depth_at(int i, int j) const { return depths[static_cast<size_t>(j) * intrinsics.width + i]; }
    float& depth_at(int i, int j) { return depths[static_cast<size_t>(j) * intrinsics.width + i]; }

    /// Camera-space point of pixel (i, j) at z-depth z, mapped to world.
    Eigen::Vector3d backproject(double i, double j, double z) const {
        const Eigen::Vector3d pc((i - intrinsics.cx) / intrinsics.fx * z, (j - intrinsics.cy) / intrinsics.fy * z, z);
        return pose.topLeftCorner<3, 3>() * pc + pose.topRightCorner<3, 1>();
    }

    /// true if the rotation block is orthonormal with det +1 within tol
    bool pose_valid(double tol = 1e-6) const;
};

// Binary format: magic "SGNN-DEP1", little-endian; u32 width, height;
// f32 fx, fy, cx, cy; 16 x f32 row-major camera-to-world pose; then
// width*height f32 depths, row-major.
void write_depth_frame(const std::string& path, const DepthFrame& frame);
DepthFrame read_depth_frame(const std::string& path);

}  // namespace sgnn::synth
