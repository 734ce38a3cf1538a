#include "sgnn/synth/camera.h"

#include <fstream>
#include <stdexcept>

#include "sgnn/util/binio.h"

namespace sgnn::synth {

bool DepthFrame::pose_valid(double tol) const {
    const Eigen::Matrix3d r = pose.topLeftCorner<3, 3>();
    if ((r * r.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > tol) return false;
    if (std::abs(r.determinant() - 1.0) > tol) return false;
    if ((pose.row(3) - Eigen::RowVector4d(0, 0, 0, 1)).cwiseAbs().maxCoeff() > tol) return false;
    return true;
}

namespace {
constexpr const char* kMagic = "SGNN-DEP1";
}

void write_depth_frame(const std::string& path, const DepthFrame& frame) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    util::write_magic(os, kMagic);
    util::write_le<uint32_t>(os, static_cast<uint32_t>(frame.intrinsics.width));
    util::write_le<uint32_t>(os, static_cast<uint32_t>(frame.intrinsics.height));
    util::write_f32(os, static_cast<float>(frame.intrinsics.fx));
    util::write_f32(os, static_cast<float>(frame.intrinsics.fy));
    util::write_f32(os, static_cast<float>(frame.intrinsics.cx));
    util::write_f32(os, static_cast<float>(frame.intrinsics.cy));
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) util::write_f32(os, static_cast<float>(frame.pose(r, c)));
    const size_t n = static_cast<size_t>(frame.intrinsics.width) * frame.intrinsics.height;
    if (frame.depths.size() != n) throw std::invalid_argument("depth raster size mismatch");
    for (float d : frame.depths) util::write_f32(os, d);
    if (!os) throw std::runtime_error("write failed: " + path);
}

DepthFrame read_depth_frame(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open: " + path);
    util::expect_magic(is, kMagic, path);
    DepthFrame frame;
    frame.intrinsics.width = static_cast<int>(util::read_le<uint32_t>(is));
    frame.intrinsics.height = static_cast<int>(util::read_le<uint32_t>(is));
    frame.intrinsics.fx = util::read_f32(is);
    frame.intrinsics.fy = util::read_f32(is);
    frame.intrinsics.cx = util::read_f32(is);
    frame.intrinsics.cy = util::read_f32(is);
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) frame.pose(r, c) = util::read_f32(is);
    const size_t n = static_cast<size_t>(frame.intrinsics.width) * frame.intrinsics.height;
    frame.depths.resize(n);
    for (size_t i = 0; i < n; ++i) frame.depths[i] = util::read_f32(is);
    return frame;
}

}  // namespace sgnn::synth
