#pragma once

#include <cstdint>
#include <vector>

#include "sgnn/grid/voxel_coord.h"

namespace sgnn::grid {

struct CropSpec {
    VoxelCoord origin;
    int32_t dx = 64, dy = 64, dz = 128;

    Box3i box() const { return Box3i{origin, dx, dy, dz}; }
};

/// Dense scalar grid. Layout is channel-planar with x fastest within a plane:
/// index(c, ix, iy, iz) = c*dx*dy*dz + (iz*dy + iy)*dx + ix.
class DenseGrid {
public:
    DenseGrid(VoxelCoord origin, int32_t dx, int32_t dy, int32_t dz, float voxel_size, int32_t channels = 1,
              float fill = 0.0f)
        : origin_(origin), dx_(dx), dy_(dy), dz_(dz), voxel_size_(voxel_size), channels_(channels),
          values_(static_cast<size_t>(dx) * dy * dz * channels, fill) {}

    VoxelCoord origin() const { return origin_; }
    int32_t dx() const { return dx_; }
    int32_t dy() const { return dy_; }
    int32_t dz() const { return dz_; }
    int32_t channels() const { return channels_; }
    float voxel_size() const { return voxel_size_; }

    size_t index(int32_t ix, int32_t iy, int32_t iz, int32_t c = 0) const {
        return (static_cast<size_t>(c) * dz_ + iz) * dy_ * dx_ + static_cast<size_t>(iy) * dx_ + ix;
    }

    float at(int32_t ix, int32_t iy, int32_t iz, int32_t c = 0) const { return values_[index(ix, iy, iz, c)]; }
    float& at(int32_t ix, int32_t iy, int32_t iz, int32_t c = 0) { return values_[index(ix, iy, iz, c)]; }

    /// Value at an absolute voxel coordinate (must lie inside the grid).
    float at_coord(const VoxelCoord& c, int32_t ch = 0) const {
        return at(c.x - origin_.x, c.y - origin_.y, c.z - origin_.z, ch);
    }

    bool contains(const VoxelCoord& c) const {
        return c.x >= origin_.x && c.x < origin_.x + dx_ && c.y >= origin_.y && c.y < origin_.y + dy_ &&
               c.z >= origin_.z && c.z < origin_.z + dz_;
    }

    const std::vector<float>& values() const { return values_; }
    std::vector<float>& values() { return values_; }

private:
    VoxelCoord origin_;
    int32_t dx_, dy_, dz_;
    float voxel_size_;
    int32_t channels_;
    std::vector<float> values_;
};

}  // namespace sgnn::grid
