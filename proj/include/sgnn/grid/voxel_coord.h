#pragma once

#include <cstdint>
#include <cstddef>
#include <functional>
#include <tuple>
#include <unordered_set>

namespace sgnn::grid {

/// Integer voxel index with a minibatch tag. batch is 0 for standalone grids.
struct VoxelCoord {
    int32_t x = 0;
    int32_t y = 0;
    int32_t z = 0;
    int32_t batch = 0;

    friend bool operator==(const VoxelCoord&, const VoxelCoord&) = default;

    friend bool operator<(const VoxelCoord& a, const VoxelCoord& b) {
        return std::tie(a.batch, a.x, a.y, a.z) < std::tie(b.batch, b.x, b.y, b.z);
    }
};

inline VoxelCoord operator+(const VoxelCoord& a, const VoxelCoord& b) {
    return {a.x + b.x, a.y + b.y, a.z + b.z, a.batch};
}

inline VoxelCoord operator-(const VoxelCoord& a, const VoxelCoord& b) {
    return {a.x - b.x, a.y - b.y, a.z - b.z, a.batch};
}

// floor division by a power of two, correct for negative coordinates
inline int32_t floor_div_pow2(int32_t v, int shift) { return v >> shift; }

inline VoxelCoord parent_coord(const VoxelCoord& c, int shift = 1) {
    return {floor_div_pow2(c.x, shift), floor_div_pow2(c.y, shift), floor_div_pow2(c.z, shift), c.batch};
}

struct Box3i {
    VoxelCoord origin;
    int32_t dx = 0, dy = 0, dz = 0;

    bool contains(const VoxelCoord& c) const {
        return c.x >= origin.x && c.x < origin.x + dx && c.y >= origin.y && c.y < origin.y + dy &&
               c.z >= origin.z && c.z < origin.z + dz;
    }
    int64_t cell_count() const { return int64_t(dx) * dy * dz; }
};

struct VoxelCoordHash {
    size_t operator()(const VoxelCoord& c) const {
        // Teschner-style spatial hash, batch folded in
        uint64_t h = static_cast<uint64_t>(static_cast<uint32_t>(c.x)) * 73856093ull ^
                     static_cast<uint64_t>(static_cast<uint32_t>(c.y)) * 19349669ull ^
                     static_cast<uint64_t>(static_cast<uint32_t>(c.z)) * 83492791ull ^
                     static_cast<uint64_t>(static_cast<uint32_t>(c.batch)) * 2654435761ull;
        h ^= h >> 33;
        h *= 0xff51afd7ed558ccdull;
        h ^= h >> 33;
        return static_cast<size_t>(h);
    }
};

using CoordSetU = std::unordered_set<VoxelCoord, VoxelCoordHash>;

}  // namespace sgnn::grid
