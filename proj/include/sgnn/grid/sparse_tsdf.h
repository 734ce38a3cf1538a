#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <unordered_map>
#include <vector>

#include "sgnn/grid/voxel_coord.h"

namespace sgnn::grid {

struct TsdfVoxel {
    float d = 0.0f;        // signed distance, voxel units, |d| <= truncation
    float w = 0.0f;        // fusion weight, > 0 for stored entries
    bool observed = true;  // implies d > -truncation
};

/// Sparse truncated signed distance field. Distances are in voxel units;
/// positive in front of observed surfaces, negative behind. Sample points sit
/// on the lattice: coord c corresponds to the world point c * voxel_size.
class SparseTSDF {
public:
    using Map = std::unordered_map<VoxelCoord, TsdfVoxel, VoxelCoordHash>;

    explicit SparseTSDF(float voxel_size = 0.02f, float truncation = 3.0f)
        : voxel_size_(voxel_size), truncation_(truncation) {}

    float voxel_size() const { return voxel_size_; }
    float truncation() const { return truncation_; }

    Map& entries() { return entries_; }
    const Map& entries() const { return entries_; }

    const TsdfVoxel* find(const VoxelCoord& c) const {
        auto it = entries_.find(c);
        return it == entries_.end() ? nullptr : &it->second;
    }

    void set(const VoxelCoord& c, const TsdfVoxel& v) { entries_[c] = v; }

    size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }

    std::vector<VoxelCoord> sorted_coords() const {
        std::vector<VoxelCoord> out;
        out.reserve(entries_.size());
        for (const auto& [c, v] : entries_) out.push_back(c);
        std::sort(out.begin(), out.end());
        return out;
    }

    /// Coordinates within truncation, |d| < truncation. The network input set.
    std::vector<VoxelCoord> surface_coords() const {
        std::vector<VoxelCoord> out;
        for (const auto& [c, v] : entries_)
            if (std::abs(v.d) < truncation_) out.push_back(c);
        std::sort(out.begin(), out.end());
        return out;
    }

    /// Coordinates with the observed flag set (d > -truncation).
    std::vector<VoxelCoord> observed_coords() const {
        std::vector<VoxelCoord> out;
        for (const auto& [c, v] : entries_)
            if (v.observed) out.push_back(c);
        std::sort(out.begin(), out.end());
        return out;
    }

    /// Copy restricted to observed entries.
    SparseTSDF observed_only() const {
        SparseTSDF out(voxel_size_, truncation_);
        for (const auto& [c, v] : entries_)
            if (v.observed) out.set(c, v);
        return out;
    }

    std::optional<Box3i> bounds() const {
        if (entries_.empty()) return std::nullopt;
        VoxelCoord lo{INT32_MAX, INT32_MAX, INT32_MAX, 0}, hi{INT32_MIN, INT32_MIN, INT32_MIN, 0};
        for (const auto& [c, v] : entries_) {
            lo.x = std::min(lo.x, c.x); lo.y = std::min(lo.y, c.y); lo.z = std::min(lo.z, c.z);
            hi.x = std::max(hi.x, c.x); hi.y = std::max(hi.y, c.y); hi.z = std::max(hi.z, c.z);
        }
        return Box3i{lo, hi.x - lo.x + 1, hi.y - lo.y + 1, hi.z - lo.z + 1};
    }

private:
    float voxel_size_;
    float truncation_;
    Map entries_;
};

}  // namespace sgnn::grid
