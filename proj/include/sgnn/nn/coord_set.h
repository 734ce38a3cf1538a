#pragma once

#include <algorithm>
#include <memory>
#include <unordered_map>
#include <vector>

#include "sgnn/grid/voxel_coord.h"

namespace sgnn::nn {

using grid::VoxelCoord;
using grid::VoxelCoordHash;

/// Immutable sorted coordinate list with a hash index, shared between all
/// tensors on the same submanifold. The 27-neighborhood table is built
/// lazily and cached; a computation graph is confined to one execution
/// context, so the cache needs no locking.
class CoordSet {
public:
    static std::shared_ptr<const CoordSet> make(std::vector<VoxelCoord> coords) {
        auto cs = std::make_shared<CoordSet>();
        std::sort(coords.begin(), coords.end());
        coords.erase(std::unique(coords.begin(), coords.end()), coords.end());
        cs->coords_ = std::move(coords);
        cs->index_.reserve(cs->coords_.size());
        for (size_t i = 0; i < cs->coords_.size(); ++i) cs->index_.emplace(cs->coords_[i], static_cast<int32_t>(i));
        cs->build_batch_ranges();
        return cs;
    }

    const std::vector<VoxelCoord>& coords() const { return coords_; }
    int size() const { return static_cast<int>(coords_.size()); }
    bool empty() const { return coords_.empty(); }

    int32_t find(const VoxelCoord& c) const {
        auto it = index_.find(c);
        return it == index_.end() ? -1 : it->second;
    }

    int batch_count() const { return static_cast<int>(batch_ranges_.size()); }
    const std::vector<std::pair<int32_t, int32_t>>& batch_ranges() const { return batch_ranges_; }

    /// Row index of each of the 27 neighbors per row, -1 when absent.
    /// Offset o = ((dx+1)*3 + (dy+1))*3 + (dz+1).
    const std::vector<int32_t>& neighbors27() const {
        if (nbr27_.empty() && !coords_.empty()) {
            nbr27_.resize(coords_.size() * 27);
            for (size_t r = 0; r < coords_.size(); ++r) {
                const VoxelCoord& c = coords_[r];
                int o = 0;
                for (int dx = -1; dx <= 1; ++dx)
                    for (int dy = -1; dy <= 1; ++dy)
                        for (int dz = -1; dz <= 1; ++dz, ++o)
                            nbr27_[r * 27 + o] = find(VoxelCoord{c.x + dx, c.y + dy, c.z + dz, c.batch});
            }
        }
        return nbr27_;
    }

    void build_batch_ranges() {
        batch_ranges_.clear();
        if (coords_.empty()) return;
        const int nb = coords_.back().batch + 1;
        batch_ranges_.assign(nb, {0, 0});
        size_t i = 0;
        for (int b = 0; b < nb; ++b) {
            const int32_t begin = static_cast<int32_t>(i);
            while (i < coords_.size() && coords_[i].batch == b) ++i;
            batch_ranges_[b] = {begin, static_cast<int32_t>(i)};
        }
    }

private:
    std::vector<VoxelCoord> coords_;
    std::unordered_map<VoxelCoord, int32_t, VoxelCoordHash> index_;
    std::vector<std::pair<int32_t, int32_t>> batch_ranges_;
    mutable std::vector<int32_t> nbr27_;
};

}  // namespace sgnn::nn
