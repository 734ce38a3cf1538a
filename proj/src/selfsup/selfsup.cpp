#include "sgnn/selfsup/selfsup.h"

#include <cmath>

#include "sgnn/grid/grid_ops.h"
#include "sgnn/util/rng.h"

namespace sgnn::selfsup {

using grid::CropSpec;
using grid::SparseTSDF;
using grid::TsdfVoxel;
using grid::VoxelCoord;
using synth::DepthFrame;

std::vector<DepthFrame> subsample_frames(const std::vector<DepthFrame>& frames, double fraction, uint64_t seed) {
    if (frames.empty()) throw std::invalid_argument("subsample_frames: empty frame list");
    if (!(fraction > 0.0 && fraction <= 1.0)) throw std::invalid_argument("subsample_frames: fraction out of (0,1]");
    const size_t n = frames.size();
    const size_t k = std::max<size_t>(1, static_cast<size_t>(std::lround(fraction * static_cast<double>(n))));
    if (k >= n) return frames;
    util::Rng rng(util::derive_seed(seed, 0x50b5));
    const auto idx = rng.sample_indices(n, k);
    std::vector<DepthFrame> out;
    out.reserve(k);
    for (size_t i : idx) out.push_back(frames[i]);
    return out;
}

ScanPair build_pair(const std::vector<DepthFrame>& frames, double input_fraction, double target_fraction,
                    const fusion::FusionConfig& cfg, uint64_t seed) {
    if (!(input_fraction > 0.0 && input_fraction <= target_fraction && target_fraction <= 1.0))
        throw std::invalid_argument("build_pair: need 0 < input_fraction <= target_fraction <= 1");
    const auto target_frames = subsample_frames(frames, target_fraction, util::derive_seed(seed, 1));
    const double relative = input_fraction / target_fraction;
    const auto input_frames = relative >= 1.0
                                  ? target_frames
                                  : subsample_frames(target_frames, relative, util::derive_seed(seed, 2));
    ScanPair pair;
    pair.target = fusion::fuse(target_frames, cfg);
    pair.input = fusion::fuse(input_frames, cfg);
    pair.mask = pair.target.observed_coords();
    return pair;
}

ScanPair random_crop_pair(const ScanPair& p, int32_t dx, int32_t dy, int32_t dz, uint64_t seed,
                          int min_surface_voxels) {
    if (dx <= 0 || dy <= 0 || dz <= 0) throw std::invalid_argument("random_crop_pair: non-positive dims");
    const auto band = p.input.surface_coords();
    if (band.empty()) throw CropError("random_crop_pair: input has no surface voxels");

    VoxelCoord lo = band.front(), hi = band.front();
    for (const auto& c : band) {
        lo.x = std::min(lo.x, c.x); lo.y = std::min(lo.y, c.y); lo.z = std::min(lo.z, c.z);
        hi.x = std::max(hi.x, c.x); hi.y = std::max(hi.y, c.y); hi.z = std::max(hi.z, c.z);
    }

    util::Rng rng(util::derive_seed(seed, 0xc40b));
    constexpr int kMaxAttempts = 512;
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
        const VoxelCoord origin{
            static_cast<int32_t>(rng.uniform_int(lo.x - dx + 1, hi.x)),
            static_cast<int32_t>(rng.uniform_int(lo.y - dy + 1, hi.y)),
            static_cast<int32_t>(rng.uniform_int(lo.z - dz + 1, hi.z)), 0};
        const grid::Box3i box{origin, dx, dy, dz};
        int count = 0;
        for (const auto& c : band) {
            if (box.contains(c) && ++count >= min_surface_voxels) break;
        }
        if (count < min_surface_voxels) continue;

        const CropSpec spec{origin, dx, dy, dz};
        ScanPair out;
        out.input = grid::crop(p.input, spec);
        out.target = grid::crop(p.target, spec);
        out.mask.reserve(p.mask.size());
        for (const auto& c : p.mask)
            if (box.contains(c)) out.mask.push_back(c - origin);
        std::sort(out.mask.begin(), out.mask.end());
        return out;
    }
    throw CropError("random_crop_pair: no valid crop position found");
}

ScanPair crops_baseline_pair(const SparseTSDF& target, uint64_t seed) {
    if (target.empty()) throw std::invalid_argument("crops_baseline_pair: empty target");
    util::Rng rng(util::derive_seed(seed, 0xab1a7e));
    const auto bounds = *target.bounds();

    const int n_boxes = static_cast<int>(rng.uniform_int(1, 4));
    std::vector<grid::Box3i> removed;
    removed.reserve(n_boxes);
    for (int i = 0; i < n_boxes; ++i) {
        grid::Box3i b;
        b.dx = std::max<int32_t>(1, static_cast<int32_t>(std::lround(rng.uniform(0.1, 0.4) * bounds.dx)));
        b.dy = std::max<int32_t>(1, static_cast<int32_t>(std::lround(rng.uniform(0.1, 0.4) * bounds.dy)));
        b.dz = std::max<int32_t>(1, static_cast<int32_t>(std::lround(rng.uniform(0.1, 0.4) * bounds.dz)));
        b.origin = VoxelCoord{
            static_cast<int32_t>(bounds.origin.x + rng.uniform_int(0, std::max<int32_t>(0, bounds.dx - b.dx))),
            static_cast<int32_t>(bounds.origin.y + rng.uniform_int(0, std::max<int32_t>(0, bounds.dy - b.dy))),
            static_cast<int32_t>(bounds.origin.z + rng.uniform_int(0, std::max<int32_t>(0, bounds.dz - b.dz))), 0};
        removed.push_back(b);
    }

    ScanPair pair;
    pair.target = target;
    pair.input = SparseTSDF(target.voxel_size(), target.truncation());
    for (const auto& [c, v] : target.entries()) {
        bool inside = false;
        for (const auto& b : removed)
            if (b.contains(c)) { inside = true; break; }
        if (!inside) pair.input.set(c, v);
    }
    pair.mask = pair.target.observed_coords();
    return pair;
}

}  // namespace sgnn::selfsup
