#pragma once

#include <stdexcept>
#include <vector>

#include "sgnn/fusion/fusion.h"
#include "sgnn/grid/dense_grid.h"
#include "sgnn/grid/sparse_tsdf.h"

namespace sgnn::selfsup {

/// One self-supervision sample: a more-incomplete input scan, a
/// less-incomplete target scan, and the coordinates where the loss applies
/// (target entries with d > -truncation, i.e. the observed set).
struct ScanPair {
    grid::SparseTSDF input;
    grid::SparseTSDF target;
    std::vector<grid::VoxelCoord> mask;  // sorted
};

/// Raised when no valid crop position exists; callers skip the sample.
struct CropError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Uniform subset without replacement of size round(fraction * n), at least
/// one frame, original ordering preserved. Deterministic per seed.
std::vector<synth::DepthFrame> subsample_frames(const std::vector<synth::DepthFrame>& frames, double fraction,
                                                uint64_t seed);

/// target = fuse(subsample(frames, target_fraction)); input fuses a nested
/// subset of the target's frames at the relative rate
/// input_fraction / target_fraction.
ScanPair build_pair(const std::vector<synth::DepthFrame>& frames, double input_fraction, double target_fraction,
                    const fusion::FusionConfig& cfg, uint64_t seed);

/// Crops input, target and mask with one box whose origin is sampled
/// uniformly among positions where the input crop contains at least
/// min_surface_voxels voxels within truncation. Throws CropError when no
/// valid position is found.
ScanPair random_crop_pair(const ScanPair& p, int32_t dx, int32_t dy, int32_t dz, uint64_t seed,
                          int min_surface_voxels = 100);

/// Comparator for the crop-based self-supervision ablation: input is the
/// target minus 1-4 random box regions (10-40% of the extent per axis), mask
/// is the full observed target set.
ScanPair crops_baseline_pair(const grid::SparseTSDF& target, uint64_t seed);

}  // namespace sgnn::selfsup
