#pragma once

#include <vector>

#include "sgnn/grid/sparse_tsdf.h"
#include "sgnn/synth/camera.h"

namespace sgnn::fusion {

struct FusionConfig {
    float voxel_size = 0.02f;   // meters
    float truncation = 3.0f;    // voxel units
    float max_depth = 10.0f;    // meters
};

/// Projective TSDF update of one depth frame (Curless-Levoy weighted
/// averaging, per-frame weight 1). A voxel is updated when its lattice point
/// projects to a valid pixel (nearest pixel via lround, depth D in
/// (0, max_depth]) with camera z > 0 and D - z > -2*truncation*voxel_size;
/// the sample is clamp((D - z)/voxel_size, -truncation, +truncation). Voxels
/// between truncation and 2*truncation behind the surface therefore store
/// exactly -truncation and carry observed = false; the observed flag is
/// recomputed as d > -truncation after every update.
void integrate(grid::SparseTSDF& g, const synth::DepthFrame& frame, const FusionConfig& cfg);

/// Sequential integrate over frames in list order.
grid::SparseTSDF fuse(const std::vector<synth::DepthFrame>& frames, const FusionConfig& cfg);

}  // namespace sgnn::fusion
