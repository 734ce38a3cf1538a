#pragma once

#include <string>
#include <vector>

#include "sgnn/grid/sparse_tsdf.h"

namespace sgnn::grid {

// Binary format: magic "SGNN-TSDF1", little-endian; f32 voxel_size;
// f32 truncation; u64 count; then count records of
// (i32 x, i32 y, i32 z, f32 d, f32 w, u8 observed). Records are written in
// sorted coordinate order so files are byte-reproducible.

void write_tsdf(const std::string& path, const SparseTSDF& s);
SparseTSDF read_tsdf(const std::string& path);

/// Mask files reuse the TSDF format: entries are the mask coordinates,
/// d is unused (0), w = 1, observed = true.
void write_mask(const std::string& path, const std::vector<VoxelCoord>& mask, float voxel_size, float truncation);
std::vector<VoxelCoord> read_mask(const std::string& path);

}  // namespace sgnn::grid
