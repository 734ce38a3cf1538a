#pragma once

#include "sgnn/grid/dense_grid.h"
#include "sgnn/grid/sparse_tsdf.h"

namespace sgnn::grid {

/// Dense grid over the crop box; cells present in s take their d value,
/// everything else takes fill. Entries outside the box are dropped.
DenseGrid densify(const SparseTSDF& s, const CropSpec& spec, float fill);

/// Entries are exactly the cells with |value| < truncation, with d = value,
/// w = 1, observed = true. Requires a single-channel grid.
SparseTSDF sparsify(const DenseGrid& g, float truncation);

/// Entries of s inside the box, re-indexed relative to spec.origin.
SparseTSDF crop(const SparseTSDF& s, const CropSpec& spec);

/// Surface-preserving pooling: parent d is the child d of minimum |d|
/// (ties: lexicographically smallest child coordinate), parent w is the sum
/// of child weights, parent observed the OR. factor must be a power of two;
/// factors above 2 are applied as repeated halvings so that e.g. factor 4
/// equals two factor-2 poolings exactly, ties included.
SparseTSDF downsample_target(const SparseTSDF& s, int factor);

}  // namespace sgnn::grid
