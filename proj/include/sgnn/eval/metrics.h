#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "sgnn/grid/dense_grid.h"
#include "sgnn/grid/sparse_tsdf.h"
#include "sgnn/synth/scene.h"

namespace sgnn::eval {

struct MetricsReport {
    double l1_entire_volume = 0.0;
    double l1_unobserved = 0.0;
    double l1_target = 0.0;
    double l1_predicted = 0.0;
    int64_t count_entire = 0;
    int64_t count_unobserved = 0;
    int64_t count_target = 0;
    int64_t count_predicted = 0;

    std::string csv() const;
    std::string table() const;
};

/// Masked unsigned l1 metrics over the box: both grids densified with fill
/// +3 and globally truncated to |d| <= 3; voxels unobserved in the target
/// (absent or d <= -truncation) are excluded from every metric. The
/// unobserved-space region is input-relative (voxels not observed in the
/// input scan) when an input is supplied; otherwise it falls back to the
/// observed target cells Chebyshev-adjacent to unobserved target cells.
/// target/predicted regions use the |d| <= 1 nearby threshold.
MetricsReport l1_metrics(const grid::SparseTSDF& pred, const grid::SparseTSDF& target, const grid::CropSpec& box,
                         const grid::SparseTSDF* input = nullptr);

/// Fraction of ground-truth surface voxels (|scene SDF| < voxel_size at the
/// lattice point) that are not covered by the input scan's surface but are
/// covered by the prediction's, both within a Chebyshev distance of 1.
/// Surface membership in a grid means an entry with |d| <= 1.
double completion_recall(const grid::SparseTSDF& pred, const synth::Scene& scene, const grid::SparseTSDF& input);

}  // namespace sgnn::eval
