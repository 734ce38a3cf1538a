#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "sgnn/grid/sparse_tsdf.h"

namespace sgnn::mesh {

struct TriangleMesh {
    std::vector<std::array<double, 3>> vertices;   // meters
    std::vector<std::array<uint32_t, 3>> triangles;

    double surface_area() const;
    /// true when every edge is shared by exactly two triangles
    bool is_closed_manifold() const;
};

/// Isosurface at d = 0. Iterates unit cubes with at least one corner stored
/// in s (sorted order, so output is deterministic); missing corners read as
/// +truncation. Linear interpolation of zero crossings; vertices are welded
/// across cubes on shared edges.
TriangleMesh marching_cubes(const grid::SparseTSDF& s);

/// ASCII PLY with vertex and face elements.
void write_ply(const std::string& path, const TriangleMesh& mesh);

}  // namespace sgnn::mesh
