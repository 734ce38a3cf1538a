#pragma once

namespace sgnn::mesh {

// Standard marching cubes tables (Lorensen & Cline case enumeration,
// Bourke edge/corner layout).
extern const int kEdgeTable[256];
extern const int kTriTable[256][16];

}  // namespace sgnn::mesh
