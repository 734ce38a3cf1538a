#pragma once

#include <cstdint>
#include <vector>

#include "sgnn/synth/camera.h"
#include "sgnn/synth/scene.h"

namespace sgnn::synth {

/// Deterministic per seed: a floor plane at z = 0, 2-4 perimeter walls and
/// 2-6 furniture boxes/spheres inside a 3-6 m square footprint.
Scene make_room_scene(uint64_t seed);

/// Sphere-traced z-depth raster. Step tolerance 1e-4 m, max range 10 m,
/// misses are 0.
DepthFrame render_depth(const Scene& scene, const Eigen::Matrix4d& pose, const CameraIntrinsics& intrinsics);

/// n camera-to-world poses with positions in free space (scene SDF > 0.3 m)
/// looking toward the scene interior. Deterministic per seed.
std::vector<Eigen::Matrix4d> sample_trajectory(const Scene& scene, int n, uint64_t seed);

/// Default desk-scale intrinsics used by the data generator.
CameraIntrinsics default_intrinsics();

}  // namespace sgnn::synth
