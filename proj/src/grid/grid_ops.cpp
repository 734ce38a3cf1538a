#include "sgnn/grid/grid_ops.h"

#include <cmath>
#include <stdexcept>

namespace sgnn::grid {

DenseGrid densify(const SparseTSDF& s, const CropSpec& spec, float fill) {
    if (spec.dx <= 0 || spec.dy <= 0 || spec.dz <= 0) throw std::invalid_argument("densify: non-positive dims");
    DenseGrid g(spec.origin, spec.dx, spec.dy, spec.dz, s.voxel_size(), 1, fill);
    for (const auto& [c, v] : s.entries()) {
        if (g.contains(c)) g.at(c.x - spec.origin.x, c.y - spec.origin.y, c.z - spec.origin.z) = v.d;
    }
    return g;
}

SparseTSDF sparsify(const DenseGrid& g, float truncation) {
    if (g.channels() != 1) throw std::invalid_argument("sparsify: grid must have one channel");
    SparseTSDF out(g.voxel_size(), truncation);
    for (int32_t iz = 0; iz < g.dz(); ++iz)
        for (int32_t iy = 0; iy < g.dy(); ++iy)
            for (int32_t ix = 0; ix < g.dx(); ++ix) {
                const float v = g.at(ix, iy, iz);
                if (std::abs(v) < truncation) {
                    const VoxelCoord c{g.origin().x + ix, g.origin().y + iy, g.origin().z + iz, g.origin().batch};
                    out.set(c, TsdfVoxel{v, 1.0f, true});
                }
            }
    return out;
}

SparseTSDF crop(const SparseTSDF& s, const CropSpec& spec) {
    if (spec.dx <= 0 || spec.dy <= 0 || spec.dz <= 0) throw std::invalid_argument("crop: non-positive dims");
    SparseTSDF out(s.voxel_size(), s.truncation());
    const Box3i box = spec.box();
    for (const auto& [c, v] : s.entries()) {
        if (box.contains(c)) out.set(c - spec.origin, v);
    }
    return out;
}

namespace {

SparseTSDF halve(const SparseTSDF& s) {
    SparseTSDF out(s.voxel_size() * 2.0f, s.truncation());
    // winner child per parent, for the min-|d| lex tie-break
    std::unordered_map<VoxelCoord, VoxelCoord, VoxelCoordHash> winner;
    for (const auto& [c, v] : s.entries()) {
        const VoxelCoord p = parent_coord(c);
        auto it = out.entries().find(p);
        if (it == out.entries().end()) {
            out.set(p, v);
            winner.emplace(p, c);
        } else {
            TsdfVoxel& pv = it->second;
            VoxelCoord& wc = winner[p];
            const float cur = std::abs(pv.d);
            const float cand = std::abs(v.d);
            if (cand < cur || (cand == cur && c < wc)) {
                pv.d = v.d;
                wc = c;
            }
            pv.w += v.w;
            pv.observed = pv.observed || v.observed;
        }
    }
    return out;
}

}  // namespace

SparseTSDF downsample_target(const SparseTSDF& s, int factor) {
    if (factor < 2 || (factor & (factor - 1)) != 0)
        throw std::invalid_argument("downsample_target: factor must be a power of two >= 2");
    SparseTSDF out = halve(s);
    for (int f = factor / 2; f > 1; f /= 2) out = halve(out);
    return out;
}

}  // namespace sgnn::grid
