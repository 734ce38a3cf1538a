#pragma once

#include <deque>
#include <functional>
#include <memory>
#include <vector>

#include "sgnn/nn/coord_set.h"

namespace sgnn::nn {

/// Batched sparse feature tensor: one feature row of `channels` scalars per
/// coordinate, rows in the coordinate set's sorted order.
template <class T>
struct SparseNode {
    std::shared_ptr<const CoordSet> cs;
    int channels = 0;
    std::vector<T> val;
    std::vector<T> grad;

    int rows() const { return cs->size(); }
};

/// Dense feature tensor over a box of voxels at some hierarchy stride.
/// Layout: index(b, c, ix, iy, iz) = ((b*C + c)*dz + iz)*dy*dx + iy*dx + ix
/// (x fastest). origin is the absolute voxel coordinate of cell (0,0,0).
template <class T>
struct DenseNode {
    int b = 0, c = 0, dx = 0, dy = 0, dz = 0;
    VoxelCoord origin;
    std::vector<T> val;
    std::vector<T> grad;

    size_t spatial() const { return static_cast<size_t>(dx) * dy * dz; }
    size_t count() const { return static_cast<size_t>(b) * c * spatial(); }
    size_t index(int bb, int cc, int ix, int iy, int iz) const {
        return ((static_cast<size_t>(bb) * c + cc) * dz + iz) * dy * dx + static_cast<size_t>(iy) * dx + ix;
    }
    bool contains(const VoxelCoord& v) const {
        return v.batch >= 0 && v.batch < b && v.x >= origin.x && v.x < origin.x + dx && v.y >= origin.y &&
               v.y < origin.y + dy && v.z >= origin.z && v.z < origin.z + dz;
    }
};

template <class T>
struct ScalarNode {
    T val = T(0);
    T grad = T(0);
};

/// Arena for one forward/backward pass. Node addresses are stable; backward
/// closures run in reverse creation order. Grads are zero-initialized at
/// node creation, so call backward at most once per tape.
template <class T>
class Tape {
public:
    SparseNode<T>* new_sparse(std::shared_ptr<const CoordSet> cs, int channels) {
        auto& n = sparse_.emplace_back();
        n.cs = std::move(cs);
        n.channels = channels;
        n.val.assign(static_cast<size_t>(n.cs->size()) * channels, T(0));
        n.grad.assign(n.val.size(), T(0));
        return &n;
    }

    DenseNode<T>* new_dense(int b, int c, int dx, int dy, int dz, VoxelCoord origin, T fill = T(0)) {
        auto& n = dense_.emplace_back();
        n.b = b; n.c = c; n.dx = dx; n.dy = dy; n.dz = dz; n.origin = origin;
        n.val.assign(n.count(), fill);
        n.grad.assign(n.count(), T(0));
        return &n;
    }

    ScalarNode<T>* new_scalar(T value = T(0)) {
        auto& n = scalar_.emplace_back();
        n.val = value;
        return &n;
    }

    void push_op(std::function<void()> backward_fn) { ops_.push_back(std::move(backward_fn)); }

    void backward(ScalarNode<T>& loss) {
        loss.grad = T(1);
        for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
    }

private:
    std::deque<SparseNode<T>> sparse_;
    std::deque<DenseNode<T>> dense_;
    std::deque<ScalarNode<T>> scalar_;
    std::vector<std::function<void()>> ops_;
};

}  // namespace sgnn::nn
