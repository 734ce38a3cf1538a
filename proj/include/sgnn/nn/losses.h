#pragma once

#include <cmath>

#include "sgnn/grid/sparse_tsdf.h"
#include "sgnn/nn/ops.h"

namespace sgnn::nn {

using grid::CoordSetU;
using grid::SparseTSDF;

/// Symmetric log transform t(d) = sign(d) * ln(1 + |d|).
template <class T>
T log_tsdf(T d) {
    const T m = std::log1p(std::abs(d));
    return d < T(0) ? -m : m;
}

/// Mean |t(pred) - t(target)| over pred coordinates inside the mask; other
/// coordinates contribute nothing and receive zero gradient. Masked
/// coordinates missing from the target read as +truncation (observed-empty
/// space). Per-sample partial sums are combined in value order.
template <class T>
ScalarNode<T>* masked_l1_logtsdf(Tape<T>& tape, SparseNode<T>* pred, const SparseTSDF& target,
                                 const CoordSetU& mask) {
    if (pred->channels != 1) throw std::invalid_argument("masked_l1_logtsdf: prediction must be 1-channel");
    const int n = pred->rows();
    auto info = std::make_shared<std::vector<std::pair<int32_t, T>>>();  // (row, target d)
    std::vector<double> parts;
    const auto& ranges = pred->cs->batch_ranges();
    for (const auto& [beg, end] : ranges) {
        double part = 0.0;
        for (int r = beg; r < end; ++r) {
            const auto& c = pred->cs->coords()[r];
            if (!mask.contains(c)) continue;
            const grid::TsdfVoxel* tv = target.find(c);
            const T td = tv ? static_cast<T>(tv->d) : static_cast<T>(target.truncation());
            info->emplace_back(r, td);
            part += std::abs(static_cast<double>(log_tsdf(pred->val[r]) - log_tsdf(td)));
        }
        parts.push_back(part);
    }
    const size_t count = info->size();
    ScalarNode<T>* loss = tape.new_scalar(count == 0 ? T(0) : static_cast<T>(combine_partials(std::move(parts)) /
                                                                             static_cast<double>(count)));
    tape.push_op([pred, info, count, loss]() {
        if (count == 0) return;
        const T scale = loss->grad / static_cast<T>(count);
        for (const auto& [r, td] : *info) {
            const T p = pred->val[r];
            const T diff = log_tsdf(p) - log_tsdf(td);
            const T sgn = diff > T(0) ? T(1) : (diff < T(0) ? T(-1) : T(0));
            pred->grad[r] += scale * sgn / (T(1) + std::abs(p));
        }
    });
    (void)n;
    return loss;
}

/// Numerically stable binary cross entropy with logits, mean over pred
/// coordinates inside the mask; target occupancy is 1 for coordinates in
/// `occupied`, 0 otherwise. Zero gradient outside the mask.
template <class T>
ScalarNode<T>* bce_logits(Tape<T>& tape, SparseNode<T>* pred, const CoordSetU& occupied, const CoordSetU& mask) {
    if (pred->channels != 1) throw std::invalid_argument("bce_logits: prediction must be 1-channel");
    auto info = std::make_shared<std::vector<std::pair<int32_t, T>>>();  // (row, target y)
    std::vector<double> parts;
    const auto& ranges = pred->cs->batch_ranges();
    for (const auto& [beg, end] : ranges) {
        double part = 0.0;
        for (int r = beg; r < end; ++r) {
            const auto& c = pred->cs->coords()[r];
            if (!mask.contains(c)) continue;
            const T y = occupied.contains(c) ? T(1) : T(0);
            info->emplace_back(r, y);
            const double x = static_cast<double>(pred->val[r]);
            part += std::max(x, 0.0) - x * static_cast<double>(y) + std::log1p(std::exp(-std::abs(x)));
        }
        parts.push_back(part);
    }
    const size_t count = info->size();
    ScalarNode<T>* loss = tape.new_scalar(count == 0 ? T(0) : static_cast<T>(combine_partials(std::move(parts)) /
                                                                             static_cast<double>(count)));
    tape.push_op([pred, info, count, loss]() {
        if (count == 0) return;
        const T scale = loss->grad / static_cast<T>(count);
        for (const auto& [r, y] : *info) pred->grad[r] += scale * (stable_sigmoid(pred->val[r]) - y);
    });
    return loss;
}

}  // namespace sgnn::nn
