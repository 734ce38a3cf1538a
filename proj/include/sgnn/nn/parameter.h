#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace sgnn::nn {

/// Trainable tensor with gradient and Adam state. Moments are allocated on
/// the first optimizer step; step counts are per parameter so progressively
/// introduced layers bias-correct from their own first update.
template <class T>
struct Parameter {
    std::string name;
    std::vector<int> dims;
    std::vector<T> val;
    std::vector<T> grad;
    std::vector<T> m, v;
    int64_t step = 0;

    Parameter() = default;
    Parameter(std::string n, std::vector<int> d) : name(std::move(n)), dims(std::move(d)) {
        const size_t total = std::accumulate(dims.begin(), dims.end(), size_t{1}, std::multiplies<>());
        val.assign(total, T(0));
        grad.assign(total, T(0));
    }

    size_t size() const { return val.size(); }
    void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }
};

/// Bias-corrected Adam update applied in place. Parameters with zero
/// gradient and zero moments are left bit-unchanged.
template <class T>
void adam_step(std::span<Parameter<T>* const> params, T lr, T beta1 = T(0.9), T beta2 = T(0.999),
               T eps = T(1e-8)) {
    for (Parameter<T>* p : params) {
        if (p->m.empty()) {
            p->m.assign(p->size(), T(0));
            p->v.assign(p->size(), T(0));
        }
        p->step += 1;
        const T bc1 = T(1) - std::pow(beta1, T(p->step));
        const T bc2 = T(1) - std::pow(beta2, T(p->step));
        for (size_t i = 0; i < p->size(); ++i) {
            const T g = p->grad[i];
            p->m[i] = beta1 * p->m[i] + (T(1) - beta1) * g;
            p->v[i] = beta2 * p->v[i] + (T(1) - beta2) * g * g;
            const T mhat = p->m[i] / bc1;
            const T vhat = p->v[i] / bc2;
            p->val[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

/// Batch normalization state: trainable gamma/beta plus running statistics
/// for eval mode.
template <class T>
struct BatchNorm {
    Parameter<T> gamma;
    Parameter<T> beta;
    std::vector<T> running_mean;
    std::vector<T> running_var;
    T momentum = T(0.1);
    T eps = T(1e-5);

    BatchNorm() = default;
    BatchNorm(const std::string& name, int channels)
        : gamma(name + ".gamma", {channels}), beta(name + ".beta", {channels}),
          running_mean(channels, T(0)), running_var(channels, T(1)) {
        std::fill(gamma.val.begin(), gamma.val.end(), T(1));
    }

    int channels() const { return static_cast<int>(running_mean.size()); }
};

}  // namespace sgnn::nn
