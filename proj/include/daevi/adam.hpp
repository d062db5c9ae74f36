#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "daevi/tensor.hpp"

namespace daevi {

template <typename T>
struct AdamConfig {
    T lr = static_cast<T>(1e-4);
    T beta1 = static_cast<T>(0);
    T beta2 = static_cast<T>(0.99);
    T eps = static_cast<T>(1e-8);
};

// First/second-moment accumulators aligned with one parameter list.
template <typename T>
struct AdamState {
    std::vector<Tensor<T>> m;
    std::vector<Tensor<T>> v;
    std::int64_t step = 0;

    void init(const std::vector<Tensor<T>*>& params) {
        m.clear();
        v.clear();
        for (const Tensor<T>* p : params) {
            m.emplace_back(p->shape());
            v.emplace_back(p->shape());
        }
        step = 0;
    }
};

// Bias-corrected Adam update, in place on the parameter storage. Internal
// arithmetic runs in double so float parameters get a well-rounded update.
template <typename T>
void adam_step(const std::vector<Tensor<T>*>& params, const std::vector<Tensor<T>>& grads,
               AdamState<T>& state, const AdamConfig<T>& cfg) {
    if (params.size() != grads.size() || params.size() != state.m.size() || params.size() != state.v.size()) {
        throw ContractError("adam_step: parameter/gradient/state counts differ");
    }
    state.step += 1;
    const double b1 = static_cast<double>(cfg.beta1);
    const double b2 = static_cast<double>(cfg.beta2);
    const double corr1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double corr2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    const double lr = static_cast<double>(cfg.lr);
    const double eps = static_cast<double>(cfg.eps);
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Tensor<T>& p = *params[pi];
        const Tensor<T>& g = grads[pi];
        Tensor<T>& mm = state.m[pi];
        Tensor<T>& vv = state.v[pi];
        if (g.shape() != p.shape() || mm.shape() != p.shape() || vv.shape() != p.shape()) {
            throw ContractError("adam_step: shape mismatch for parameter " + std::to_string(pi));
        }
        T* pd = p.data();
        const T* gd = g.data();
        T* md = mm.data();
        T* vd = vv.data();
        for (std::int64_t i = 0; i < p.size(); ++i) {
            const double gi = static_cast<double>(gd[i]);
            const double mi = b1 * static_cast<double>(md[i]) + (1.0 - b1) * gi;
            const double vi = b2 * static_cast<double>(vd[i]) + (1.0 - b2) * gi * gi;
            md[i] = static_cast<T>(mi);
            vd[i] = static_cast<T>(vi);
            const double mhat = mi / corr1;
            const double vhat = vi / corr2;
            pd[i] = static_cast<T>(static_cast<double>(pd[i]) - lr * mhat / (std::sqrt(vhat) + eps));
        }
    }
}

} // namespace daevi
