#pragma once

#include <cmath>
#include <string>

#include "daevi/tensor.hpp"

namespace daevi {

// Weight + bias of one convolution. Bias may be empty for bias-free layers.
template <typename T>
struct ConvParams {
    Tensor<T> w;
    Tensor<T> b;
};

// Fan-in scaled normal init for a conv weight of any rank >= 2
// (Cout first, remaining axes form the receptive field).
template <typename T>
ConvParams<T> init_conv(Shape w_shape, SplitMix64& rng, bool bias = true) {
    ConvParams<T> p;
    std::int64_t fan_in = 1;
    for (std::size_t d = 1; d < w_shape.size(); ++d) {
        fan_in *= w_shape[d];
    }
    const int cout = w_shape[0];
    p.w = Tensor<T>(std::move(w_shape));
    p.w.fill_normal(rng, T(0), static_cast<T>(std::sqrt(2.0 / static_cast<double>(fan_in))));
    if (bias) {
        p.b = Tensor<T>(Shape{cout});
    }
    return p;
}

// Visits (name, tensor) for every trainable entry of a ConvParams.
template <typename T, typename Fn>
void visit_conv(ConvParams<T>& p, const std::string& prefix, Fn&& fn) {
    fn(prefix + ".w", p.w);
    if (!p.b.empty()) {
        fn(prefix + ".b", p.b);
    }
}

} // namespace daevi
