#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "daevi/conv.hpp"
#include "daevi/ops.hpp"
#include "daevi/params.hpp"

namespace daevi {

// Which hinge form the critic loss uses. Verbatim is relu(1-real)+relu(fake);
// Standard is the symmetric relu(1-real)+relu(1+fake).
enum class HingeVariant {
    Verbatim,
    Standard,
};

// One spectral-normalized 3-D convolution. u persists the left singular
// vector estimate; sigma caches the estimate from the last refresh and is
// treated as a constant when gradients flow.
template <typename T>
struct SnConv3d {
    Tensor<T> w;
    Tensor<T> b;
    Tensor<T> u;
    T sigma = T(1);
    Conv3dSpec spec;
};

// One power iteration on w viewed as a Cout×(rest) matrix: refreshes u in
// place and caches the new leading-singular-value estimate.
template <typename T>
T sn_refresh(SnConv3d<T>& layer) {
    const int rows = layer.w.dim(0);
    const std::int64_t cols = layer.w.size() / rows;
    const T* w = layer.w.data();
    T* u = layer.u.data();

    std::vector<double> v(static_cast<std::size_t>(cols), 0.0);
    for (int i = 0; i < rows; ++i) {
        const double ui = static_cast<double>(u[i]);
        const T* wrow = w + static_cast<std::int64_t>(i) * cols;
        for (std::int64_t j = 0; j < cols; ++j) {
            v[static_cast<std::size_t>(j)] += ui * static_cast<double>(wrow[j]);
        }
    }
    double vn = 0.0;
    for (double x : v) vn += x * x;
    vn = std::sqrt(vn);
    if (vn < 1e-20) {
        layer.sigma = T(0);
        return layer.sigma;
    }
    for (double& x : v) x /= vn;

    std::vector<double> un(static_cast<std::size_t>(rows), 0.0);
    for (int i = 0; i < rows; ++i) {
        const T* wrow = w + static_cast<std::int64_t>(i) * cols;
        double acc = 0.0;
        for (std::int64_t j = 0; j < cols; ++j) {
            acc += static_cast<double>(wrow[j]) * v[static_cast<std::size_t>(j)];
        }
        un[static_cast<std::size_t>(i)] = acc;
    }
    double sn = 0.0;
    for (double x : un) sn += x * x;
    sn = std::sqrt(sn);
    if (sn < 1e-20) {
        layer.sigma = T(0);
        return layer.sigma;
    }
    for (int i = 0; i < rows; ++i) {
        u[i] = static_cast<T>(un[static_cast<std::size_t>(i)] / sn);
    }
    layer.sigma = static_cast<T>(sn);
    return layer.sigma;
}

// w / max(sigma, floor), recorded on the tape when w is watched.
template <typename T>
Tensor<T> sn_weight(SnConv3d<T>& layer) {
    const T denom = std::max(layer.sigma, static_cast<T>(1e-8));
    return scale_add(layer.w, T(1) / denom, T(0));
}

// Six spectral-normalized spatio-temporal conv blocks with leaky-relu, then a
// 1x1x1 scoring head averaged into a single unbounded real.
template <typename T>
struct DedParams {
    std::vector<SnConv3d<T>> blocks;
    SnConv3d<T> head;
    T lrelu_alpha = static_cast<T>(0.2);

    static DedParams init(int in_channels, SplitMix64& rng,
                          std::vector<int> channels = {16, 32, 64, 64, 64, 64}) {
        DedParams p;
        int prev = in_channels;
        for (std::size_t i = 0; i < channels.size(); ++i) {
            SnConv3d<T> layer;
            ConvParams<T> cp = init_conv<T>({channels[i], prev, 3, 3, 3}, rng);
            layer.w = cp.w;
            layer.b = cp.b;
            layer.u = Tensor<T>(Shape{channels[i]});
            layer.u.fill_normal(rng, T(0), T(1));
            layer.spec.pad_t = layer.spec.pad_h = layer.spec.pad_w = 1;
            if (i >= 1) {
                layer.spec.stride_h = layer.spec.stride_w = 2;
            }
            prev = channels[i];
            p.blocks.push_back(std::move(layer));
        }
        ConvParams<T> hp = init_conv<T>({1, prev, 1, 1, 1}, rng);
        p.head.w = hp.w;
        p.head.b = hp.b;
        p.head.u = Tensor<T>(Shape{1});
        p.head.u.fill_normal(rng, T(0), T(1));

        // long warm-up so the persisted estimates start converged; training
        // then tracks the slowly moving weights with one iteration per step
        for (int warm = 0; warm < 50; ++warm) {
            for (auto& layer : p.blocks) sn_refresh(layer);
            sn_refresh(p.head);
        }
        return p;
    }

    // One power iteration per layer; call once per optimization step.
    void refresh_spectral_norm() {
        for (auto& layer : blocks) sn_refresh(layer);
        sn_refresh(head);
    }

    template <typename Fn>
    void visit_trainable(const std::string& prefix, Fn&& fn) {
        for (std::size_t i = 0; i < blocks.size(); ++i) {
            fn(prefix + ".b" + std::to_string(i) + ".w", blocks[i].w);
            fn(prefix + ".b" + std::to_string(i) + ".b", blocks[i].b);
        }
        fn(prefix + ".head.w", head.w);
        fn(prefix + ".head.b", head.b);
    }

    template <typename Fn>
    void visit_buffers(const std::string& prefix, Fn&& fn) {
        for (std::size_t i = 0; i < blocks.size(); ++i) {
            fn(prefix + ".b" + std::to_string(i) + ".u", blocks[i].u);
        }
        fn(prefix + ".head.u", head.u);
    }
};

// Scores one RGB-D clip (T×4×H×W: three frame channels plus one depth
// channel, both in [0,1]). Returns an unbounded scalar. With frozen_weights
// the parameters act as constants even while watched on a tape, so gradients
// flow only to the input (the generator-update path).
template <typename T>
Tensor<T> discriminate(const Tensor<T>& rgbd, DedParams<T>& params, bool frozen_weights = false) {
    if (rgbd.ndim() != 4 || rgbd.dim(1) != params.blocks.front().w.dim(1)) {
        throw ContractError("discriminate: expected T×" + std::to_string(params.blocks.front().w.dim(1)) +
                            "×H×W input, got " + shape_str(rgbd.shape()));
    }
    const int t = rgbd.dim(0), c = rgbd.dim(1), h = rgbd.dim(2), w = rgbd.dim(3);
    auto x = reshape(permute(rgbd, {1, 0, 2, 3}), {1, c, t, h, w});
    for (auto& layer : params.blocks) {
        const T denom = std::max(layer.sigma, static_cast<T>(1e-8));
        auto wbar = frozen_weights ? scale_add(layer.w.detached(), T(1) / denom, T(0)) : sn_weight(layer);
        auto bias = frozen_weights ? layer.b.detached() : layer.b;
        x = leaky_relu(conv3d(x, wbar, bias, layer.spec), params.lrelu_alpha);
    }
    const T hd = std::max(params.head.sigma, static_cast<T>(1e-8));
    auto hbar = frozen_weights ? scale_add(params.head.w.detached(), T(1) / hd, T(0)) : sn_weight(params.head);
    auto hbias = frozen_weights ? params.head.b.detached() : params.head.b;
    auto patch_scores = conv3d(x, hbar, hbias, params.head.spec);
    return reduce_mean(patch_scores);
}

// Critic hinge loss over batches of scores, mean over each batch.
template <typename T>
Tensor<T> loss_ded(const Tensor<T>& score_real, const Tensor<T>& score_fake,
                   HingeVariant variant = HingeVariant::Verbatim) {
    auto real_term = reduce_mean(relu(scale_add(score_real, T(-1), T(1))));
    Tensor<T> fake_arg = variant == HingeVariant::Verbatim
                             ? score_fake
                             : scale_add(score_fake, T(1), T(1));
    auto fake_term = reduce_mean(relu(fake_arg));
    return add(real_term, fake_term);
}

// Generator adversarial term: negative mean critic score of generated clips.
template <typename T>
Tensor<T> loss_gen(const Tensor<T>& score_fake) {
    return neg(reduce_mean(score_fake));
}

} // namespace daevi
