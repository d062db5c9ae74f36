#pragma once

#include <array>
#include <cstdint>

#include "daevi/conv.hpp"
#include "daevi/ops.hpp"
#include "daevi/params.hpp"

namespace daevi {

template <typename T>
struct LossWeights {
    T depth = static_cast<T>(0.1);
    T perceptual = static_cast<T>(0.1);
    T style = static_cast<T>(250);
    T image = static_cast<T>(1);
    T adversarial = static_cast<T>(0.01);
};

// Mean absolute error, optionally restricted by a 0/1 region mask (same shape
// as pred, or N×1×H×W broadcast over channels). An empty effective region
// yields 0 and raises *empty_region. Fused forward/backward primitive.
template <typename T>
Tensor<T> l1_loss(const Tensor<T>& pred, const Tensor<T>& target,
                  const Tensor<T>* region_mask = nullptr, bool* empty_region = nullptr) {
    check_same_shape(pred.shape(), target.shape(), "l1_loss");
    if (empty_region) {
        *empty_region = false;
    }
    bool bcast = false;
    if (region_mask) {
        if (region_mask->tracked()) {
            throw ContractError("l1_loss: region mask must not require gradients");
        }
        if (region_mask->shape() == pred.shape()) {
            bcast = false;
        } else if (pred.ndim() == 4 && region_mask->ndim() == 4 && region_mask->dim(1) == 1 &&
                   region_mask->dim(0) == pred.dim(0) && region_mask->dim(2) == pred.dim(2) &&
                   region_mask->dim(3) == pred.dim(3)) {
            bcast = true;
        } else {
            throw ShapeError("l1_loss: mask shape " + shape_str(region_mask->shape()) +
                             " incompatible with " + shape_str(pred.shape()));
        }
    }
    const std::int64_t n = pred.size();
    const int channels = bcast ? pred.dim(1) : 1;
    const std::int64_t plane = bcast ? static_cast<std::int64_t>(pred.dim(2)) * pred.dim(3) : 0;
    auto weight_at = [&](std::int64_t i) -> T {
        if (!region_mask) return T(1);
        if (!bcast) return region_mask->at(i);
        const std::int64_t nc = i / plane;
        const std::int64_t pix = i % plane;
        const std::int64_t batch = nc / channels;
        return region_mask->at(batch * plane + pix);
    };

    const T* pp = pred.data();
    const T* pt = target.data();
    double num = 0.0;
    double den = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        const double w = static_cast<double>(weight_at(i));
        num += w * std::abs(static_cast<double>(pp[i]) - static_cast<double>(pt[i]));
        den += w;
    }
    if (den == 0.0) {
        if (empty_region) {
            *empty_region = true;
        }
        return Tensor<T>::scalar(T(0));
    }
    Tensor<T> out = Tensor<T>::scalar(static_cast<T>(num / den));

    if (Tape<T>* tp = tape_of(pred, target)) {
        const int np = pred.node(), nt = target.node();
        auto sp = pred.storage();
        auto st = target.storage();
        std::shared_ptr<std::vector<T>> sm = region_mask ? region_mask->storage() : nullptr;
        const T inv_den = static_cast<T>(1.0 / den);
        const bool bc = bcast;
        const int ch = channels;
        const std::int64_t pl = plane;
        tp->record(out, [np, nt, sp, st, sm, inv_den, bc, ch, pl, n](Tape<T>& t, const std::vector<T>& g) {
            auto* gp = t.grad_buffer(np);
            auto* gt = t.grad_buffer(nt);
            if (!gp && !gt) return;
            const T g0 = g[0];
            for (std::int64_t i = 0; i < n; ++i) {
                T w = T(1);
                if (sm) {
                    if (!bc) {
                        w = (*sm)[static_cast<std::size_t>(i)];
                    } else {
                        const std::int64_t batch = (i / pl) / ch;
                        w = (*sm)[static_cast<std::size_t>(batch * pl + i % pl)];
                    }
                }
                const T d = (*sp)[static_cast<std::size_t>(i)] - (*st)[static_cast<std::size_t>(i)];
                const T s = d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0));
                const T contrib = g0 * w * s * inv_den;
                if (gp) (*gp)[static_cast<std::size_t>(i)] += contrib;
                if (gt) (*gt)[static_cast<std::size_t>(i)] -= contrib;
            }
        });
    }
    return out;
}

// Frozen three-level conv pyramid used by the perceptual and style terms.
// Weights are generated from a fixed seed so every build extracts identical
// features; levels run at strides 1, 2, 4.
inline constexpr std::uint64_t kFeatureBankSeed = 0xFEEDBEADULL;

template <typename T>
struct FeatureBank {
    std::array<Tensor<T>, 3> w; // 8×3×3×3 kernels, no bias
    static constexpr int kChannels = 8;

    static FeatureBank make(std::uint64_t seed = kFeatureBankSeed) {
        SplitMix64 rng(seed);
        FeatureBank bank;
        for (auto& lw : bank.w) {
            ConvParams<T> cp = init_conv<T>({kChannels, 3, 3, 3}, rng, /*bias=*/false);
            lw = cp.w;
        }
        return bank;
    }

    std::array<Tensor<T>, 3> features(const Tensor<T>& clip) const {
        std::array<Tensor<T>, 3> out;
        const int strides[3] = {1, 2, 4};
        for (int lvl = 0; lvl < 3; ++lvl) {
            Conv2dSpec spec;
            spec.pad_h = spec.pad_w = 1;
            spec.stride_h = spec.stride_w = strides[lvl];
            out[static_cast<std::size_t>(lvl)] =
                relu(conv2d(clip, w[static_cast<std::size_t>(lvl)], Tensor<T>(), spec));
        }
        return out;
    }
};

// Mean L1 distance between bank features, averaged over the three levels.
template <typename T>
Tensor<T> perceptual_loss(const Tensor<T>& pred, const Tensor<T>& target, const FeatureBank<T>& bank) {
    check_same_shape(pred.shape(), target.shape(), "perceptual_loss");
    auto fp = bank.features(pred);
    auto ft = bank.features(target);
    Tensor<T> acc = Tensor<T>::scalar(T(0));
    for (int lvl = 0; lvl < 3; ++lvl) {
        acc = add(acc, reduce_mean(abs_val(sub(fp[static_cast<std::size_t>(lvl)], ft[static_cast<std::size_t>(lvl)]))));
    }
    return scale_add(acc, static_cast<T>(1.0 / 3.0), T(0));
}

// Channel-by-channel Gram matrix of one frame's features, normalized by the
// feature element count.
template <typename T>
Tensor<T> gram_matrix(const Tensor<T>& frame_features) {
    if (frame_features.ndim() != 3) {
        throw ShapeError("gram_matrix: expected c×h×w, got " + shape_str(frame_features.shape()));
    }
    const int c = frame_features.dim(0);
    const int hw = frame_features.dim(1) * frame_features.dim(2);
    auto flat = reshape(frame_features, {c, hw});
    return scale_add(matmul(flat, transpose(flat)),
                     static_cast<T>(1.0 / (static_cast<double>(c) * hw)), T(0));
}

// Mean L1 distance between per-frame Gram matrices of bank features, averaged
// over frames and levels.
template <typename T>
Tensor<T> style_loss(const Tensor<T>& pred, const Tensor<T>& target, const FeatureBank<T>& bank) {
    check_same_shape(pred.shape(), target.shape(), "style_loss");
    auto fp = bank.features(pred);
    auto ft = bank.features(target);
    Tensor<T> acc = Tensor<T>::scalar(T(0));
    for (int lvl = 0; lvl < 3; ++lvl) {
        const auto& p = fp[static_cast<std::size_t>(lvl)];
        const auto& t = ft[static_cast<std::size_t>(lvl)];
        const int frames = p.dim(0), c = p.dim(1), h = p.dim(2), w = p.dim(3);
        Tensor<T> lvl_acc = Tensor<T>::scalar(T(0));
        for (int f = 0; f < frames; ++f) {
            auto gp = gram_matrix(reshape(slice_axis(p, 0, f, 1), {c, h, w}));
            auto gt = gram_matrix(reshape(slice_axis(t, 0, f, 1), {c, h, w}));
            lvl_acc = add(lvl_acc, reduce_mean(abs_val(sub(gp, gt))));
        }
        acc = add(acc, scale_add(lvl_acc, static_cast<T>(1.0 / frames), T(0)));
    }
    return scale_add(acc, static_cast<T>(1.0 / 3.0), T(0));
}

// Weighted sum of the five generator terms.
template <typename T>
Tensor<T> total_generator_loss(const Tensor<T>& l_d, const Tensor<T>& l_i, const Tensor<T>& l_gen,
                               const Tensor<T>& l_p, const Tensor<T>& l_s, const LossWeights<T>& w) {
    auto total = scale_add(l_d, w.depth, T(0));
    total = add(total, scale_add(l_i, w.image, T(0)));
    total = add(total, scale_add(l_gen, w.adversarial, T(0)));
    total = add(total, scale_add(l_p, w.perceptual, T(0)));
    total = add(total, scale_add(l_s, w.style, T(0)));
    return total;
}

} // namespace daevi
