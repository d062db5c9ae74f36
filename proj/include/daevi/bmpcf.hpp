#pragma once

#include <utility>

#include "daevi/codec.hpp"
#include "daevi/conv.hpp"
#include "daevi/ops.hpp"

namespace daevi {

// Depth encoder: same stack as the frame encoder but with one input channel,
// producing a feature map shaped exactly like the visual features.
template <typename T>
Tensor<T> encode_depth(const Tensor<T>& d_hat, EncoderParams<T>& enc) {
    if (d_hat.ndim() != 4 || d_hat.dim(1) != 1) {
        throw ShapeError("encode_depth: expected T×1×H×W, got " + shape_str(d_hat.shape()));
    }
    return encode_frames(d_hat, enc);
}

// Pairwise channel interleave: output channel 2i is visual channel i, output
// channel 2i+1 is depth channel i. Pure rearrangement, exactly invertible.
template <typename T>
Tensor<T> interleave_channels(const Tensor<T>& visual, const Tensor<T>& depth) {
    check_same_shape(visual.shape(), depth.shape(), "interleave_channels");
    if (visual.ndim() != 4) {
        throw ShapeError("interleave_channels: expected T×c×h×w, got " + shape_str(visual.shape()));
    }
    const int t = visual.dim(0), c = visual.dim(1);
    const std::int64_t hw = static_cast<std::int64_t>(visual.dim(2)) * visual.dim(3);
    Tensor<T> out(Shape{t, 2 * c, visual.dim(2), visual.dim(3)});
    const T* pv = visual.data();
    const T* pd = depth.data();
    T* po = out.data();
    for (int ti = 0; ti < t; ++ti) {
        for (int ch = 0; ch < c; ++ch) {
            const std::int64_t src = (static_cast<std::int64_t>(ti) * c + ch) * hw;
            const std::int64_t dst_v = (static_cast<std::int64_t>(ti) * 2 * c + 2 * ch) * hw;
            const std::int64_t dst_d = dst_v + hw;
            for (std::int64_t i = 0; i < hw; ++i) {
                po[dst_v + i] = pv[src + i];
                po[dst_d + i] = pd[src + i];
            }
        }
    }
    if (Tape<T>* tp = tape_of(visual, depth)) {
        const int nv = visual.node(), nd = depth.node();
        tp->record(out, [nv, nd, t, c, hw](Tape<T>& tape, const std::vector<T>& g) {
            auto* gv = tape.grad_buffer(nv);
            auto* gd = tape.grad_buffer(nd);
            for (int ti = 0; ti < t; ++ti) {
                for (int ch = 0; ch < c; ++ch) {
                    const std::int64_t src = (static_cast<std::int64_t>(ti) * c + ch) * hw;
                    const std::int64_t out_v = (static_cast<std::int64_t>(ti) * 2 * c + 2 * ch) * hw;
                    const std::int64_t out_d = out_v + hw;
                    for (std::int64_t i = 0; i < hw; ++i) {
                        if (gv) (*gv)[static_cast<std::size_t>(src + i)] += g[static_cast<std::size_t>(out_v + i)];
                        if (gd) (*gd)[static_cast<std::size_t>(src + i)] += g[static_cast<std::size_t>(out_d + i)];
                    }
                }
            }
        });
    }
    return out;
}

// Inverse of interleave_channels; used by tests and ablations.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> deinterleave_channels(const Tensor<T>& paired) {
    if (paired.ndim() != 4 || paired.dim(1) % 2 != 0) {
        throw ShapeError("deinterleave_channels: expected T×2c×h×w, got " + shape_str(paired.shape()));
    }
    const int c = paired.dim(1) / 2;
    std::vector<Tensor<T>> vis, dep;
    for (int ch = 0; ch < c; ++ch) {
        vis.push_back(slice_axis(paired, 1, 2 * ch, 1));
        dep.push_back(slice_axis(paired, 1, 2 * ch + 1, 1));
    }
    return {concat(vis, 1), concat(dep, 1)};
}

// Group-wise fusion: one kernel per (visual, depth) pair, so output channel i
// depends only on input channels 2i and 2i+1. Weight is c×2×k×k with
// groups = c.
template <typename T>
Tensor<T> fuse_pairs(const Tensor<T>& paired, ConvParams<T>& g_params) {
    if (paired.ndim() != 4 || paired.dim(1) % 2 != 0) {
        throw ContractError("fuse_pairs: paired feature must have an even channel count, got " +
                            shape_str(paired.shape()));
    }
    const int c = paired.dim(1) / 2;
    if (g_params.w.dim(0) != c || g_params.w.dim(1) != 2) {
        throw ShapeError("fuse_pairs: weight " + shape_str(g_params.w.shape()) + " does not pair " +
                         std::to_string(paired.dim(1)) + " channels");
    }
    Conv2dSpec spec;
    spec.groups = c;
    spec.pad_h = (g_params.w.dim(2) - 1) / 2;
    spec.pad_w = (g_params.w.dim(3) - 1) / 2;
    return conv2d(paired, g_params.w, g_params.b, spec);
}

} // namespace daevi
