#pragma once

#include "daevi/conv.hpp"
#include "daevi/ops.hpp"
#include "daevi/params.hpp"

namespace daevi {

// Frame encoder: 3x3 conv stem plus two stride-2 stages, so the latent sits
// at exactly H/4 x W/4 with 4*C channels.
struct EncoderSpec {
    int in_channels = 3;
    int base_channels = 8;

    int out_channels() const { return 4 * base_channels; }
};

// Mirror of the encoder: two nearest-upsample + conv stages and a sigmoid
// head mapping back to [0,1] frames (or a 1-channel depth map).
struct DecoderSpec {
    int base_channels = 8;
    int out_channels = 3;

    int in_channels() const { return 4 * base_channels; }
};

template <typename T>
struct EncoderParams {
    ConvParams<T> stem;   // in -> C
    ConvParams<T> down1;  // C -> 2C, stride 2
    ConvParams<T> down2;  // 2C -> 4C, stride 2

    static EncoderParams init(const EncoderSpec& spec, SplitMix64& rng) {
        const int c = spec.base_channels;
        EncoderParams p;
        p.stem = init_conv<T>({c, spec.in_channels, 3, 3}, rng);
        p.down1 = init_conv<T>({2 * c, c, 3, 3}, rng);
        p.down2 = init_conv<T>({4 * c, 2 * c, 3, 3}, rng);
        return p;
    }

    template <typename Fn>
    void visit(const std::string& prefix, Fn&& fn) {
        visit_conv(stem, prefix + ".stem", fn);
        visit_conv(down1, prefix + ".down1", fn);
        visit_conv(down2, prefix + ".down2", fn);
    }
};

template <typename T>
struct DecoderParams {
    ConvParams<T> up1;   // 4C -> 2C after upsample
    ConvParams<T> up2;   // 2C -> C after upsample
    ConvParams<T> head;  // C -> out, sigmoid

    static DecoderParams init(const DecoderSpec& spec, SplitMix64& rng) {
        const int c = spec.base_channels;
        DecoderParams p;
        p.up1 = init_conv<T>({2 * c, 4 * c, 3, 3}, rng);
        p.up2 = init_conv<T>({c, 2 * c, 3, 3}, rng);
        p.head = init_conv<T>({spec.out_channels, c, 3, 3}, rng);
        return p;
    }

    template <typename Fn>
    void visit(const std::string& prefix, Fn&& fn) {
        visit_conv(up1, prefix + ".up1", fn);
        visit_conv(up2, prefix + ".up2", fn);
        visit_conv(head, prefix + ".head", fn);
    }
};

// x_masked: T×Cin×H×W with the mask already applied. H and W must be
// divisible by 4.
template <typename T>
Tensor<T> encode_frames(const Tensor<T>& x_masked, EncoderParams<T>& p) {
    if (x_masked.ndim() != 4) {
        throw ShapeError("encode_frames: expected T×C×H×W, got " + shape_str(x_masked.shape()));
    }
    const int h = x_masked.dim(2), w = x_masked.dim(3);
    if (h % 4 != 0 || w % 4 != 0) {
        throw ConfigError("encode_frames: H and W must be divisible by 4, got " +
                          std::to_string(h) + "x" + std::to_string(w));
    }
    Conv2dSpec same;
    same.pad_h = same.pad_w = 1;
    Conv2dSpec down = same;
    down.stride_h = down.stride_w = 2;

    auto f = leaky_relu(conv2d(x_masked, p.stem.w, p.stem.b, same), T(0.2));
    f = leaky_relu(conv2d(f, p.down1.w, p.down1.b, down), T(0.2));
    f = leaky_relu(conv2d(f, p.down2.w, p.down2.b, down), T(0.2));
    return f;
}

// f: T×4C×h×w latent; returns T×out×4h×4w in [0,1].
template <typename T>
Tensor<T> decode_frames(const Tensor<T>& f, DecoderParams<T>& p) {
    if (f.ndim() != 4) {
        throw ShapeError("decode_frames: expected T×C×h×w, got " + shape_str(f.shape()));
    }
    if (f.dim(1) != p.up1.w.dim(1)) {
        throw ContractError("decode_frames: latent has " + std::to_string(f.dim(1)) +
                            " channels, decoder expects " + std::to_string(p.up1.w.dim(1)));
    }
    Conv2dSpec same;
    same.pad_h = same.pad_w = 1;

    auto y = leaky_relu(conv2d(upsample_nearest2x(f), p.up1.w, p.up1.b, same), T(0.2));
    y = leaky_relu(conv2d(upsample_nearest2x(y), p.up2.w, p.up2.b, same), T(0.2));
    return sigmoid(conv2d(y, p.head.w, p.head.b, same));
}

} // namespace daevi
