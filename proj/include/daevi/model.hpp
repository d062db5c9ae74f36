#pragma once

#include <string>
#include <vector>

#include "daevi/bmpcf.hpp"
#include "daevi/codec.hpp"
#include "daevi/stgde.hpp"

namespace daevi {

struct GeneratorConfig {
    int base_channels = 8;
    int blocks = 8;
    PatchGrid grid;
    int ffn_expansion = 4;
    int fusion_kernel = 3;
    AttentionMaskRule mask_rule = AttentionMaskRule::Additive;

    int latent_channels() const { return 4 * base_channels; }
};

// Full inpainting generator: frame encoder, transformer stack with the depth
// head, depth encoder, paired-channel fusion, frame decoder.
template <typename T>
struct GeneratorParams {
    GeneratorConfig cfg;
    EncoderParams<T> encoder;
    std::vector<BlockParams<T>> blocks;
    DecoderParams<T> depth_decoder;
    EncoderParams<T> depth_encoder;
    ConvParams<T> fusion;
    DecoderParams<T> frame_decoder;

    static GeneratorParams init(const GeneratorConfig& cfg, SplitMix64& rng) {
        if (cfg.blocks < 1 || cfg.base_channels < 1) {
            throw ConfigError("generator: blocks and base_channels must be >= 1");
        }
        if (cfg.fusion_kernel != 1 && cfg.fusion_kernel != 3) {
            throw ConfigError("generator: fusion kernel must be 1 or 3");
        }
        GeneratorParams p;
        p.cfg = cfg;
        const int c = cfg.latent_channels();
        p.encoder = EncoderParams<T>::init(EncoderSpec{3, cfg.base_channels}, rng);
        for (int i = 0; i < cfg.blocks; ++i) {
            p.blocks.push_back(BlockParams<T>::init(c, cfg.ffn_expansion, rng));
        }
        p.depth_decoder = DecoderParams<T>::init(DecoderSpec{cfg.base_channels, 1}, rng);
        p.depth_encoder = EncoderParams<T>::init(EncoderSpec{1, cfg.base_channels}, rng);
        p.fusion = init_conv<T>({c, 2, cfg.fusion_kernel, cfg.fusion_kernel}, rng);
        p.frame_decoder = DecoderParams<T>::init(DecoderSpec{cfg.base_channels, 3}, rng);
        return p;
    }

    template <typename Fn>
    void visit(Fn&& fn) {
        encoder.visit("enc", fn);
        for (std::size_t i = 0; i < blocks.size(); ++i) {
            blocks[i].visit("blk" + std::to_string(i), fn);
        }
        depth_decoder.visit("depth_dec", fn);
        depth_encoder.visit("depth_enc", fn);
        visit_conv(fusion, "fusion", fn);
        frame_decoder.visit("frame_dec", fn);
    }

    std::vector<Tensor<T>*> parameters() {
        std::vector<Tensor<T>*> out;
        visit([&](const std::string&, Tensor<T>& t) { out.push_back(&t); });
        return out;
    }
};

template <typename T>
struct GeneratorOut {
    Tensor<T> frames; // T×3×H×W in [0,1]
    Tensor<T> depth;  // T×1×H×W in [0,1]
};

// frames: T×3×H×W, mask: T×1×H×W with 0 marking corrupted pixels. The mask
// is applied to the input here; callers pass the raw clip.
template <typename T>
GeneratorOut<T> generator_forward(const Tensor<T>& frames, const Tensor<T>& mask, GeneratorParams<T>& p) {
    if (frames.ndim() != 4 || frames.dim(1) != 3) {
        throw ShapeError("generator_forward: expected frames T×3×H×W, got " + shape_str(frames.shape()));
    }
    if (mask.ndim() != 4 || mask.dim(1) != 1 || mask.dim(0) != frames.dim(0) ||
        mask.dim(2) != frames.dim(2) || mask.dim(3) != frames.dim(3)) {
        throw ShapeError("generator_forward: mask " + shape_str(mask.shape()) + " does not match frames " +
                         shape_str(frames.shape()));
    }
    auto x_masked = mul_channel_mask(frames, mask);
    auto f = encode_frames(x_masked, p.encoder);

    std::vector<Tensor<T>> f_att_all;
    f_att_all.reserve(p.blocks.size());
    for (auto& blk : p.blocks) {
        auto out = block_forward(f, mask, blk, p.cfg.grid, p.cfg.mask_rule);
        f = out.f_next;
        f_att_all.push_back(out.f_att);
    }

    GeneratorOut<T> out;
    out.depth = estimate_depth(f_att_all, p.blocks, p.depth_decoder);
    auto f_d = encode_depth(out.depth, p.depth_encoder);
    auto fused = fuse_pairs(interleave_channels(f, f_d), p.fusion);
    out.frames = decode_frames(fused, p.frame_decoder);
    return out;
}

} // namespace daevi
