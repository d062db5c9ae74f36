#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "daevi/codec.hpp"
#include "daevi/conv.hpp"
#include "daevi/ops.hpp"
#include "daevi/params.hpp"

namespace daevi {

// Patch layout of one latent frame: r1 x r2 patches, tokens ordered
// frame-major then row-major over patches.
struct PatchGrid {
    int r1 = 2;
    int r2 = 2;

    int patches_per_frame() const { return r1 * r2; }

    void validate(int h, int w) const {
        if (r1 < 1 || r2 < 1 || h % r1 != 0 || w % r2 != 0) {
            throw ConfigError("patch grid " + std::to_string(r1) + "x" + std::to_string(r2) +
                              " does not divide latent extent " + std::to_string(h) + "x" + std::to_string(w));
        }
    }
};

// Per-token validity derived from the full-resolution corruption mask.
// A key token is invalid only when every pixel of its patch region is
// corrupted; query tokens are never masked.
struct TokenMask {
    std::vector<std::uint8_t> valid;

    int count() const { return static_cast<int>(valid.size()); }
    bool all_valid() const {
        for (std::uint8_t v : valid) {
            if (!v) return false;
        }
        return true;
    }
};

// How the attention scores are combined with the key mask before softmax:
// Additive sets masked-key columns to -inf (zero weight, the default);
// Multiplicative multiplies scores by the 0/1 mask (ablation variant).
enum class AttentionMaskRule {
    Additive,
    Multiplicative,
};

// mask: T×1×H×W with 0 = corrupted; the latent grid is h=H/s, w=W/s for an
// integer pixel scale s (4 for the frame encoder used here).
template <typename T>
TokenMask token_validity(const Tensor<T>& mask, int latent_h, int latent_w, const PatchGrid& grid) {
    if (mask.ndim() != 4 || mask.dim(1) != 1) {
        throw ShapeError("token_validity: expected mask T×1×H×W, got " + shape_str(mask.shape()));
    }
    grid.validate(latent_h, latent_w);
    const int t = mask.dim(0), hh = mask.dim(2), ww = mask.dim(3);
    if (hh % grid.r1 != 0 || ww % grid.r2 != 0) {
        throw ConfigError("token_validity: mask extent not divisible by patch grid");
    }
    const int ph = hh / grid.r1;
    const int pw = ww / grid.r2;
    TokenMask tm;
    tm.valid.assign(static_cast<std::size_t>(t) * grid.patches_per_frame(), 0);
    const T* pm = mask.data();
    for (int ti = 0; ti < t; ++ti) {
        for (int a = 0; a < grid.r1; ++a) {
            for (int b = 0; b < grid.r2; ++b) {
                bool any_valid = false;
                for (int i = a * ph; i < (a + 1) * ph && !any_valid; ++i) {
                    const T* row = pm + (static_cast<std::int64_t>(ti) * hh + i) * ww;
                    for (int j = b * pw; j < (b + 1) * pw; ++j) {
                        if (row[j] > T(0.5)) {
                            any_valid = true;
                            break;
                        }
                    }
                }
                tm.valid[static_cast<std::size_t>((ti * grid.r1 + a) * grid.r2 + b)] = any_valid ? 1 : 0;
            }
        }
    }
    return tm;
}

namespace detail {

// token (t, a, b) -> row t*n + a*r2 + b; row content is the patch block in
// (c, pi, pj) row-major order. Returns the flat input index for a given flat
// token-matrix index.
struct PatchIndexer {
    int t, c, h, w, r1, r2, ph, pw;

    std::int64_t rows() const { return static_cast<std::int64_t>(t) * r1 * r2; }
    std::int64_t cols() const { return static_cast<std::int64_t>(c) * ph * pw; }

    std::int64_t input_index(std::int64_t row, std::int64_t col) const {
        const int token = static_cast<int>(row);
        const int ti = token / (r1 * r2);
        const int a = (token / r2) % r1;
        const int b = token % r2;
        const int ch = static_cast<int>(col / (static_cast<std::int64_t>(ph) * pw));
        const int rem = static_cast<int>(col % (static_cast<std::int64_t>(ph) * pw));
        const int pi = rem / pw;
        const int pj = rem % pw;
        return ((static_cast<std::int64_t>(ti) * c + ch) * h + (a * ph + pi)) * w + (b * pw + pj);
    }
};

} // namespace detail

// Lossless rearrangement T×c×h×w -> (T·n)×(c·h/r1·w/r2).
template <typename T>
Tensor<T> patchify(const Tensor<T>& x, const PatchGrid& grid) {
    if (x.ndim() != 4) {
        throw ShapeError("patchify: expected T×c×h×w, got " + shape_str(x.shape()));
    }
    grid.validate(x.dim(2), x.dim(3));
    detail::PatchIndexer ix{x.dim(0), x.dim(1), x.dim(2), x.dim(3),
                            grid.r1, grid.r2, x.dim(2) / grid.r1, x.dim(3) / grid.r2};
    Tensor<T> out(Shape{static_cast<int>(ix.rows()), static_cast<int>(ix.cols())});
    const T* px = x.data();
    T* po = out.data();
    const std::int64_t cols = ix.cols();
    for (std::int64_t r = 0; r < ix.rows(); ++r) {
        for (std::int64_t cidx = 0; cidx < cols; ++cidx) {
            po[r * cols + cidx] = px[ix.input_index(r, cidx)];
        }
    }
    if (Tape<T>* tp = x.tape()) {
        const int nx = x.node();
        tp->record(out, [nx, ix, cols](Tape<T>& t, const std::vector<T>& g) {
            if (auto* gx = t.grad_buffer(nx)) {
                for (std::int64_t r = 0; r < ix.rows(); ++r) {
                    for (std::int64_t cidx = 0; cidx < cols; ++cidx) {
                        (*gx)[static_cast<std::size_t>(ix.input_index(r, cidx))] +=
                            g[static_cast<std::size_t>(r * cols + cidx)];
                    }
                }
            }
        });
    }
    return out;
}

// Exact inverse of patchify for the same grid and feature extents.
template <typename T>
Tensor<T> unpatchify(const Tensor<T>& tokens, const PatchGrid& grid, int t, int c, int h, int w) {
    grid.validate(h, w);
    detail::PatchIndexer ix{t, c, h, w, grid.r1, grid.r2, h / grid.r1, w / grid.r2};
    if (tokens.ndim() != 2 || tokens.dim(0) != ix.rows() || tokens.dim(1) != ix.cols()) {
        throw ShapeError("unpatchify: token matrix " + shape_str(tokens.shape()) + " does not match target " +
                         std::to_string(t) + "x" + std::to_string(c) + "x" + std::to_string(h) + "x" + std::to_string(w));
    }
    Tensor<T> out(Shape{t, c, h, w});
    const T* pt = tokens.data();
    T* po = out.data();
    const std::int64_t cols = ix.cols();
    for (std::int64_t r = 0; r < ix.rows(); ++r) {
        for (std::int64_t cidx = 0; cidx < cols; ++cidx) {
            po[ix.input_index(r, cidx)] = pt[r * cols + cidx];
        }
    }
    if (Tape<T>* tp = tokens.tape()) {
        const int nt = tokens.node();
        tp->record(out, [nt, ix, cols](Tape<T>& t2, const std::vector<T>& g) {
            if (auto* gt = t2.grad_buffer(nt)) {
                for (std::int64_t r = 0; r < ix.rows(); ++r) {
                    for (std::int64_t cidx = 0; cidx < cols; ++cidx) {
                        (*gt)[static_cast<std::size_t>(r * cols + cidx)] +=
                            g[static_cast<std::size_t>(ix.input_index(r, cidx))];
                    }
                }
            }
        });
    }
    return out;
}

// Masked patch attention. Scores are scaled by 1/sqrt(r1*r2*c); masked key
// columns get -inf (additive rule) or a 0 factor (multiplicative rule)
// before the row softmax. With every key masked the output row is zero.
template <typename T>
Tensor<T> compute_attention(const Tensor<T>& qp, const Tensor<T>& kp, const Tensor<T>& vp,
                            const TokenMask& token_mask, const PatchGrid& grid, int channels,
                            AttentionMaskRule rule = AttentionMaskRule::Additive) {
    if (qp.ndim() != 2 || kp.shape() != qp.shape() || vp.ndim() != 2 || vp.dim(0) != qp.dim(0)) {
        throw ShapeError("compute_attention: Q and K must share one 2-D shape and V must have one row per token");
    }
    const int tokens = qp.dim(0);
    if (token_mask.count() != tokens) {
        throw ShapeError("compute_attention: mask has " + std::to_string(token_mask.count()) +
                         " tokens, expected " + std::to_string(tokens));
    }
    const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(grid.r1) * grid.r2 * channels));
    auto scores = scale_add(matmul(qp, transpose(kp)), scale, T(0));

    if (!token_mask.all_valid()) {
        if (rule == AttentionMaskRule::Additive) {
            Tensor<T> bias(Shape{tokens, tokens});
            T* pb = bias.data();
            for (int q = 0; q < tokens; ++q) {
                for (int k = 0; k < tokens; ++k) {
                    pb[static_cast<std::int64_t>(q) * tokens + k] =
                        token_mask.valid[static_cast<std::size_t>(k)] ? T(0) : neg_inf<T>();
                }
            }
            scores = add(scores, bias);
        } else {
            Tensor<T> factor(Shape{tokens, tokens});
            T* pf = factor.data();
            for (int q = 0; q < tokens; ++q) {
                for (int k = 0; k < tokens; ++k) {
                    pf[static_cast<std::int64_t>(q) * tokens + k] =
                        token_mask.valid[static_cast<std::size_t>(k)] ? T(1) : T(0);
                }
            }
            scores = mul(scores, factor);
        }
    }
    auto weights = softmax(scores, 1);
    return matmul(weights, vp);
}

// One transformer block: 1x1 Q/K/V projections with a depth-wise 3x3
// enhancement on V, masked patch attention, output projection, and a 1x1
// conv FFN, with residual paths around both sublayers.
template <typename T>
struct BlockParams {
    ConvParams<T> q;         // 1x1, c -> c
    ConvParams<T> k;         // 1x1, c -> c
    ConvParams<T> v;         // 1x1, c -> c
    ConvParams<T> v_dw;      // 3x3 depth-wise, c -> c
    ConvParams<T> out_proj;  // 1x1, c -> c
    ConvParams<T> ffn1;      // 1x1, c -> e*c
    ConvParams<T> ffn2;      // 1x1, e*c -> c
    ConvParams<T> depth_proj; // 1x1, c -> c, feeds the depth head

    static BlockParams init(int c, int ffn_expand, SplitMix64& rng) {
        BlockParams p;
        p.q = init_conv<T>({c, c, 1, 1}, rng);
        p.k = init_conv<T>({c, c, 1, 1}, rng);
        p.v = init_conv<T>({c, c, 1, 1}, rng);
        p.v_dw = init_conv<T>({c, 1, 3, 3}, rng);
        p.out_proj = init_conv<T>({c, c, 1, 1}, rng);
        p.ffn1 = init_conv<T>({ffn_expand * c, c, 1, 1}, rng);
        p.ffn2 = init_conv<T>({c, ffn_expand * c, 1, 1}, rng);
        p.depth_proj = init_conv<T>({c, c, 1, 1}, rng);
        return p;
    }

    template <typename Fn>
    void visit(const std::string& prefix, Fn&& fn) {
        visit_conv(q, prefix + ".q", fn);
        visit_conv(k, prefix + ".k", fn);
        visit_conv(v, prefix + ".v", fn);
        visit_conv(v_dw, prefix + ".v_dw", fn);
        visit_conv(out_proj, prefix + ".out_proj", fn);
        visit_conv(ffn1, prefix + ".ffn1", fn);
        visit_conv(ffn2, prefix + ".ffn2", fn);
        visit_conv(depth_proj, prefix + ".depth_proj", fn);
    }
};

template <typename T>
struct QkvMaps {
    Tensor<T> q, k, v;
};

// V gets the depth-wise 3x3 enhancement added on top of its 1x1 projection.
template <typename T>
QkvMaps<T> project_qkv(const Tensor<T>& f_prev, BlockParams<T>& p) {
    Conv2dSpec point;
    Conv2dSpec dw;
    dw.pad_h = dw.pad_w = 1;
    dw.groups = f_prev.dim(1);
    QkvMaps<T> out;
    out.q = conv2d(f_prev, p.q.w, p.q.b, point);
    out.k = conv2d(f_prev, p.k.w, p.k.b, point);
    out.v = add(conv2d(f_prev, p.v.w, p.v.b, point), conv2d(f_prev, p.v_dw.w, p.v_dw.b, dw));
    return out;
}

template <typename T>
struct BlockOut {
    Tensor<T> f_next; // input to the following block
    Tensor<T> f_att;  // raw attention output, retained for the depth head
};

template <typename T>
BlockOut<T> block_forward(const Tensor<T>& f_prev, const Tensor<T>& mask, BlockParams<T>& p,
                          const PatchGrid& grid, AttentionMaskRule rule = AttentionMaskRule::Additive) {
    const int t = f_prev.dim(0), c = f_prev.dim(1), h = f_prev.dim(2), w = f_prev.dim(3);
    auto qkv = project_qkv(f_prev, p);
    auto qp = patchify(qkv.q, grid);
    auto kp = patchify(qkv.k, grid);
    auto vp = patchify(qkv.v, grid);
    const TokenMask tm = token_validity(mask, h, w, grid);
    auto att_tokens = compute_attention(qp, kp, vp, tm, grid, c, rule);

    BlockOut<T> out;
    out.f_att = unpatchify(att_tokens, grid, t, c, h, w);
    Conv2dSpec point;
    auto x1 = add(f_prev, conv2d(out.f_att, p.out_proj.w, p.out_proj.b, point));
    auto ffn = conv2d(relu(conv2d(x1, p.ffn1.w, p.ffn1.b, point)), p.ffn2.w, p.ffn2.b, point);
    out.f_next = add(x1, ffn);
    return out;
}

// Depth head: per-block 1x1 projections of the retained attention outputs,
// summed over all blocks, then decoded to a T×1×H×W map in [0,1].
template <typename T>
Tensor<T> estimate_depth(const std::vector<Tensor<T>>& f_att_all, std::vector<BlockParams<T>>& blocks,
                         DecoderParams<T>& depth_decoder) {
    if (f_att_all.size() != blocks.size() || f_att_all.empty()) {
        throw ContractError("estimate_depth: expected one attention map per block, got " +
                            std::to_string(f_att_all.size()) + " maps for " +
                            std::to_string(blocks.size()) + " blocks");
    }
    Conv2dSpec point;
    Tensor<T> agg = conv2d(f_att_all[0], blocks[0].depth_proj.w, blocks[0].depth_proj.b, point);
    for (std::size_t i = 1; i < f_att_all.size(); ++i) {
        agg = add(agg, conv2d(f_att_all[i], blocks[i].depth_proj.w, blocks[i].depth_proj.b, point));
    }
    return decode_frames(agg, depth_decoder);
}

} // namespace daevi
