#include "daevi/gradsuite.hpp"

#include <chrono>
#include <functional>
#include <map>

#include "daevi/bmpcf.hpp"
#include "daevi/codec.hpp"
#include "daevi/ded.hpp"
#include "daevi/gradcheck.hpp"
#include "daevi/losses.hpp"
#include "daevi/model.hpp"
#include "daevi/stgde.hpp"

namespace daevi {

namespace {

using D = double;
using Fwd = std::function<Tensor<D>(Tensor<D>&)>;

struct Suite {
    std::map<std::string, double> worst;
    std::uint64_t seed = 0;

    // Runs one analytic-vs-fd comparison and folds it into the named row.
    void run(const std::string& name, const Tensor<D>& x0, const Fwd& fwd,
             D eps = 1e-5, std::int64_t max_coords = 0) {
        Tape<D> tape;
        Tensor<D> x = x0.clone();
        tape.watch(x);
        Tensor<D> loss = fwd(x);
        tape.backward(loss);
        Tensor<D> analytic = tape.grad(x);

        Tensor<D> probe = x0.clone();
        auto eval = [&]() { return fwd(probe).item(); };
        SplitMix64 pick(seed ^ 0xC0025u);
        const auto rep = fd_compare<D>(eval, probe, analytic, eps, max_coords, &pick);
        auto it = worst.find(name);
        if (it == worst.end()) {
            worst[name] = rep.max_rel_err;
        } else {
            it->second = std::max(it->second, rep.max_rel_err);
        }
    }
};

Tensor<D> rand_t(Shape shape, SplitMix64& rng, D lo = -1.0, D hi = 1.0) {
    Tensor<D> t(std::move(shape));
    t.fill_uniform(rng, lo, hi);
    return t;
}

Tensor<D> rand_signed(Shape shape, SplitMix64& rng, D lo = 0.2, D hi = 1.5) {
    Tensor<D> t(std::move(shape));
    for (auto& v : t.vec()) {
        const D mag = rng.uniform(lo, hi);
        v = rng.next_double() < 0.5 ? -mag : mag;
    }
    return t;
}

Tensor<D> weighted(const Tensor<D>& y, std::uint64_t salt) {
    SplitMix64 rng(salt);
    Tensor<D> c(y.shape());
    c.fill_uniform(rng, -1.0, 1.0);
    return reduce_sum(mul(y, c));
}

void check_primitives(Suite& suite, SplitMix64& rng, std::uint64_t salt) {
    auto x = rand_signed({3, 4}, rng);
    auto other = rand_signed({3, 4}, rng);
    suite.run("add", x, [&](Tensor<D>& t) { return weighted(add(t, other), salt); });
    suite.run("sub", x, [&](Tensor<D>& t) { return weighted(sub(other, t), salt); });
    suite.run("mul", x, [&](Tensor<D>& t) { return weighted(mul(t, other), salt); });
    suite.run("scale_add", x, [&](Tensor<D>& t) { return weighted(scale_add(t, D(1.7), D(-0.3)), salt); });
    suite.run("relu", x, [&](Tensor<D>& t) { return weighted(relu(t), salt); });
    suite.run("leaky_relu", x, [&](Tensor<D>& t) { return weighted(leaky_relu(t, D(0.2)), salt); });
    suite.run("sigmoid", x, [&](Tensor<D>& t) { return weighted(sigmoid(t), salt); });
    suite.run("abs", x, [&](Tensor<D>& t) { return weighted(abs_val(t), salt); });
    suite.run("reduce_sum", x, [&](Tensor<D>& t) { return reduce_sum(t); });
    suite.run("reduce_mean", x, [&](Tensor<D>& t) { return reduce_mean(t); });

    auto a = rand_t({4, 3}, rng);
    auto bmat = rand_t({3, 5}, rng);
    suite.run("matmul.lhs", a, [&](Tensor<D>& t) { return weighted(matmul(t, bmat), salt); });
    suite.run("matmul.rhs", bmat, [&](Tensor<D>& t) { return weighted(matmul(a, t), salt); });
    suite.run("transpose", a, [&](Tensor<D>& t) { return weighted(transpose(t), salt); });

    auto x4 = rand_t({2, 3, 4, 4}, rng);
    suite.run("permute", x4, [&](Tensor<D>& t) { return weighted(permute(t, {1, 0, 3, 2}), salt); });
    suite.run("reshape", x4, [&](Tensor<D>& t) { return weighted(reshape(t, {6, 16}), salt); });
    suite.run("slice", x4, [&](Tensor<D>& t) { return weighted(slice_axis(t, 1, 1, 2), salt); });
    suite.run("concat", x4, [&](Tensor<D>& t) {
        return weighted(concat({slice_axis(t, 1, 1, 2), slice_axis(t, 1, 0, 1)}, 1), salt);
    });
    suite.run("upsample_nearest2x", x4, [&](Tensor<D>& t) { return weighted(upsample_nearest2x(t), salt); });

    Tensor<D> chan_mask(Shape{2, 1, 4, 4});
    for (auto& v : chan_mask.vec()) v = rng.next_double() < 0.3 ? 0.0 : 1.0;
    suite.run("mul_channel_mask", x4, [&](Tensor<D>& t) { return weighted(mul_channel_mask(t, chan_mask), salt); });

    auto sm = rand_t({3, 6}, rng, -2.0, 2.0);
    suite.run("softmax", sm, [&](Tensor<D>& t) { return weighted(softmax(t, 1), salt); });
    Tensor<D> bias(Shape{3, 6});
    for (int i = 0; i < 3; ++i) bias.at(i * 6 + 4) = neg_inf<D>();
    suite.run("softmax.masked", sm, [&](Tensor<D>& t) { return weighted(softmax(add(t, bias), 1), salt); });

    auto cx = rand_t({1, 4, 6, 6}, rng);
    auto cw = rand_t({4, 4, 3, 3}, rng, -0.5, 0.5);
    auto cb = rand_t({4}, rng, -0.5, 0.5);
    Conv2dSpec padded;
    padded.pad_h = padded.pad_w = 1;
    suite.run("conv2d.x", cx, [&](Tensor<D>& t) { return weighted(conv2d(t, cw, cb, padded), salt); });
    suite.run("conv2d.w", cw, [&](Tensor<D>& t) { return weighted(conv2d(cx, t, cb, padded), salt); });
    suite.run("conv2d.b", cb, [&](Tensor<D>& t) { return weighted(conv2d(cx, cw, t, padded), salt); });

    Conv2dSpec strided = padded;
    strided.stride_h = strided.stride_w = 2;
    suite.run("conv2d.strided", cx, [&](Tensor<D>& t) { return weighted(conv2d(t, cw, cb, strided), salt); });

    auto gw = rand_t({4, 2, 3, 3}, rng, -0.5, 0.5);
    Conv2dSpec grouped = padded;
    grouped.groups = 2;
    suite.run("conv2d.grouped", cx, [&](Tensor<D>& t) { return weighted(conv2d(t, gw, Tensor<D>(), grouped), salt); });

    auto dww = rand_t({4, 1, 3, 3}, rng, -0.5, 0.5);
    Conv2dSpec dw = padded;
    dw.groups = 4;
    suite.run("conv2d.depthwise", cx, [&](Tensor<D>& t) { return weighted(conv2d(t, dww, Tensor<D>(), dw), salt); });

    auto vx = rand_t({1, 2, 3, 4, 4}, rng);
    auto vw = rand_t({3, 2, 3, 3, 3}, rng, -0.4, 0.4);
    auto vb = rand_t({3}, rng, -0.4, 0.4);
    Conv3dSpec spec3;
    spec3.pad_t = spec3.pad_h = spec3.pad_w = 1;
    spec3.stride_h = spec3.stride_w = 2;
    suite.run("conv3d.x", vx, [&](Tensor<D>& t) { return weighted(conv3d(t, vw, vb, spec3), salt); });
    suite.run("conv3d.w", vw, [&](Tensor<D>& t) { return weighted(conv3d(vx, t, vb, spec3), salt); });

    PatchGrid grid{2, 2};
    suite.run("patchify", x4, [&](Tensor<D>& t) { return weighted(patchify(t, grid), salt); });

    auto il_a = rand_t({1, 3, 3, 3}, rng);
    auto il_b = rand_t({1, 3, 3, 3}, rng);
    suite.run("interleave", il_a, [&](Tensor<D>& t) { return weighted(interleave_channels(t, il_b), salt); });

    auto lp = rand_t({2, 3, 4, 4}, rng);
    auto lt = rand_t({2, 3, 4, 4}, rng);
    Tensor<D> lmask(Shape{2, 1, 4, 4});
    for (auto& v : lmask.vec()) v = rng.next_double() < 0.4 ? 0.0 : 1.0;
    suite.run("l1_loss", lp, [&](Tensor<D>& t) { return l1_loss(t, lt); }, D(1e-6));
    suite.run("l1_loss.masked", lp, [&](Tensor<D>& t) { return l1_loss(t, lt, &lmask); }, D(1e-6));
}

void check_composites(Suite& suite, SplitMix64& rng, std::uint64_t seed) {
    constexpr std::int64_t kCoords = 40;

    // codec
    auto enc = EncoderParams<D>::init(EncoderSpec{3, 2}, rng);
    auto x = rand_t({2, 3, 8, 8}, rng, 0.0, 1.0);
    suite.run("codec.encoder", x, [&](Tensor<D>& t) { return weighted(encode_frames(t, enc), seed); },
              D(1e-7), kCoords);
    suite.run("codec.encoder.w", enc.stem.w, [&](Tensor<D>& t) {
        EncoderParams<D> local = enc;
        local.stem.w = t;
        return weighted(encode_frames(x, local), seed);
    }, D(1e-7), kCoords);

    auto dec = DecoderParams<D>::init(DecoderSpec{2, 3}, rng);
    auto latent = rand_t({2, 8, 2, 2}, rng);
    suite.run("codec.decoder", latent, [&](Tensor<D>& t) { return weighted(decode_frames(t, dec), seed); },
              D(1e-7), kCoords);

    // one transformer block with a partially corrupted mask
    const int c = 4;
    auto blk = BlockParams<D>::init(c, 2, rng);
    auto f = rand_t({2, c, 4, 4}, rng);
    Tensor<D> mask = Tensor<D>::full({2, 1, 16, 16}, 1.0);
    for (int i = 0; i < 16 * 8; ++i) mask.at(i) = 0.0;
    PatchGrid grid{2, 2};
    suite.run("stgde.block", f, [&](Tensor<D>& t) {
        return weighted(block_forward(t, mask, blk, grid).f_next, seed);
    }, D(1e-7), kCoords);
    suite.run("stgde.block.w", blk.q.w, [&](Tensor<D>& t) {
        BlockParams<D> local = blk;
        local.q.w = t;
        return weighted(block_forward(f, mask, local, grid).f_next, seed);
    }, D(1e-7), kCoords);

    // depth head across two blocks
    std::vector<BlockParams<D>> blocks;
    blocks.push_back(BlockParams<D>::init(c, 2, rng));
    blocks.push_back(BlockParams<D>::init(c, 2, rng));
    auto depth_dec = DecoderParams<D>::init(DecoderSpec{1, 1}, rng);
    auto fa = rand_t({1, c, 4, 4}, rng);
    auto fb = rand_t({1, c, 4, 4}, rng);
    suite.run("stgde.depth_head", fa, [&](Tensor<D>& t) {
        std::vector<Tensor<D>> maps = {t, fb};
        return weighted(estimate_depth(maps, blocks, depth_dec), seed);
    }, D(1e-7), kCoords);

    // paired-channel fusion path
    auto depth_enc = EncoderParams<D>::init(EncoderSpec{1, 1}, rng);
    ConvParams<D> fusion = init_conv<D>({4, 2, 3, 3}, rng);
    auto vis = rand_t({1, 4, 2, 2}, rng);
    auto dmap = rand_t({1, 1, 8, 8}, rng, 0.0, 1.0);
    suite.run("bmpcf", dmap, [&](Tensor<D>& t) {
        auto fd2 = encode_depth(t, depth_enc);
        return weighted(fuse_pairs(interleave_channels(vis, fd2), fusion), seed);
    }, D(1e-7), kCoords);

    // critic
    auto ded = DedParams<D>::init(4, rng, {4, 6, 6});
    auto rgbd = rand_t({2, 4, 8, 8}, rng, 0.0, 1.0);
    suite.run("ded.discriminate", rgbd, [&](Tensor<D>& t) { return discriminate(t, ded); },
              D(1e-7), kCoords);
    // sigma stays at its refreshed value: the normalization scale is a
    // constant in the gradient, so the probe must hold it fixed too
    suite.run("ded.discriminate.w", ded.blocks[0].w, [&](Tensor<D>& t) {
        DedParams<D> local = ded;
        local.blocks[0].w = t;
        return discriminate(rgbd, local);
    }, D(1e-7), kCoords);

    // losses
    auto bank = FeatureBank<D>::make();
    auto pred = rand_t({1, 3, 8, 8}, rng, 0.1, 0.9);
    auto target = rand_t({1, 3, 8, 8}, rng, 0.1, 0.9);
    suite.run("losses.perceptual", pred, [&](Tensor<D>& t) { return perceptual_loss(t, target, bank); },
              D(1e-7), kCoords);
    suite.run("losses.style", pred, [&](Tensor<D>& t) { return style_loss(t, target, bank); },
              D(1e-7), kCoords);
    LossWeights<D> weights;
    suite.run("losses.total", pred, [&](Tensor<D>& t) {
        auto l_i = l1_loss(t, target);
        auto l_p = perceptual_loss(t, target, bank);
        auto l_s = style_loss(t, target, bank);
        auto zero = Tensor<D>::scalar(0.0);
        return total_generator_loss(zero, l_i, zero, l_p, l_s, weights);
    }, D(1e-7), kCoords);

    // hinge losses over a score batch
    auto scores = rand_signed({4}, rng, 0.3, 1.8);
    auto fakes = rand_signed({4}, rng, 0.3, 1.8);
    suite.run("ded.loss_ded", scores, [&](Tensor<D>& t) { return loss_ded(t, fakes); }, D(1e-5));
    suite.run("ded.loss_gen", fakes, [&](Tensor<D>& t) { return loss_gen(t); }, D(1e-5));
}

} // namespace

GradSuiteReport run_gradient_suite(int seeds, double tol) {
    const auto t0 = std::chrono::steady_clock::now();
    Suite suite;
    for (int s = 1; s <= seeds; ++s) {
        SplitMix64 rng(static_cast<std::uint64_t>(s) * 0x9E37u + 17u);
        suite.seed = static_cast<std::uint64_t>(s);
        check_primitives(suite, rng, static_cast<std::uint64_t>(s));
        check_composites(suite, rng, static_cast<std::uint64_t>(s));
    }
    GradSuiteReport report;
    report.tol = tol;
    for (const auto& [name, err] : suite.worst) {
        report.rows.push_back(GradCheckRow{name, err});
    }
    report.elapsed_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

} // namespace daevi
