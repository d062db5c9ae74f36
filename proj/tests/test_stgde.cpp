#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "daevi/gradcheck.hpp"
#include "daevi/stgde.hpp"
#include "oracles.hpp"

using namespace daevi;

namespace {

Tensor<float> ones_mask(int t, int h, int w) {
    return Tensor<float>::full({t, 1, h, w}, 1.0f);
}

// Direct double-precision attention evaluation: explicit score matrix,
// explicit exp-normalization, explicit weighted sum.
Tensor<double> attention_direct(const Tensor<double>& qp, const Tensor<double>& kp,
                                const Tensor<double>& vp, const TokenMask& tm,
                                const PatchGrid& grid, int c) {
    const int n = qp.dim(0), d = qp.dim(1);
    const double scale = 1.0 / std::sqrt(static_cast<double>(grid.r1) * grid.r2 * c);
    Tensor<double> out(Shape{n, d});
    for (int q = 0; q < n; ++q) {
        std::vector<double> row(static_cast<std::size_t>(n));
        for (int k = 0; k < n; ++k) {
            double s = 0.0;
            for (int j = 0; j < d; ++j) {
                s += qp.at(q * d + j) * kp.at(k * d + j);
            }
            row[static_cast<std::size_t>(k)] =
                tm.valid[static_cast<std::size_t>(k)] ? s * scale
                                                      : -std::numeric_limits<double>::infinity();
        }
        auto w = oracle::softmax_row_direct(row);
        for (int j = 0; j < d; ++j) {
            double acc = 0.0;
            for (int k = 0; k < n; ++k) {
                acc += w[static_cast<std::size_t>(k)] * vp.at(k * d + j);
            }
            out.at(q * d + j) = acc;
        }
    }
    return out;
}

} // namespace

TEST_CASE("project_qkv: zero weights give zero maps; zero enhancement reduces V to the 1x1 path") {
    SplitMix64 rng(1);
    const int c = 4;
    auto p = BlockParams<float>::init(c, 4, rng);
    Tensor<float> f(Shape{2, c, 6, 6});
    f.fill_uniform(rng, -1.0f, 1.0f);

    auto zeroed = p;
    for (auto* cp : {&zeroed.q, &zeroed.k, &zeroed.v, &zeroed.v_dw}) {
        for (auto& v : cp->w.vec()) v = 0.0f;
        for (auto& v : cp->b.vec()) v = 0.0f;
    }
    auto qkv0 = project_qkv(f, zeroed);
    for (std::int64_t i = 0; i < qkv0.q.size(); ++i) {
        CHECK(qkv0.q.at(i) == 0.0f);
        CHECK(qkv0.k.at(i) == 0.0f);
        CHECK(qkv0.v.at(i) == 0.0f);
    }

    auto ablated = p;
    for (auto& v : ablated.v_dw.w.vec()) v = 0.0f;
    for (auto& v : ablated.v_dw.b.vec()) v = 0.0f;
    auto qkv = project_qkv(f, ablated);
    Conv2dSpec point;
    auto plain = conv2d(f, ablated.v.w, ablated.v.b, point);
    CHECK(oracle::max_abs_diff(qkv.v, plain) == 0.0);
}

TEST_CASE("V minus the 1x1 projection equals a depth-wise conv oracle") {
    SplitMix64 rng(2);
    const int c = 4;
    auto p = BlockParams<float>::init(c, 4, rng);
    Tensor<float> f(Shape{1, c, 5, 5});
    f.fill_uniform(rng, -1.0f, 1.0f);
    auto qkv = project_qkv(f, p);

    Conv2dSpec point;
    auto plain = conv2d(f, p.v.w, p.v.b, point);
    auto enhancement = sub(qkv.v, plain);
    auto want = oracle::conv2d_loops(f, p.v_dw.w, p.v_dw.b, 1, 1, 1, 1, c);
    CHECK(oracle::max_abs_diff(enhancement, want) < 1e-6);
}

TEST_CASE("patchify degenerate grid flattens frames") {
    SplitMix64 rng(3);
    Tensor<float> x(Shape{3, 2, 4, 4});
    x.fill_uniform(rng, -1.0f, 1.0f);
    PatchGrid g{1, 1};
    auto tokens = patchify(x, g);
    CHECK(tokens.shape() == Shape{3, 32});
    CHECK(std::memcmp(tokens.data(), x.data(), sizeof(float) * x.size()) == 0);
}

TEST_CASE("patchify 2x2 of a 2x2 frame gives four scalar tokens in row-major patch order") {
    Tensor<float> x(Shape{1, 1, 2, 2}, {10, 11, 12, 13});
    PatchGrid g{2, 2};
    auto tokens = patchify(x, g);
    CHECK(tokens.shape() == Shape{4, 1});
    CHECK(tokens.at(0) == 10.0f);
    CHECK(tokens.at(1) == 11.0f);
    CHECK(tokens.at(2) == 12.0f);
    CHECK(tokens.at(3) == 13.0f);
}

TEST_CASE("patchify round trip is bit-exact") {
    SplitMix64 rng(4);
    Tensor<float> x(Shape{5, 8, 8, 8});
    x.fill_uniform(rng, -2.0f, 2.0f);
    PatchGrid g{2, 2};
    auto back = unpatchify(patchify(x, g), g, 5, 8, 8, 8);
    CHECK(std::memcmp(back.data(), x.data(), sizeof(float) * x.size()) == 0);

    PatchGrid bad{3, 2};
    CHECK_THROWS_AS((void)patchify(x, bad), ConfigError);
}

TEST_CASE("patchify gradients match finite differences") {
    SplitMix64 rng(5);
    Tensor<double> x0(Shape{2, 3, 4, 4});
    x0.fill_uniform(rng, -1.0, 1.0);
    PatchGrid g{2, 2};

    Tape<double> tape;
    auto x = x0.clone();
    tape.watch(x);
    SplitMix64 crng(99);
    Tensor<double> coeff(Shape{8, 12});
    coeff.fill_uniform(crng, -1.0, 1.0);
    tape.backward(reduce_sum(mul(patchify(x, g), coeff)));
    auto grad = tape.grad(x);

    auto probe = x0.clone();
    auto eval = [&]() { return reduce_sum(mul(patchify(probe, g), coeff)).item(); };
    CHECK(fd_compare<double>(eval, probe, grad, 1e-5).max_rel_err < 1e-5);
}

TEST_CASE("token_validity marks a token invalid only when its whole patch is corrupted") {
    // 1 frame, 4x4 mask, latent 4x4, 2x2 grid -> 2x2 pixel regions per token
    Tensor<float> mask = Tensor<float>::full({1, 1, 4, 4}, 1.0f);
    // fully corrupt the top-right 2x2 region; partially corrupt bottom-left
    mask.at(0 * 4 + 2) = 0.0f;
    mask.at(0 * 4 + 3) = 0.0f;
    mask.at(1 * 4 + 2) = 0.0f;
    mask.at(1 * 4 + 3) = 0.0f;
    mask.at(2 * 4 + 0) = 0.0f;
    PatchGrid g{2, 2};
    auto tm = token_validity(mask, 4, 4, g);
    CHECK(tm.valid == std::vector<std::uint8_t>{1, 0, 1, 1});
}

TEST_CASE("attention single token: weight one, output equals V") {
    Tensor<float> q(Shape{1, 1}, {2.0f});
    Tensor<float> k(Shape{1, 1}, {2.0f});
    Tensor<float> v(Shape{1, 1}, {0.37f});
    TokenMask tm;
    tm.valid = {1};
    PatchGrid g{1, 1};
    auto out = compute_attention(q, k, v, tm, g, 1);
    CHECK(out.at(0) == doctest::Approx(0.37f));
}

TEST_CASE("attention splits weight equally over identical keys") {
    Tensor<float> q(Shape{2, 2}, {1.0f, 0.5f, 1.0f, 0.5f});
    Tensor<float> k(Shape{2, 2}, {0.3f, 0.4f, 0.3f, 0.4f});
    Tensor<float> v(Shape{2, 2}, {1.0f, 0.0f, 0.0f, 1.0f});
    TokenMask tm;
    tm.valid = {1, 1};
    PatchGrid g{1, 1};
    auto out = compute_attention(q, k, v, tm, g, 2);
    // weights are [0.5, 0.5] so the output mixes V rows equally
    CHECK(out.at(0) == doctest::Approx(0.5f));
    CHECK(out.at(1) == doctest::Approx(0.5f));
}

TEST_CASE("attention puts zero weight on a fully corrupted key regardless of score") {
    // key 1 has a much larger raw score but is masked
    Tensor<float> q(Shape{2, 1}, {5.0f, 5.0f});
    Tensor<float> k(Shape{2, 1}, {1.0f, 10.0f});
    Tensor<float> v(Shape{2, 1}, {1.0f, -100.0f});
    TokenMask tm;
    tm.valid = {1, 0};
    PatchGrid g{1, 1};
    auto out = compute_attention(q, k, v, tm, g, 1);
    CHECK(out.at(0) == doctest::Approx(1.0f));
    CHECK(out.at(1) == doctest::Approx(1.0f));
}

TEST_CASE("attention with every key masked returns zeros") {
    Tensor<float> q(Shape{2, 1}, {1.0f, 2.0f});
    Tensor<float> k(Shape{2, 1}, {1.0f, 2.0f});
    Tensor<float> v(Shape{2, 1}, {3.0f, 4.0f});
    TokenMask tm;
    tm.valid = {0, 0};
    PatchGrid g{1, 1};
    auto out = compute_attention(q, k, v, tm, g, 1);
    CHECK(out.at(0) == 0.0f);
    CHECK(out.at(1) == 0.0f);
}

TEST_CASE("attention matches the direct-evaluation oracle on a 20-token instance") {
    SplitMix64 rng(6);
    const int tokens = 20, d = 16;
    Tensor<double> q(Shape{tokens, d}), k(Shape{tokens, d}), v(Shape{tokens, d});
    q.fill_uniform(rng, -1.0, 1.0);
    k.fill_uniform(rng, -1.0, 1.0);
    v.fill_uniform(rng, -1.0, 1.0);
    TokenMask tm;
    tm.valid.assign(tokens, 1);
    tm.valid[3] = 0;
    tm.valid[11] = 0;
    PatchGrid g{2, 2};
    const int c = 4;
    auto got = compute_attention(q, k, v, tm, g, c);
    auto want = attention_direct(q, k, v, tm, g, c);
    CHECK(oracle::max_abs_diff(got, want) < 1e-5);
}

TEST_CASE("attention weight rows over valid keys sum to one") {
    SplitMix64 rng(7);
    const int tokens = 12;
    Tensor<float> q(Shape{tokens, 8}), k(Shape{tokens, 8});
    q.fill_uniform(rng, -1.0f, 1.0f);
    k.fill_uniform(rng, -1.0f, 1.0f);
    // identity V exposes the weight matrix directly
    Tensor<float> v(Shape{tokens, tokens});
    for (int i = 0; i < tokens; ++i) v.at(i * tokens + i) = 1.0f;
    TokenMask tm;
    tm.valid.assign(tokens, 1);
    tm.valid[5] = 0;
    PatchGrid g{1, 1};
    auto w = compute_attention(q, k, v, tm, g, 8);
    for (int qi = 0; qi < tokens; ++qi) {
        double sum = 0.0;
        for (int ki = 0; ki < tokens; ++ki) sum += w.at(qi * tokens + ki);
        CHECK(std::abs(sum - 1.0) < 1e-6);
        CHECK(w.at(qi * tokens + 5) == 0.0f);
    }
}

TEST_CASE("multiplicative mask rule keeps masked keys at their zeroed-score weight") {
    SplitMix64 rng(8);
    const int tokens = 4;
    Tensor<float> q(Shape{tokens, 2}), k(Shape{tokens, 2});
    q.fill_uniform(rng, 0.5f, 1.0f);
    k.fill_uniform(rng, 0.5f, 1.0f);
    Tensor<float> v(Shape{tokens, tokens});
    for (int i = 0; i < tokens; ++i) v.at(i * tokens + i) = 1.0f;
    TokenMask tm;
    tm.valid = {1, 1, 0, 1};
    PatchGrid g{1, 1};
    auto w = compute_attention(q, k, v, tm, g, 2, AttentionMaskRule::Multiplicative);
    // the literal product rule leaves exp(0) mass on the masked key
    for (int qi = 0; qi < tokens; ++qi) {
        CHECK(w.at(qi * tokens + 2) > 0.0f);
    }
}

TEST_CASE("block with zero projection and FFN weights is the identity") {
    SplitMix64 rng(9);
    const int c = 8;
    auto p = BlockParams<float>::init(c, 4, rng);
    for (auto* cp : {&p.out_proj, &p.ffn1, &p.ffn2}) {
        for (auto& v : cp->w.vec()) v = 0.0f;
        for (auto& v : cp->b.vec()) v = 0.0f;
    }
    Tensor<float> f(Shape{2, c, 8, 8});
    f.fill_uniform(rng, -1.0f, 1.0f);
    auto mask = ones_mask(2, 32, 32);
    auto out = block_forward(f, mask, p, PatchGrid{2, 2});
    CHECK(std::memcmp(out.f_next.data(), f.data(), sizeof(float) * f.size()) == 0);
    CHECK(out.f_next.shape() == f.shape());
    CHECK(out.f_att.shape() == f.shape());
}

TEST_CASE("block_forward gradient matches finite differences on an 8x8 instance") {
    SplitMix64 rng(10);
    const int c = 4;
    auto p = BlockParams<double>::init(c, 2, rng);
    Tensor<double> f0(Shape{1, c, 8, 8});
    f0.fill_uniform(rng, -1.0, 1.0);
    auto mask = Tensor<double>::full({1, 1, 32, 32}, 1.0);
    for (int i = 0; i < 32 * 16; ++i) mask.at(i) = 0.0; // corrupt the top half
    PatchGrid g{2, 2};

    Tape<double> tape;
    auto f = f0.clone();
    tape.watch(f);
    tape.backward(reduce_mean(block_forward(f, mask, p, g).f_next));
    auto grad = tape.grad(f);

    auto probe = f0.clone();
    auto eval = [&]() { return reduce_mean(block_forward(probe, mask, p, g).f_next).item(); };
    CHECK(fd_compare<double>(eval, probe, grad, 1e-4).max_rel_err < 1e-4);
}

TEST_CASE("estimate_depth with identity projections decodes the plain sum") {
    SplitMix64 rng(11);
    const int c = 8;
    std::vector<BlockParams<float>> blocks;
    blocks.push_back(BlockParams<float>::init(c, 4, rng));
    blocks.push_back(BlockParams<float>::init(c, 4, rng));
    for (auto& blk : blocks) {
        for (auto& v : blk.depth_proj.w.vec()) v = 0.0f;
        for (auto& v : blk.depth_proj.b.vec()) v = 0.0f;
        for (int ch = 0; ch < c; ++ch) blk.depth_proj.w.at((ch * c + ch)) = 1.0f;
    }
    auto dec = DecoderParams<float>::init(DecoderSpec{2, 1}, rng);

    Tensor<float> f1(Shape{2, c, 4, 4}), f2(Shape{2, c, 4, 4});
    f1.fill_uniform(rng, -1.0f, 1.0f);
    f2.fill_uniform(rng, -1.0f, 1.0f);
    auto d = estimate_depth<float>({f1, f2}, blocks, dec);
    auto want = decode_frames(add(f1, f2), dec);
    CHECK(oracle::max_abs_diff(d, want) == 0.0);
    CHECK(d.shape() == Shape{2, 1, 16, 16});
}

TEST_CASE("estimate_depth output shape and range") {
    SplitMix64 rng(12);
    const int c = 8;
    std::vector<BlockParams<float>> blocks;
    blocks.push_back(BlockParams<float>::init(c, 4, rng));
    auto dec = DecoderParams<float>::init(DecoderSpec{2, 1}, rng);
    Tensor<float> f(Shape{3, c, 16, 16});
    f.fill_uniform(rng, -1.0f, 1.0f);
    auto d = estimate_depth<float>({f}, blocks, dec);
    CHECK(d.shape() == Shape{3, 1, 64, 64});
    for (std::int64_t i = 0; i < d.size(); ++i) {
        CHECK(d.at(i) >= 0.0f);
        CHECK(d.at(i) <= 1.0f);
    }

    std::vector<Tensor<float>> wrong = {f, f};
    CHECK_THROWS_AS((void)estimate_depth<float>(wrong, blocks, dec), ContractError);
}

TEST_CASE("zero attention maps give a constant head-bias depth") {
    SplitMix64 rng(13);
    const int c = 4;
    std::vector<BlockParams<float>> blocks;
    blocks.push_back(BlockParams<float>::init(c, 4, rng));
    auto dec = DecoderParams<float>::init(DecoderSpec{1, 1}, rng);
    for (auto& v : dec.up1.b.vec()) v = 0.0f;
    for (auto& v : dec.up2.b.vec()) v = 0.0f;
    dec.head.b.at(0) = 0.4f;
    for (auto& v : blocks[0].depth_proj.b.vec()) v = 0.0f;

    Tensor<float> zero(Shape{2, c, 4, 4});
    auto d = estimate_depth<float>({zero}, blocks, dec);
    const float expect = 1.0f / (1.0f + std::exp(-0.4f));
    for (std::int64_t i = 0; i < d.size(); ++i) {
        CHECK(d.at(i) == doctest::Approx(expect));
    }
}

TEST_CASE("depth aggregation is invariant to block permutation") {
    SplitMix64 rng(14);
    const int c = 8;
    std::vector<BlockParams<float>> blocks;
    for (int i = 0; i < 3; ++i) blocks.push_back(BlockParams<float>::init(c, 4, rng));
    auto dec = DecoderParams<float>::init(DecoderSpec{2, 1}, rng);
    std::vector<Tensor<float>> maps;
    for (int i = 0; i < 3; ++i) {
        Tensor<float> f(Shape{1, c, 4, 4});
        f.fill_uniform(rng, -1.0f, 1.0f);
        maps.push_back(f);
    }
    auto d1 = estimate_depth(maps, blocks, dec);

    std::vector<BlockParams<float>> blocks_perm = {blocks[2], blocks[0], blocks[1]};
    std::vector<Tensor<float>> maps_perm = {maps[2], maps[0], maps[1]};
    auto d2 = estimate_depth(maps_perm, blocks_perm, dec);
    CHECK(oracle::max_abs_diff(d1, d2) < 1e-6);
}

TEST_CASE("every block feeds the depth head") {
    SplitMix64 rng(15);
    const int c = 8;
    const int ns = 4;
    std::vector<BlockParams<float>> blocks;
    std::vector<Tensor<float>> maps;
    for (int i = 0; i < ns; ++i) {
        blocks.push_back(BlockParams<float>::init(c, 4, rng));
        Tensor<float> f(Shape{1, c, 4, 4});
        f.fill_uniform(rng, -1.0f, 1.0f);
        maps.push_back(f);
    }
    auto dec = DecoderParams<float>::init(DecoderSpec{2, 1}, rng);
    auto base = estimate_depth(maps, blocks, dec);
    for (int i = 0; i < ns; ++i) {
        auto ablated = blocks;
        for (auto& v : ablated[static_cast<std::size_t>(i)].depth_proj.w.vec()) v = 0.0f;
        for (auto& v : ablated[static_cast<std::size_t>(i)].depth_proj.b.vec()) v = 0.0f;
        auto d = estimate_depth(maps, ablated, dec);
        CHECK(oracle::max_abs_diff(base, d) > 0.0);
    }
}
