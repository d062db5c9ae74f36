#include <doctest.h>

#include <cstring>

#include "daevi/bmpcf.hpp"
#include "daevi/gradcheck.hpp"
#include "oracles.hpp"

using namespace daevi;

TEST_CASE("encode_depth matches the visual feature geometry") {
    SplitMix64 rng(1);
    auto enc = EncoderParams<float>::init(EncoderSpec{1, 8}, rng);
    Tensor<float> d(Shape{5, 1, 64, 64});
    d.fill_uniform(rng, 0.0f, 1.0f);
    auto f = encode_depth(d, enc);
    CHECK(f.shape() == Shape{5, 32, 16, 16});

    Tensor<float> bad(Shape{5, 3, 64, 64});
    CHECK_THROWS_AS((void)encode_depth(bad, enc), ShapeError);
}

TEST_CASE("encode_depth gradient matches finite differences") {
    SplitMix64 rng(2);
    auto enc = EncoderParams<double>::init(EncoderSpec{1, 2}, rng);
    Tensor<double> d0(Shape{1, 1, 8, 8});
    d0.fill_uniform(rng, 0.0, 1.0);

    Tape<double> tape;
    auto d = d0.clone();
    tape.watch(d);
    tape.backward(reduce_mean(encode_depth(d, enc)));
    auto g = tape.grad(d);

    auto probe = d0.clone();
    auto eval = [&]() { return reduce_mean(encode_depth(probe, enc)).item(); };
    CHECK(fd_compare<double>(eval, probe, g, 1e-4).max_rel_err < 1e-4);
}

TEST_CASE("interleave follows the alternating channel layout") {
    Tensor<float> v(Shape{1, 2, 1, 1}, {10, 11});
    Tensor<float> d(Shape{1, 2, 1, 1}, {20, 21});
    auto paired = interleave_channels(v, d);
    CHECK(paired.shape() == Shape{1, 4, 1, 1});
    CHECK(paired.at(0) == 10.0f);
    CHECK(paired.at(1) == 20.0f);
    CHECK(paired.at(2) == 11.0f);
    CHECK(paired.at(3) == 21.0f);

    Tensor<float> v1(Shape{1, 1, 1, 1}, {7});
    Tensor<float> d1(Shape{1, 1, 1, 1}, {9});
    auto p1 = interleave_channels(v1, d1);
    CHECK(p1.at(0) == 7.0f);
    CHECK(p1.at(1) == 9.0f);
}

TEST_CASE("interleave/deinterleave round trip is bit-exact") {
    SplitMix64 rng(3);
    Tensor<float> v(Shape{2, 16, 5, 5}), d(Shape{2, 16, 5, 5});
    v.fill_uniform(rng, -1.0f, 1.0f);
    d.fill_uniform(rng, -1.0f, 1.0f);
    auto paired = interleave_channels(v, d);
    auto [v2, d2] = deinterleave_channels(paired);
    CHECK(std::memcmp(v2.data(), v.data(), sizeof(float) * v.size()) == 0);
    CHECK(std::memcmp(d2.data(), d.data(), sizeof(float) * d.size()) == 0);

    Tensor<float> mismatched(Shape{2, 16, 4, 4});
    CHECK_THROWS_AS((void)interleave_channels(v, mismatched), ShapeError);
}

TEST_CASE("interleave gradients match finite differences") {
    SplitMix64 rng(4);
    Tensor<double> v0(Shape{1, 3, 3, 3}), d0(Shape{1, 3, 3, 3});
    v0.fill_uniform(rng, -1.0, 1.0);
    d0.fill_uniform(rng, -1.0, 1.0);
    SplitMix64 crng(5);
    Tensor<double> coeff(Shape{1, 6, 3, 3});
    coeff.fill_uniform(crng, -1.0, 1.0);

    Tape<double> tape;
    auto v = v0.clone();
    tape.watch(v);
    tape.backward(reduce_sum(mul(interleave_channels(v, d0), coeff)));
    auto g = tape.grad(v);

    auto probe = v0.clone();
    auto eval = [&]() { return reduce_sum(mul(interleave_channels(probe, d0), coeff)).item(); };
    CHECK(fd_compare<double>(eval, probe, g, 1e-5).max_rel_err < 1e-5);
}

TEST_CASE("fuse_pairs with (1,0) kernels selects the visual channels exactly") {
    SplitMix64 rng(6);
    const int c = 4;
    Tensor<float> v(Shape{2, c, 5, 5}), d(Shape{2, c, 5, 5});
    v.fill_uniform(rng, -1.0f, 1.0f);
    d.fill_uniform(rng, -1.0f, 1.0f);
    auto paired = interleave_channels(v, d);

    ConvParams<float> g;
    g.w = Tensor<float>(Shape{c, 2, 1, 1});
    g.b = Tensor<float>(Shape{c});
    for (int i = 0; i < c; ++i) g.w.at(i * 2 + 0) = 1.0f;
    auto fused = fuse_pairs(paired, g);
    CHECK(std::memcmp(fused.data(), v.data(), sizeof(float) * v.size()) == 0);

    // (0.5, 0.5) kernels average each pair
    for (int i = 0; i < c; ++i) {
        g.w.at(i * 2 + 0) = 0.5f;
        g.w.at(i * 2 + 1) = 0.5f;
    }
    auto mean = fuse_pairs(paired, g);
    for (std::int64_t i = 0; i < mean.size(); ++i) {
        CHECK(mean.at(i) == doctest::Approx(0.5f * (v.at(i) + d.at(i))));
    }
}

TEST_CASE("fuse_pairs locality: perturbing depth channel j touches only output channel j") {
    SplitMix64 rng(7);
    const int c = 6;
    Tensor<float> v(Shape{1, c, 6, 6}), d(Shape{1, c, 6, 6});
    v.fill_uniform(rng, -1.0f, 1.0f);
    d.fill_uniform(rng, -1.0f, 1.0f);
    ConvParams<float> g;
    g.w = Tensor<float>(Shape{c, 2, 3, 3});
    g.w.fill_uniform(rng, -0.5f, 0.5f);
    g.b = Tensor<float>(Shape{c});
    g.b.fill_uniform(rng, -0.5f, 0.5f);

    auto base = fuse_pairs(interleave_channels(v, d), g);
    const std::int64_t plane = 36;
    for (int j = 0; j < c; ++j) {
        auto d_perturbed = d.clone();
        d_perturbed.at(j * plane + 17) += 0.75f;
        auto out = fuse_pairs(interleave_channels(v, d_perturbed), g);
        for (int ch = 0; ch < c; ++ch) {
            double diff = 0.0;
            for (std::int64_t i = 0; i < plane; ++i) {
                diff += std::abs(static_cast<double>(out.at(ch * plane + i)) -
                                 static_cast<double>(base.at(ch * plane + i)));
            }
            if (ch == j) {
                CHECK(diff > 0.0);
            } else {
                CHECK(diff == 0.0);
            }
        }
    }
}

TEST_CASE("fuse_pairs locality holds in the gradient as well") {
    SplitMix64 rng(8);
    const int c = 3;
    Tensor<double> v(Shape{1, c, 4, 4}), d(Shape{1, c, 4, 4});
    v.fill_uniform(rng, -1.0, 1.0);
    d.fill_uniform(rng, -1.0, 1.0);
    ConvParams<double> g;
    g.w = Tensor<double>(Shape{c, 2, 3, 3});
    g.w.fill_uniform(rng, -0.5, 0.5);

    // loss reads only output channel 1; gradients must stay inside pair 1
    Tape<double> tape;
    auto vt = v.clone();
    auto dt = d.clone();
    tape.watch(vt);
    tape.watch(dt);
    auto fused = fuse_pairs(interleave_channels(vt, dt), g);
    tape.backward(reduce_sum(slice_axis(fused, 1, 1, 1)));
    auto gv = tape.grad(vt);
    auto gd = tape.grad(dt);
    const std::int64_t plane = 16;
    for (int ch = 0; ch < c; ++ch) {
        double vsum = 0.0, dsum = 0.0;
        for (std::int64_t i = 0; i < plane; ++i) {
            vsum += std::abs(gv.at(ch * plane + i));
            dsum += std::abs(gd.at(ch * plane + i));
        }
        if (ch == 1) {
            CHECK(vsum > 0.0);
            CHECK(dsum > 0.0);
        } else {
            CHECK(vsum == 0.0);
            CHECK(dsum == 0.0);
        }
    }
}

TEST_CASE("fuse_pairs rejects odd channel counts") {
    Tensor<float> odd(Shape{1, 3, 4, 4});
    ConvParams<float> g;
    g.w = Tensor<float>(Shape{2, 2, 1, 1});
    CHECK_THROWS_AS((void)fuse_pairs(odd, g), ContractError);
}

TEST_CASE("zero depth branch reduces fusion to a per-channel conv of the visual features") {
    SplitMix64 rng(9);
    const int c = 4;
    Tensor<float> v(Shape{2, c, 6, 6});
    v.fill_uniform(rng, -1.0f, 1.0f);
    Tensor<float> zero_d(Shape{2, c, 6, 6});
    ConvParams<float> g;
    g.w = Tensor<float>(Shape{c, 2, 3, 3});
    g.w.fill_uniform(rng, -0.5f, 0.5f);
    g.b = Tensor<float>(Shape{c});
    g.b.fill_uniform(rng, -0.1f, 0.1f);

    auto fused = fuse_pairs(interleave_channels(v, zero_d), g);

    // visual-half kernels applied channel-wise
    ConvParams<float> vis_only;
    vis_only.w = Tensor<float>(Shape{c, 1, 3, 3});
    for (int ch = 0; ch < c; ++ch) {
        for (int i = 0; i < 9; ++i) {
            vis_only.w.at(ch * 9 + i) = g.w.at((ch * 2 + 0) * 9 + i);
        }
    }
    vis_only.b = g.b;
    Conv2dSpec spec;
    spec.groups = c;
    spec.pad_h = spec.pad_w = 1;
    auto want = conv2d(v, vis_only.w, vis_only.b, spec);
    CHECK(oracle::max_abs_diff(fused, want) < 1e-6);
}
