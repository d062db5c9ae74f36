#include <doctest.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <filesystem>

#include "daevi/metrics.hpp"
#include "daevi/training.hpp"
#include "oracles.hpp"

using namespace daevi;

namespace {

// Tiny config: one 5-frame clip, so every sampled batch contains the same
// frames and step-to-step loss comparisons see a fixed batch.
RunConfig micro_config() {
    RunConfig cfg;
    cfg.model.blocks = 1;
    cfg.model.base_channels = 4;
    cfg.model.critic_channels = {4, 4};
    cfg.data.frame_size = 16;
    cfg.data.clip_frames = 5;
    cfg.data.clips = 1;
    cfg.training.batch_size = 1;
    cfg.training.seed = 99;
    cfg.training.iterations = 10;
    return cfg;
}

std::string temp_file(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

} // namespace

TEST_CASE("sample_batch alternates consecutive and sorted random frames") {
    RunConfig cfg = micro_config();
    cfg.data.clip_frames = 12;
    Dataset data = synthesize_dataset(cfg);

    auto even = sample_batch(data, 0, cfg);
    REQUIRE(even.size() == 1);
    REQUIRE(even[0].frame_indices.size() == 5);
    for (int k = 1; k < 5; ++k) {
        CHECK(even[0].frame_indices[static_cast<std::size_t>(k)] ==
              even[0].frame_indices[static_cast<std::size_t>(k - 1)] + 1);
    }

    auto odd = sample_batch(data, 1, cfg);
    bool sorted_distinct = true;
    for (int k = 1; k < 5; ++k) {
        if (odd[0].frame_indices[static_cast<std::size_t>(k)] <=
            odd[0].frame_indices[static_cast<std::size_t>(k - 1)]) {
            sorted_distinct = false;
        }
    }
    CHECK(sorted_distinct);

    auto again = sample_batch(data, 1, cfg);
    CHECK(again[0].frame_indices == odd[0].frame_indices);
    CHECK(std::memcmp(again[0].frames.data(), odd[0].frames.data(),
                      sizeof(float) * odd[0].frames.size()) == 0);

    // shapes carried through
    CHECK(even[0].frames.shape() == Shape{5, 3, 16, 16});
    CHECK(even[0].mask.shape() == Shape{5, 1, 16, 16});
    CHECK(even[0].depth.shape() == Shape{5, 1, 16, 16});
}

TEST_CASE("sample_batch rejects clips shorter than the sample length") {
    RunConfig cfg = micro_config();
    Dataset data = synthesize_dataset(cfg);
    cfg.training.frames_per_sample = 9;
    CHECK_THROWS_AS((void)sample_batch(data, 0, cfg), DataError);
}

TEST_CASE("loss report satisfies the weighted-sum identity each iteration") {
    RunConfig cfg = micro_config();
    Trainer trainer(cfg);
    for (int i = 0; i < 3; ++i) {
        const StepReport r = trainer.step();
        const double expect = cfg.training.lambda_depth * r.l_d + cfg.training.lambda_image * r.l_i +
                              cfg.training.lambda_adversarial * r.l_gen +
                              cfg.training.lambda_perceptual * r.l_p + cfg.training.lambda_style * r.l_s;
        CHECK(std::abs(r.total - expect) <= 1e-5 * std::max(1.0, std::abs(expect)));
    }
}

TEST_CASE("image-only objective descends on a fixed batch") {
    RunConfig cfg = micro_config();
    cfg.training.lambda_depth = 0.0;
    cfg.training.lambda_perceptual = 0.0;
    cfg.training.lambda_style = 0.0;
    cfg.training.lambda_adversarial = 0.0;
    cfg.training.learning_rate = 1e-3;
    Trainer trainer(cfg);
    const double first = trainer.step().l_i;
    double last = first;
    for (int i = 0; i < 6; ++i) {
        last = trainer.step().l_i;
    }
    CHECK(last < first);
}

TEST_CASE("critic step does not increase its loss when the generator is frozen") {
    RunConfig cfg = micro_config();
    // zero generator weights freeze the generator through zero gradients
    cfg.training.lambda_depth = 0.0;
    cfg.training.lambda_perceptual = 0.0;
    cfg.training.lambda_style = 0.0;
    cfg.training.lambda_image = 0.0;
    cfg.training.lambda_adversarial = 0.0;
    Trainer trainer(cfg);
    const double before = trainer.step().l_ded;
    const double after = trainer.step().l_ded;
    CHECK(after <= before + 1e-7);
}

TEST_CASE("non-finite losses abort with a diagnostic naming the term") {
    RunConfig cfg = micro_config();
    Trainer trainer(cfg);
    trainer.step();
    // poison the frame head so NaN first appears in the reconstruction term
    trainer.generator().frame_decoder.head.w.at(0) = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_WITH_AS(trainer.step(), doctest::Contains("l_i"), NumericError);
}

TEST_CASE("fixed-seed training reproduces the loss trace exactly") {
    RunConfig cfg = micro_config();
    Trainer a(cfg), b(cfg);
    for (int i = 0; i < 5; ++i) {
        const StepReport ra = a.step();
        const StepReport rb = b.step();
        CHECK(ra.total == rb.total);
        CHECK(ra.l_d == rb.l_d);
        CHECK(ra.l_i == rb.l_i);
        CHECK(ra.l_gen == rb.l_gen);
        CHECK(ra.l_p == rb.l_p);
        CHECK(ra.l_s == rb.l_s);
        CHECK(ra.l_ded == rb.l_ded);
    }
}

TEST_CASE("checkpoint round trip resumes the exact trajectory") {
    RunConfig cfg = micro_config();
    const std::string path = temp_file("daevi_ck_test.dvck");

    Trainer trainer(cfg);
    trainer.step();
    trainer.step();
    trainer.save_checkpoint(path);

    std::vector<StepReport> reference;
    for (int i = 0; i < 10; ++i) {
        reference.push_back(trainer.step());
    }

    Trainer resumed(cfg);
    resumed.load_checkpoint(path);
    CHECK(resumed.iteration() == 2);
    for (int i = 0; i < 10; ++i) {
        const StepReport r = resumed.step();
        CHECK(r.total == reference[static_cast<std::size_t>(i)].total);
        CHECK(r.l_ded == reference[static_cast<std::size_t>(i)].l_ded);
        CHECK(r.l_s == reference[static_cast<std::size_t>(i)].l_s);
    }

    // a different config must refuse the checkpoint
    RunConfig other = cfg;
    other.training.seed = 123456;
    Trainer wrong(other);
    CHECK_THROWS_AS(wrong.load_checkpoint(path), ConfigError);
    std::filesystem::remove(path);
}

TEST_CASE("generator_from_snapshot restores weights bit-exactly") {
    RunConfig cfg = micro_config();
    Trainer trainer(cfg);
    trainer.step();
    const Snapshot snap = trainer.snapshot();
    GeneratorParams<float> gen = generator_from_snapshot(cfg, snap);

    auto& orig = trainer.generator();
    auto orig_params = orig.parameters();
    auto new_params = gen.parameters();
    REQUIRE(orig_params.size() == new_params.size());
    for (std::size_t i = 0; i < orig_params.size(); ++i) {
        CHECK(std::memcmp(orig_params[i]->data(), new_params[i]->data(),
                          sizeof(float) * static_cast<std::size_t>(orig_params[i]->size())) == 0);
    }
}

TEST_CASE("infer composites valid pixels straight from the input") {
    RunConfig cfg = micro_config();
    SplitMix64 rng(3);
    auto gen = GeneratorParams<float>::init(cfg.generator_config(), rng);
    Dataset data = synthesize_dataset(cfg);

    auto out = infer_video(gen, data.clips[0], data.masks[0], InferMode::Offline, cfg);
    CHECK(out.shape() == data.clips[0].shape());
    const std::int64_t plane = 16 * 16;
    for (int t = 0; t < 5; ++t) {
        for (std::int64_t i = 0; i < plane; ++i) {
            if (data.masks[0].at(t * plane + i) >= 0.5f) {
                for (int c = 0; c < 3; ++c) {
                    CHECK(out.at((t * 3 + c) * plane + i) == data.clips[0].at((t * 3 + c) * plane + i));
                }
            }
        }
    }

    Tensor<float> short_clip(Shape{3, 3, 16, 16});
    Tensor<float> short_mask(Shape{3, 1, 16, 16});
    CHECK_THROWS_AS((void)infer_video(gen, short_clip, short_mask, InferMode::Offline, cfg), ContractError);
}

TEST_CASE("online inference never reads future frames") {
    RunConfig cfg = micro_config();
    cfg.data.clip_frames = 15;
    SplitMix64 rng(5);
    auto gen = GeneratorParams<float>::init(cfg.generator_config(), rng);
    Dataset data = synthesize_dataset(cfg);
    const Tensor<float>& frames = data.clips[0];
    const Tensor<float>& masks = data.masks[0];

    auto base = infer_video(gen, frames, masks, InferMode::Online, cfg);

    // scramble everything after the first window
    auto perturbed = frames.clone();
    SplitMix64 noise(7);
    const std::int64_t frame_elems = frames.size() / 15;
    for (std::int64_t i = 5 * frame_elems; i < perturbed.size(); ++i) {
        perturbed.at(i) = static_cast<float>(noise.next_double());
    }
    auto shifted = infer_video(gen, perturbed, masks, InferMode::Online, cfg);
    CHECK(std::memcmp(base.data(), shifted.data(), sizeof(float) * 5 * frame_elems) == 0);

    // offline mode references future frames, so the same perturbation leaks in
    auto offline_base = infer_video(gen, frames, masks, InferMode::Offline, cfg);
    auto offline_shift = infer_video(gen, perturbed, masks, InferMode::Offline, cfg);
    double diff = 0.0;
    for (std::int64_t i = 0; i < 5 * frame_elems; ++i) {
        diff += std::abs(offline_base.at(i) - offline_shift.at(i));
    }
    CHECK(diff > 0.0);
}

TEST_CASE("five-frame video forms exactly one window with references drawn from itself") {
    RunConfig cfg = micro_config();
    SplitMix64 rng(9);
    auto gen = GeneratorParams<float>::init(cfg.generator_config(), rng);
    Dataset data = synthesize_dataset(cfg);
    InferStats stats;
    (void)infer_video(gen, data.clips[0], data.masks[0], InferMode::Online, cfg, &stats);
    CHECK(stats.window_starts.size() == 1);
    CHECK(stats.window_starts[0] == 0);
}
