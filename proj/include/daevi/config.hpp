#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "daevi/adam.hpp"
#include "daevi/ded.hpp"
#include "daevi/losses.hpp"
#include "daevi/model.hpp"

namespace daevi {

// Every architecture and optimization knob, serialized to one JSON file.
// Defaults follow the reference settings (8 blocks, loss weights
// 0.1/0.1/250/1/0.01, Adam 1e-4 with betas 0/0.99, batch 4, 5-frame samples)
// with a desk-scale data/schedule (64x64 frames, 3000 iterations).
struct RunConfig {
    struct Model {
        int blocks = 8;
        int base_channels = 8;
        int patch_rows = 2;
        int patch_cols = 2;
        int ffn_expansion = 4;
        int fusion_kernel = 3;
        std::string attention_mask_rule = "additive"; // or "multiplicative"
        std::string hinge_variant = "verbatim";       // or "standard"
        std::vector<int> critic_channels = {16, 32, 64, 64, 64, 64};
    } model;

    struct Data {
        int frame_size = 64;
        int clip_frames = 30;
        int clips = 2;
        double mask_fraction = 0.08;
        int polyps = 3;
        double camera_drift = 0.4;
        double polyp_speed = 0.5;
        double texture_drift = 0.7;
        double texture_strength = 0.25;
    } data;

    struct Training {
        std::int64_t iterations = 3000;
        int batch_size = 4;
        int frames_per_sample = 5;
        double learning_rate = 1e-4;
        double beta1 = 0.0;
        double beta2 = 0.99;
        double adam_eps = 1e-8;
        std::uint64_t seed = 1234;
        double lambda_depth = 0.1;
        double lambda_perceptual = 0.1;
        double lambda_style = 250.0;
        double lambda_image = 1.0;
        double lambda_adversarial = 0.01;
        std::int64_t checkpoint_interval = 1000;
    } training;

    struct Inference {
        std::string mode = "offline"; // or "online"
        int window = 5;
        int reference_frames = 10;
        int neighborhood = 30;
    } inference;

    nlohmann::json to_json() const;
    static RunConfig from_json(const nlohmann::json& j);

    // Rejects unknown keys and wrong value types anywhere in the tree.
    static void check_keys(const nlohmann::json& input);

    void validate() const;

    // FNV-1a over the canonical serialized form, excluding the inference
    // section and schedule bounds (iterations, checkpoint interval), so a
    // checkpoint stays valid across inference-mode changes and extended runs.
    std::uint64_t hash() const;

    GeneratorConfig generator_config() const;
    HingeVariant hinge_variant_enum() const;
    LossWeights<float> loss_weights() const;
    AdamConfig<float> adam_config() const;
};

// Applies one "dotted.path=value" override; the path must name an existing
// leaf. Values parse as JSON scalars, falling back to a plain string.
void apply_override(nlohmann::json& j, const std::string& assignment);

// File + overrides + DAEVI_SEED resolution. Precedence: override > file >
// env seed > default. Empty path keeps the built-in defaults.
RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides);

} // namespace daevi
