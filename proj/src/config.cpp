#include "daevi/config.hpp"

#include <cstdlib>
#include <fstream>

#include "daevi/error.hpp"

namespace daevi {

using nlohmann::json;

json RunConfig::to_json() const {
    json j;
    j["model"]["blocks"] = model.blocks;
    j["model"]["base_channels"] = model.base_channels;
    j["model"]["patch_rows"] = model.patch_rows;
    j["model"]["patch_cols"] = model.patch_cols;
    j["model"]["ffn_expansion"] = model.ffn_expansion;
    j["model"]["fusion_kernel"] = model.fusion_kernel;
    j["model"]["attention_mask_rule"] = model.attention_mask_rule;
    j["model"]["hinge_variant"] = model.hinge_variant;
    j["model"]["critic_channels"] = model.critic_channels;
    j["data"]["frame_size"] = data.frame_size;
    j["data"]["clip_frames"] = data.clip_frames;
    j["data"]["clips"] = data.clips;
    j["data"]["mask_fraction"] = data.mask_fraction;
    j["data"]["polyps"] = data.polyps;
    j["data"]["camera_drift"] = data.camera_drift;
    j["data"]["polyp_speed"] = data.polyp_speed;
    j["data"]["texture_drift"] = data.texture_drift;
    j["data"]["texture_strength"] = data.texture_strength;
    j["training"]["iterations"] = training.iterations;
    j["training"]["batch_size"] = training.batch_size;
    j["training"]["frames_per_sample"] = training.frames_per_sample;
    j["training"]["learning_rate"] = training.learning_rate;
    j["training"]["beta1"] = training.beta1;
    j["training"]["beta2"] = training.beta2;
    j["training"]["adam_eps"] = training.adam_eps;
    j["training"]["seed"] = training.seed;
    j["training"]["lambda_depth"] = training.lambda_depth;
    j["training"]["lambda_perceptual"] = training.lambda_perceptual;
    j["training"]["lambda_style"] = training.lambda_style;
    j["training"]["lambda_image"] = training.lambda_image;
    j["training"]["lambda_adversarial"] = training.lambda_adversarial;
    j["training"]["checkpoint_interval"] = training.checkpoint_interval;
    j["inference"]["mode"] = inference.mode;
    j["inference"]["window"] = inference.window;
    j["inference"]["reference_frames"] = inference.reference_frames;
    j["inference"]["neighborhood"] = inference.neighborhood;
    return j;
}

namespace {

void check_keys_recursive(const json& input, const json& schema, const std::string& path) {
    for (auto it = input.begin(); it != input.end(); ++it) {
        const std::string here = path.empty() ? it.key() : path + "." + it.key();
        if (!schema.contains(it.key())) {
            throw ConfigError("unknown config key '" + here + "'");
        }
        const json& ref = schema.at(it.key());
        const json& val = it.value();
        if (ref.is_object()) {
            if (!val.is_object()) {
                throw ConfigError("config key '" + here + "' must be an object");
            }
            check_keys_recursive(val, ref, here);
        } else if (ref.is_string()) {
            if (!val.is_string()) {
                throw ConfigError("config key '" + here + "' must be a string");
            }
        } else if (ref.is_array()) {
            if (!val.is_array()) {
                throw ConfigError("config key '" + here + "' must be an array");
            }
        } else if (ref.is_number()) {
            if (!val.is_number()) {
                throw ConfigError("config key '" + here + "' must be a number");
            }
        }
    }
}

template <typename T>
void fetch(const json& j, const char* section, const char* key, T& out) {
    if (j.contains(section) && j.at(section).contains(key)) {
        out = j.at(section).at(key).get<T>();
    }
}

} // namespace

void RunConfig::check_keys(const json& input) {
    check_keys_recursive(input, RunConfig().to_json(), "");
}

RunConfig RunConfig::from_json(const json& j) {
    check_keys(j);
    RunConfig c;
    fetch(j, "model", "blocks", c.model.blocks);
    fetch(j, "model", "base_channels", c.model.base_channels);
    fetch(j, "model", "patch_rows", c.model.patch_rows);
    fetch(j, "model", "patch_cols", c.model.patch_cols);
    fetch(j, "model", "ffn_expansion", c.model.ffn_expansion);
    fetch(j, "model", "fusion_kernel", c.model.fusion_kernel);
    fetch(j, "model", "attention_mask_rule", c.model.attention_mask_rule);
    fetch(j, "model", "hinge_variant", c.model.hinge_variant);
    fetch(j, "model", "critic_channels", c.model.critic_channels);
    fetch(j, "data", "frame_size", c.data.frame_size);
    fetch(j, "data", "clip_frames", c.data.clip_frames);
    fetch(j, "data", "clips", c.data.clips);
    fetch(j, "data", "mask_fraction", c.data.mask_fraction);
    fetch(j, "data", "polyps", c.data.polyps);
    fetch(j, "data", "camera_drift", c.data.camera_drift);
    fetch(j, "data", "polyp_speed", c.data.polyp_speed);
    fetch(j, "data", "texture_drift", c.data.texture_drift);
    fetch(j, "data", "texture_strength", c.data.texture_strength);
    fetch(j, "training", "iterations", c.training.iterations);
    fetch(j, "training", "batch_size", c.training.batch_size);
    fetch(j, "training", "frames_per_sample", c.training.frames_per_sample);
    fetch(j, "training", "learning_rate", c.training.learning_rate);
    fetch(j, "training", "beta1", c.training.beta1);
    fetch(j, "training", "beta2", c.training.beta2);
    fetch(j, "training", "adam_eps", c.training.adam_eps);
    fetch(j, "training", "seed", c.training.seed);
    fetch(j, "training", "lambda_depth", c.training.lambda_depth);
    fetch(j, "training", "lambda_perceptual", c.training.lambda_perceptual);
    fetch(j, "training", "lambda_style", c.training.lambda_style);
    fetch(j, "training", "lambda_image", c.training.lambda_image);
    fetch(j, "training", "lambda_adversarial", c.training.lambda_adversarial);
    fetch(j, "training", "checkpoint_interval", c.training.checkpoint_interval);
    fetch(j, "inference", "mode", c.inference.mode);
    fetch(j, "inference", "window", c.inference.window);
    fetch(j, "inference", "reference_frames", c.inference.reference_frames);
    fetch(j, "inference", "neighborhood", c.inference.neighborhood);
    c.validate();
    return c;
}

void RunConfig::validate() const {
    if (model.blocks < 1) {
        throw ConfigError("model.blocks must be >= 1");
    }
    if (model.base_channels < 1) {
        throw ConfigError("model.base_channels must be >= 1");
    }
    if (model.patch_rows < 1 || model.patch_cols < 1) {
        throw ConfigError("model.patch_rows/patch_cols must be >= 1");
    }
    if (model.fusion_kernel != 1 && model.fusion_kernel != 3) {
        throw ConfigError("model.fusion_kernel must be 1 or 3");
    }
    if (model.attention_mask_rule != "additive" && model.attention_mask_rule != "multiplicative") {
        throw ConfigError("model.attention_mask_rule must be 'additive' or 'multiplicative'");
    }
    if (model.hinge_variant != "verbatim" && model.hinge_variant != "standard") {
        throw ConfigError("model.hinge_variant must be 'verbatim' or 'standard'");
    }
    if (model.critic_channels.empty()) {
        throw ConfigError("model.critic_channels must name at least one block");
    }
    if (data.frame_size < 8 || data.frame_size % 4 != 0) {
        throw ConfigError("data.frame_size must be >= 8 and divisible by 4");
    }
    const int latent = data.frame_size / 4;
    if (latent % model.patch_rows != 0 || latent % model.patch_cols != 0) {
        throw ConfigError("latent extent " + std::to_string(latent) +
                          " is not divisible by the patch grid");
    }
    if (data.clips < 1 || data.clip_frames < 1) {
        throw ConfigError("data.clips and data.clip_frames must be >= 1");
    }
    if (data.mask_fraction < 0.0 || data.mask_fraction >= 0.5) {
        throw ConfigError("data.mask_fraction must be in [0, 0.5)");
    }
    if (training.batch_size < 1 || training.iterations < 0) {
        throw ConfigError("training.batch_size must be >= 1 and iterations >= 0");
    }
    if (training.frames_per_sample < 1) {
        throw ConfigError("training.frames_per_sample must be >= 1");
    }
    if (data.clip_frames < training.frames_per_sample) {
        throw ConfigError("data.clip_frames must be >= training.frames_per_sample");
    }
    if (inference.mode != "offline" && inference.mode != "online") {
        throw ConfigError("inference.mode must be 'offline' or 'online'");
    }
    if (inference.window < 1 || inference.reference_frames < 0 || inference.neighborhood < 1) {
        throw ConfigError("inference.window/reference_frames/neighborhood out of range");
    }
}

std::uint64_t RunConfig::hash() const {
    // inference settings and schedule bounds do not affect the persisted
    // state: the same checkpoint serves offline/online runs and can be
    // resumed with a larger iteration budget
    json j = to_json();
    j.erase("inference");
    j["training"].erase("iterations");
    j["training"].erase("checkpoint_interval");
    const std::string dump = j.dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : dump) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

GeneratorConfig RunConfig::generator_config() const {
    GeneratorConfig g;
    g.base_channels = model.base_channels;
    g.blocks = model.blocks;
    g.grid.r1 = model.patch_rows;
    g.grid.r2 = model.patch_cols;
    g.ffn_expansion = model.ffn_expansion;
    g.fusion_kernel = model.fusion_kernel;
    g.mask_rule = model.attention_mask_rule == "additive" ? AttentionMaskRule::Additive
                                                          : AttentionMaskRule::Multiplicative;
    return g;
}

HingeVariant RunConfig::hinge_variant_enum() const {
    return model.hinge_variant == "verbatim" ? HingeVariant::Verbatim : HingeVariant::Standard;
}

LossWeights<float> RunConfig::loss_weights() const {
    LossWeights<float> w;
    w.depth = static_cast<float>(training.lambda_depth);
    w.perceptual = static_cast<float>(training.lambda_perceptual);
    w.style = static_cast<float>(training.lambda_style);
    w.image = static_cast<float>(training.lambda_image);
    w.adversarial = static_cast<float>(training.lambda_adversarial);
    return w;
}

AdamConfig<float> RunConfig::adam_config() const {
    AdamConfig<float> a;
    a.lr = static_cast<float>(training.learning_rate);
    a.beta1 = static_cast<float>(training.beta1);
    a.beta2 = static_cast<float>(training.beta2);
    a.eps = static_cast<float>(training.adam_eps);
    return a;
}

void apply_override(json& j, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw ConfigError("override '" + assignment + "' is not of the form key.path=value");
    }
    const std::string path = assignment.substr(0, eq);
    const std::string value = assignment.substr(eq + 1);

    // the path must name an existing leaf in the schema
    const json schema = RunConfig().to_json();
    const json* ref = &schema;
    json* node = &j;
    std::size_t start = 0;
    std::vector<std::string> parts;
    while (true) {
        const auto dot = path.find('.', start);
        parts.push_back(path.substr(start, dot == std::string::npos ? std::string::npos : dot - start));
        if (dot == std::string::npos) break;
        start = dot + 1;
    }
    for (std::size_t i = 0; i < parts.size(); ++i) {
        const std::string& key = parts[i];
        if (!ref->is_object() || !ref->contains(key)) {
            throw ConfigError("override names unknown config key '" + path + "'");
        }
        ref = &ref->at(key);
        if (i + 1 < parts.size()) {
            node = &(*node)[key];
        } else {
            if (ref->is_object()) {
                throw ConfigError("override '" + path + "' names a section, not a value");
            }
            json parsed;
            try {
                parsed = json::parse(value);
            } catch (const json::exception&) {
                parsed = value; // plain string
            }
            (*node)[key] = parsed;
        }
    }
}

RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
    json j = json::object();
    if (!path.empty()) {
        std::ifstream is(path);
        if (!is) {
            throw ConfigError("config file not found: " + path);
        }
        try {
            is >> j;
        } catch (const json::exception& e) {
            throw ConfigError("config file " + path + " does not parse: " + e.what());
        }
        if (!j.is_object()) {
            throw ConfigError("config file " + path + " must hold a JSON object");
        }
    }
    RunConfig::check_keys(j);

    // DAEVI_SEED applies only when nothing else specifies the seed
    const bool seed_in_file = j.contains("training") && j.at("training").contains("seed");
    bool seed_in_override = false;
    for (const std::string& ov : overrides) {
        apply_override(j, ov);
        if (ov.rfind("training.seed=", 0) == 0) {
            seed_in_override = true;
        }
    }
    if (!seed_in_file && !seed_in_override) {
        if (const char* env = std::getenv("DAEVI_SEED")) {
            try {
                j["training"]["seed"] = static_cast<std::uint64_t>(std::stoull(env));
            } catch (const std::exception&) {
                throw ConfigError("DAEVI_SEED is not an unsigned integer: " + std::string(env));
            }
        }
    }
    return RunConfig::from_json(j);
}

} // namespace daevi
