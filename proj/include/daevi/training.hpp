#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "daevi/adam.hpp"
#include "daevi/checkpoint.hpp"
#include "daevi/config.hpp"
#include "daevi/ded.hpp"
#include "daevi/losses.hpp"
#include "daevi/model.hpp"
#include "daevi/synth.hpp"

namespace daevi {

// Synthetic training corpus: full-length clips with masks and analytic depth,
// all derived deterministically from the run seed.
struct Dataset {
    std::vector<Tensor<float>> clips;  // T_full×3×H×W
    std::vector<Tensor<float>> masks;  // T_full×1×H×W, 0 = corrupted
    std::vector<Tensor<float>> depths; // T_full×1×H×W
};

Dataset synthesize_dataset(const RunConfig& cfg);

struct BatchSample {
    Tensor<float> frames;
    Tensor<float> mask;
    Tensor<float> depth;
    std::vector<int> frame_indices;
    int clip_index = 0;
};

// Even iterations take consecutive frames, odd iterations take sorted random
// frames from one clip; deterministic in (seed, iteration, slot).
std::vector<BatchSample> sample_batch(const Dataset& data, std::uint64_t iteration, const RunConfig& cfg);

struct StepReport {
    double l_d = 0;
    double l_i = 0;
    double l_gen = 0;
    double l_p = 0;
    double l_s = 0;
    double total = 0;
    double l_ded = 0;
    double millis = 0;
};

// Alternating critic/generator optimization with a shared tape per
// iteration. Single-writer; construct one Trainer per training run.
class Trainer {
public:
    explicit Trainer(const RunConfig& cfg);

    StepReport step();

    std::uint64_t iteration() const { return iteration_; }
    const RunConfig& config() const { return cfg_; }
    GeneratorParams<float>& generator() { return gen_; }
    DedParams<float>& critic() { return ded_; }
    const Dataset& dataset() const { return data_; }

    Snapshot snapshot() const;
    void save_checkpoint(const std::string& path) const;
    // Requires a checkpoint written with an identical config.
    void load_checkpoint(const std::string& path);

private:
    RunConfig cfg_;
    Dataset data_;
    GeneratorParams<float> gen_;
    DedParams<float> ded_;
    FeatureBank<float> bank_;
    AdamState<float> opt_gen_;
    AdamState<float> opt_ded_;
    Tape<float> tape_;
    SplitMix64 rng_;
    std::uint64_t iteration_ = 0;

    std::vector<Tensor<float>*> gen_params_;
    std::vector<Tensor<float>*> ded_params_;
};

enum class InferMode {
    Offline,
    Online,
};

struct InferStats {
    std::vector<double> window_millis;
    std::vector<int> window_starts;
};

// Rebuilds a generator from a checkpoint written under the same config.
GeneratorParams<float> generator_from_snapshot(const RunConfig& cfg, const Snapshot& snap);

// Sliding-window inpainting: 5-target windows plus sampled reference frames,
// composited as mask*input + (1-mask)*prediction. Offline samples references
// from both sides of the window; online only from strictly earlier frames
// (falling back to the window's own frames at the very start).
Tensor<float> infer_video(GeneratorParams<float>& gen, const Tensor<float>& frames,
                          const Tensor<float>& masks, InferMode mode, const RunConfig& cfg,
                          InferStats* stats = nullptr);

} // namespace daevi
