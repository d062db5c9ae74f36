#include "daevi/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <map>

#include "daevi/error.hpp"

namespace daevi {

namespace {

Tensor<float> gather_frames(const Tensor<float>& clip, const std::vector<int>& indices) {
    Shape shape = clip.shape();
    shape[0] = static_cast<int>(indices.size());
    Tensor<float> out(shape);
    const std::int64_t frame_elems = clip.size() / clip.dim(0);
    for (std::size_t k = 0; k < indices.size(); ++k) {
        std::memcpy(out.data() + static_cast<std::int64_t>(k) * frame_elems,
                    clip.data() + static_cast<std::int64_t>(indices[k]) * frame_elems,
                    sizeof(float) * static_cast<std::size_t>(frame_elems));
    }
    return out;
}

double wall_ms(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

} // namespace

Dataset synthesize_dataset(const RunConfig& cfg) {
    Dataset data;
    for (int i = 0; i < cfg.data.clips; ++i) {
        SyntheticScene scene;
        scene.seed = SplitMix64::derive(cfg.training.seed, 100 + static_cast<std::uint64_t>(i)).next_u64();
        scene.polyps = cfg.data.polyps;
        scene.camera_drift = cfg.data.camera_drift;
        scene.polyp_speed = cfg.data.polyp_speed;
        scene.texture_drift = cfg.data.texture_drift;
        scene.texture_strength = cfg.data.texture_strength;
        auto clip = generate_clip(scene, cfg.data.clip_frames, cfg.data.frame_size, cfg.data.frame_size);

        MaskSpec mspec;
        mspec.seed = SplitMix64::derive(cfg.training.seed, 500 + static_cast<std::uint64_t>(i)).next_u64();
        mspec.fraction = cfg.data.mask_fraction;
        auto mask = generate_masks(mspec, cfg.data.clip_frames, cfg.data.frame_size, cfg.data.frame_size);

        data.clips.push_back(std::move(clip.frames));
        data.depths.push_back(std::move(clip.depth));
        data.masks.push_back(std::move(mask));
    }
    return data;
}

std::vector<BatchSample> sample_batch(const Dataset& data, std::uint64_t iteration, const RunConfig& cfg) {
    if (data.clips.empty()) {
        throw ContractError("sample_batch: empty dataset");
    }
    const int frames_per_sample = cfg.training.frames_per_sample;
    SplitMix64 rng = SplitMix64::derive(cfg.training.seed, 0x5A11000ULL + iteration);
    std::vector<BatchSample> batch;
    for (int b = 0; b < cfg.training.batch_size; ++b) {
        const int clip_idx = static_cast<int>(rng.next_below(data.clips.size()));
        const Tensor<float>& clip = data.clips[static_cast<std::size_t>(clip_idx)];
        const int total = clip.dim(0);
        if (total < frames_per_sample) {
            throw DataError("sample_batch: clip " + std::to_string(clip_idx) + " has " +
                            std::to_string(total) + " frames, need " + std::to_string(frames_per_sample));
        }
        std::vector<int> indices;
        if (iteration % 2 == 0) {
            const int start = static_cast<int>(rng.next_below(
                static_cast<std::uint64_t>(total - frames_per_sample + 1)));
            for (int k = 0; k < frames_per_sample; ++k) indices.push_back(start + k);
        } else {
            std::vector<int> all(static_cast<std::size_t>(total));
            for (int k = 0; k < total; ++k) all[static_cast<std::size_t>(k)] = k;
            for (int k = 0; k < frames_per_sample; ++k) {
                const int j = k + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(total - k)));
                std::swap(all[static_cast<std::size_t>(k)], all[static_cast<std::size_t>(j)]);
            }
            indices.assign(all.begin(), all.begin() + frames_per_sample);
            std::sort(indices.begin(), indices.end());
        }
        BatchSample sample;
        sample.clip_index = clip_idx;
        sample.frame_indices = indices;
        sample.frames = gather_frames(clip, indices);
        sample.mask = gather_frames(data.masks[static_cast<std::size_t>(clip_idx)], indices);
        sample.depth = gather_frames(data.depths[static_cast<std::size_t>(clip_idx)], indices);
        batch.push_back(std::move(sample));
    }
    return batch;
}

Trainer::Trainer(const RunConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    data_ = synthesize_dataset(cfg_);

    SplitMix64 init_rng = SplitMix64::derive(cfg_.training.seed, 0xD0D0ULL);
    gen_ = GeneratorParams<float>::init(cfg_.generator_config(), init_rng);
    ded_ = DedParams<float>::init(4, init_rng, cfg_.model.critic_channels);
    bank_ = FeatureBank<float>::make();

    gen_params_ = gen_.parameters();
    ded_.visit_trainable("d", [&](const std::string&, Tensor<float>& t) { ded_params_.push_back(&t); });
    opt_gen_.init(gen_params_);
    opt_ded_.init(ded_params_);
    rng_ = SplitMix64::derive(cfg_.training.seed, 0xCAFEULL);
}

StepReport Trainer::step() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto batch = sample_batch(data_, iteration_, cfg_);
    const auto weights = cfg_.loss_weights();
    const auto hinge = cfg_.hinge_variant_enum();
    const int b = static_cast<int>(batch.size());
    const float inv_b = 1.0f / static_cast<float>(b);

    tape_.reset();
    for (auto* p : gen_params_) {
        tape_.watch(*p);
    }

    std::vector<GeneratorOut<float>> outs;
    outs.reserve(batch.size());
    for (const auto& s : batch) {
        outs.push_back(generator_forward(s.frames, s.mask, gen_));
    }

    // critic update on detached generator outputs
    ded_.refresh_spectral_norm();
    for (auto* p : ded_params_) {
        tape_.watch(*p);
    }
    std::vector<Tensor<float>> real_scores, fake_scores;
    for (int i = 0; i < b; ++i) {
        auto rgbd_real = concat({batch[static_cast<std::size_t>(i)].frames,
                                 batch[static_cast<std::size_t>(i)].depth}, 1);
        auto rgbd_fake = concat({outs[static_cast<std::size_t>(i)].frames.detached(),
                                 outs[static_cast<std::size_t>(i)].depth.detached()}, 1);
        real_scores.push_back(discriminate(rgbd_real, ded_));
        fake_scores.push_back(discriminate(rgbd_fake, ded_));
    }
    auto l_ded = loss_ded(concat(real_scores, 0), concat(fake_scores, 0), hinge);
    tape_.backward(l_ded);
    std::vector<Tensor<float>> ded_grads;
    ded_grads.reserve(ded_params_.size());
    for (auto* p : ded_params_) {
        ded_grads.push_back(tape_.grad(*p));
    }
    adam_step(ded_params_, ded_grads, opt_ded_, cfg_.adam_config());

    // generator update against the refreshed critic
    Tensor<float> acc_d = Tensor<float>::scalar(0.0f);
    Tensor<float> acc_i = Tensor<float>::scalar(0.0f);
    Tensor<float> acc_p = Tensor<float>::scalar(0.0f);
    Tensor<float> acc_s = Tensor<float>::scalar(0.0f);
    std::vector<Tensor<float>> gen_scores;
    for (int i = 0; i < b; ++i) {
        const auto& s = batch[static_cast<std::size_t>(i)];
        const auto& out = outs[static_cast<std::size_t>(i)];
        acc_d = add(acc_d, l1_loss(out.depth, s.depth));
        acc_i = add(acc_i, l1_loss(out.frames, s.frames));
        acc_p = add(acc_p, perceptual_loss(out.frames, s.frames, bank_));
        acc_s = add(acc_s, style_loss(out.frames, s.frames, bank_));
        gen_scores.push_back(discriminate(concat({out.frames, out.depth}, 1), ded_, /*frozen_weights=*/true));
    }
    auto l_d = scale_add(acc_d, inv_b, 0.0f);
    auto l_i = scale_add(acc_i, inv_b, 0.0f);
    auto l_p = scale_add(acc_p, inv_b, 0.0f);
    auto l_s = scale_add(acc_s, inv_b, 0.0f);
    auto l_gen = loss_gen(concat(gen_scores, 0));
    auto total = total_generator_loss(l_d, l_i, l_gen, l_p, l_s, weights);

    StepReport report;
    report.l_d = static_cast<double>(l_d.item());
    report.l_i = static_cast<double>(l_i.item());
    report.l_gen = static_cast<double>(l_gen.item());
    report.l_p = static_cast<double>(l_p.item());
    report.l_s = static_cast<double>(l_s.item());
    report.total = static_cast<double>(total.item());
    report.l_ded = static_cast<double>(l_ded.item());
    const struct {
        const char* name;
        double value;
    } terms[] = {{"l_d", report.l_d}, {"l_i", report.l_i}, {"l_gen", report.l_gen},
                 {"l_p", report.l_p}, {"l_s", report.l_s}, {"total", report.total},
                 {"l_ded", report.l_ded}};
    for (const auto& term : terms) {
        if (!std::isfinite(term.value)) {
            throw NumericError("training aborted: loss term " + std::string(term.name) +
                               " is non-finite at iteration " + std::to_string(iteration_));
        }
    }

    tape_.backward(total);
    std::vector<Tensor<float>> gen_grads;
    gen_grads.reserve(gen_params_.size());
    for (auto* p : gen_params_) {
        gen_grads.push_back(tape_.grad(*p));
    }
    tape_.reset();
    adam_step(gen_params_, gen_grads, opt_gen_, cfg_.adam_config());

    ++iteration_;
    report.millis = wall_ms(t0);
    return report;
}

Snapshot Trainer::snapshot() const {
    Snapshot snap;
    snap.config_hash = cfg_.hash();
    snap.iteration = iteration_;
    snap.rng_state = rng_.state();
    snap.gen_adam_step = static_cast<std::uint64_t>(opt_gen_.step);
    snap.ded_adam_step = static_cast<std::uint64_t>(opt_ded_.step);

    auto& gen = const_cast<GeneratorParams<float>&>(gen_);
    auto& ded = const_cast<DedParams<float>&>(ded_);
    std::vector<std::string> gen_names, ded_names;
    gen.visit([&](const std::string& name, Tensor<float>& t) {
        snap.tensors.emplace_back("g." + name, t.clone());
        gen_names.push_back(name);
    });
    ded.visit_trainable("d", [&](const std::string& name, Tensor<float>& t) {
        snap.tensors.emplace_back(name, t.clone());
        ded_names.push_back(name);
    });
    ded.visit_buffers("d", [&](const std::string& name, Tensor<float>& t) {
        snap.tensors.emplace_back(name, t.clone());
    });
    for (std::size_t i = 0; i < gen_names.size(); ++i) {
        snap.tensors.emplace_back("og.m." + gen_names[i], opt_gen_.m[i].clone());
        snap.tensors.emplace_back("og.v." + gen_names[i], opt_gen_.v[i].clone());
    }
    for (std::size_t i = 0; i < ded_names.size(); ++i) {
        snap.tensors.emplace_back("od.m." + ded_names[i], opt_ded_.m[i].clone());
        snap.tensors.emplace_back("od.v." + ded_names[i], opt_ded_.v[i].clone());
    }
    return snap;
}

void Trainer::save_checkpoint(const std::string& path) const {
    save_snapshot(path, snapshot());
}

void Trainer::load_checkpoint(const std::string& path) {
    const Snapshot snap = load_snapshot(path);
    if (snap.config_hash != cfg_.hash()) {
        throw ConfigError("checkpoint " + path + " was written with a different config");
    }
    std::map<std::string, const Tensor<float>*> by_name;
    for (const auto& [name, tensor] : snap.tensors) {
        by_name[name] = &tensor;
    }
    auto restore = [&](const std::string& name, Tensor<float>& dst) {
        auto it = by_name.find(name);
        if (it == by_name.end()) {
            throw DataError("checkpoint is missing tensor '" + name + "'");
        }
        if (it->second->shape() != dst.shape()) {
            throw DataError("checkpoint tensor '" + name + "' has shape " +
                            shape_str(it->second->shape()) + ", expected " + shape_str(dst.shape()));
        }
        std::memcpy(dst.data(), it->second->data(), sizeof(float) * static_cast<std::size_t>(dst.size()));
    };

    std::vector<std::string> gen_names, ded_names;
    gen_.visit([&](const std::string& name, Tensor<float>& t) {
        restore("g." + name, t);
        gen_names.push_back(name);
    });
    ded_.visit_trainable("d", [&](const std::string& name, Tensor<float>& t) {
        restore(name, t);
        ded_names.push_back(name);
    });
    ded_.visit_buffers("d", [&](const std::string& name, Tensor<float>& t) { restore(name, t); });
    for (std::size_t i = 0; i < gen_names.size(); ++i) {
        restore("og.m." + gen_names[i], opt_gen_.m[i]);
        restore("og.v." + gen_names[i], opt_gen_.v[i]);
    }
    for (std::size_t i = 0; i < ded_names.size(); ++i) {
        restore("od.m." + ded_names[i], opt_ded_.m[i]);
        restore("od.v." + ded_names[i], opt_ded_.v[i]);
    }
    opt_gen_.step = static_cast<std::int64_t>(snap.gen_adam_step);
    opt_ded_.step = static_cast<std::int64_t>(snap.ded_adam_step);
    iteration_ = snap.iteration;
    rng_.set_state(snap.rng_state);
    // sigma caches are re-derived from the restored weights and u vectors at
    // the start of the next step's refresh, so nothing else to restore
}

GeneratorParams<float> generator_from_snapshot(const RunConfig& cfg, const Snapshot& snap) {
    if (snap.config_hash != cfg.hash()) {
        throw ConfigError("checkpoint was written with a different config");
    }
    SplitMix64 init_rng = SplitMix64::derive(cfg.training.seed, 0xD0D0ULL);
    GeneratorParams<float> gen = GeneratorParams<float>::init(cfg.generator_config(), init_rng);
    std::map<std::string, const Tensor<float>*> by_name;
    for (const auto& [name, tensor] : snap.tensors) {
        by_name[name] = &tensor;
    }
    gen.visit([&](const std::string& name, Tensor<float>& t) {
        auto it = by_name.find("g." + name);
        if (it == by_name.end()) {
            throw DataError("checkpoint is missing generator tensor 'g." + name + "'");
        }
        if (it->second->shape() != t.shape()) {
            throw DataError("checkpoint tensor 'g." + name + "' has unexpected shape " +
                            shape_str(it->second->shape()));
        }
        std::memcpy(t.data(), it->second->data(), sizeof(float) * static_cast<std::size_t>(t.size()));
    });
    return gen;
}

Tensor<float> infer_video(GeneratorParams<float>& gen, const Tensor<float>& frames,
                          const Tensor<float>& masks, InferMode mode, const RunConfig& cfg,
                          InferStats* stats) {
    if (frames.ndim() != 4 || frames.dim(1) != 3) {
        throw ShapeError("infer_video: expected frames T×3×H×W, got " + shape_str(frames.shape()));
    }
    if (masks.ndim() != 4 || masks.dim(1) != 1 || masks.dim(0) != frames.dim(0) ||
        masks.dim(2) != frames.dim(2) || masks.dim(3) != frames.dim(3)) {
        throw ShapeError("infer_video: mask shape " + shape_str(masks.shape()) + " does not match frames");
    }
    const int total = frames.dim(0);
    const int window = cfg.inference.window;
    const int refs = cfg.inference.reference_frames;
    const int hood = cfg.inference.neighborhood;
    if (total < window) {
        throw ContractError("infer_video: need at least " + std::to_string(window) + " frames, got " +
                            std::to_string(total));
    }

    Tensor<float> result = frames.clone();
    std::vector<bool> written(static_cast<std::size_t>(total), false);
    const std::int64_t frame_elems = frames.size() / total;
    const std::int64_t mask_elems = masks.size() / total;

    std::vector<int> starts;
    for (int s = 0; s < total; s += window) {
        starts.push_back(std::min(s, total - window));
    }

    int window_index = 0;
    for (int s : starts) {
        const auto t0 = std::chrono::steady_clock::now();
        std::vector<int> indices;
        for (int k = 0; k < window; ++k) {
            indices.push_back(s + k);
        }

        std::vector<int> candidates;
        if (mode == InferMode::Offline) {
            for (int f = std::max(0, s - hood); f < std::min(total, s + window + hood); ++f) {
                if (f < s || f >= s + window) candidates.push_back(f);
            }
        } else {
            for (int f = std::max(0, s - hood); f < s; ++f) {
                candidates.push_back(f);
            }
        }
        if (candidates.empty()) {
            // video start (online) or a video no longer than the window:
            // fall back to the window's own earliest frames
            candidates = indices;
        }
        SplitMix64 rng = SplitMix64::derive(cfg.training.seed, 0x1F00ULL + static_cast<std::uint64_t>(window_index));
        for (int r = 0; r < refs; ++r) {
            indices.push_back(candidates[static_cast<std::size_t>(rng.next_below(candidates.size()))]);
        }

        auto in_frames = gather_frames(frames, indices);
        auto in_masks = gather_frames(masks, indices);
        auto out = generator_forward(in_frames, in_masks, gen);

        for (int k = 0; k < window; ++k) {
            const int fi = s + k;
            if (written[static_cast<std::size_t>(fi)]) continue;
            written[static_cast<std::size_t>(fi)] = true;
            const float* mp = masks.data() + static_cast<std::int64_t>(fi) * mask_elems;
            const float* inp = frames.data() + static_cast<std::int64_t>(fi) * frame_elems;
            const float* pred = out.frames.data() + static_cast<std::int64_t>(k) * frame_elems;
            float* dst = result.data() + static_cast<std::int64_t>(fi) * frame_elems;
            for (int c = 0; c < 3; ++c) {
                for (std::int64_t px = 0; px < mask_elems; ++px) {
                    const std::int64_t idx = c * mask_elems + px;
                    dst[idx] = mp[px] >= 0.5f ? inp[idx] : pred[idx];
                }
            }
        }
        if (stats) {
            stats->window_starts.push_back(s);
            stats->window_millis.push_back(wall_ms(t0));
        }
        ++window_index;
    }
    return result;
}

} // namespace daevi
