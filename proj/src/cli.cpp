#include "daevi/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>

#include <CLI11.hpp>
#include <json.hpp>

#include "daevi/clip_io.hpp"
#include "daevi/config.hpp"
#include "daevi/gradsuite.hpp"
#include "daevi/metrics.hpp"
#include "daevi/training.hpp"

namespace daevi {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct CommonOpts {
    std::string config_path;
    std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("-c,--config", opts.config_path, "JSON config file (defaults apply when omitted)");
    cmd->add_option("-o,--override", opts.overrides,
                    "dotted key=value override, e.g. -o training.iterations=100");
}

// Resolves and echoes the config; the first stdout line is the exact JSON
// that reproduces this run.
RunConfig resolve_config(const CommonOpts& opts) {
    RunConfig cfg = load_config(opts.config_path, opts.overrides);
    std::cout << cfg.to_json().dump() << "\n";
    return cfg;
}

std::string clip_name(const char* stem, int index) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s_%03d.dvt", stem, index);
    return buf;
}

int cmd_synth(const CommonOpts& opts, const std::string& out_dir, bool export_ppm) {
    RunConfig cfg = resolve_config(opts);
    fs::create_directories(out_dir);
    Dataset data = synthesize_dataset(cfg);
    for (int i = 0; i < static_cast<int>(data.clips.size()); ++i) {
        const fs::path base(out_dir);
        write_clip((base / clip_name("clip", i)).string(), data.clips[static_cast<std::size_t>(i)]);
        write_clip((base / clip_name("mask", i)).string(), data.masks[static_cast<std::size_t>(i)]);
        write_clip((base / clip_name("depth", i)).string(), data.depths[static_cast<std::size_t>(i)]);
        if (export_ppm) {
            char dir[64];
            std::snprintf(dir, sizeof(dir), "clip_%03d_ppm", i);
            write_ppm_frames((base / dir).string(), data.clips[static_cast<std::size_t>(i)]);
            std::snprintf(dir, sizeof(dir), "mask_%03d_pgm", i);
            write_pgm_frames((base / dir).string(), data.masks[static_cast<std::size_t>(i)]);
        }
    }
    std::cout << "wrote " << data.clips.size() << " clip/mask/depth triples to " << out_dir << "\n";
    return 0;
}

int cmd_train(const CommonOpts& opts, const std::string& out_dir, const std::string& resume) {
    RunConfig cfg = resolve_config(opts);
    fs::create_directories(out_dir);
    Trainer trainer(cfg);
    if (!resume.empty()) {
        trainer.load_checkpoint(resume);
        std::cout << "resumed from " << resume << " at iteration " << trainer.iteration() << "\n";
    }
    const fs::path log_path = fs::path(out_dir) / "train_log.jsonl";
    std::ofstream log(log_path, resume.empty() ? std::ios::trunc : std::ios::app);
    if (!log) {
        throw DataError("cannot open loss log " + log_path.string());
    }

    while (trainer.iteration() < static_cast<std::uint64_t>(cfg.training.iterations)) {
        const std::uint64_t it = trainer.iteration();
        const StepReport r = trainer.step();
        json rec;
        rec["iteration"] = it;
        rec["l_d"] = r.l_d;
        rec["l_i"] = r.l_i;
        rec["l_gen"] = r.l_gen;
        rec["l_p"] = r.l_p;
        rec["l_s"] = r.l_s;
        rec["l_ded"] = r.l_ded;
        rec["total"] = r.total;
        rec["ms"] = r.millis;
        log << rec.dump() << "\n";
        if (it % 50 == 0 || trainer.iteration() == static_cast<std::uint64_t>(cfg.training.iterations)) {
            std::cout << "iter " << it << " total " << r.total << " l_i " << r.l_i
                      << " l_ded " << r.l_ded << " (" << r.millis << " ms)\n";
        }
        if (cfg.training.checkpoint_interval > 0 &&
            trainer.iteration() % static_cast<std::uint64_t>(cfg.training.checkpoint_interval) == 0 &&
            trainer.iteration() < static_cast<std::uint64_t>(cfg.training.iterations)) {
            char name[64];
            std::snprintf(name, sizeof(name), "checkpoint_%08llu.dvck",
                          static_cast<unsigned long long>(trainer.iteration()));
            trainer.save_checkpoint((fs::path(out_dir) / name).string());
        }
    }
    trainer.save_checkpoint((fs::path(out_dir) / "checkpoint_final.dvck").string());
    std::cout << "training complete; loss log at " << log_path.string() << "\n";
    return 0;
}

int cmd_infer(const CommonOpts& opts, const std::string& checkpoint, const std::string& input,
              const std::string& masks_path, const std::string& output, const std::string& mode_flag,
              const std::string& timings_path) {
    CommonOpts effective = opts;
    if (!mode_flag.empty()) {
        effective.overrides.push_back("inference.mode=" + mode_flag);
    }
    RunConfig cfg = resolve_config(effective);

    const Snapshot snap = load_snapshot(checkpoint);
    GeneratorParams<float> gen = generator_from_snapshot(cfg, snap);

    Tensor<float> frames = read_clip_any(input);
    Tensor<float> masks = read_clip_any(masks_path);
    const InferMode mode = cfg.inference.mode == "online" ? InferMode::Online : InferMode::Offline;
    InferStats stats;
    Tensor<float> out = infer_video(gen, frames, masks, mode, cfg, &stats);
    write_clip(output, out);

    std::ofstream timings;
    if (!timings_path.empty()) {
        timings.open(timings_path, std::ios::trunc);
    }
    double total_ms = 0.0;
    for (std::size_t i = 0; i < stats.window_millis.size(); ++i) {
        total_ms += stats.window_millis[i];
        std::cout << "window start " << stats.window_starts[i] << ": "
                  << stats.window_millis[i] << " ms\n";
        if (timings.is_open()) {
            json rec;
            rec["window_start"] = stats.window_starts[i];
            rec["ms"] = stats.window_millis[i];
            timings << rec.dump() << "\n";
        }
    }
    std::cout << "inpainted " << frames.dim(0) << " frames in " << total_ms << " ms ("
              << total_ms / frames.dim(0) << " ms/frame) -> " << output << "\n";
    return 0;
}

int cmd_eval(const CommonOpts& opts, const std::string& pred_path, const std::string& truth_path,
             const std::string& masks_path, const std::string& records_path) {
    resolve_config(opts);
    Tensor<float> pred = read_clip_any(pred_path);
    Tensor<float> truth = read_clip_any(truth_path);
    Tensor<float> masks = read_clip_any(masks_path);

    std::ofstream records;
    if (!records_path.empty()) {
        records.open(records_path, std::ios::trunc);
    }
    auto emit = [&](const json& rec) {
        if (records.is_open()) {
            records << rec.dump() << "\n";
        }
    };

    std::printf("%-8s %10s %10s %12s\n", "frame", "psnr", "ssim", "mse");
    const int t = pred.dim(0);
    const std::int64_t frame_elems = pred.size() / t;
    const std::int64_t mask_elems = masks.size() / t;
    for (int ti = 0; ti < t; ++ti) {
        Tensor<float> pf(Shape{1, 3, pred.dim(2), pred.dim(3)});
        Tensor<float> tf(Shape{1, 3, pred.dim(2), pred.dim(3)});
        Tensor<float> mf(Shape{1, 1, pred.dim(2), pred.dim(3)});
        std::copy_n(pred.data() + ti * frame_elems, frame_elems, pf.data());
        std::copy_n(truth.data() + ti * frame_elems, frame_elems, tf.data());
        std::copy_n(masks.data() + ti * mask_elems, mask_elems, mf.data());
        bool any_corrupted = false;
        for (std::int64_t i = 0; i < mf.size(); ++i) {
            if (mf.at(i) < 0.5f) {
                any_corrupted = true;
                break;
            }
        }
        if (!any_corrupted) {
            std::printf("%-8d %10s %10s %12s\n", ti, "-", "-", "-");
            emit({{"frame", ti}, {"skipped", "no corrupted pixels"}});
            continue;
        }
        const double mse = mse_crop(pf, tf, mf);
        const double psnr = psnr_crop(pf, tf, mf);
        const double ssim = ssim_crop(pf, tf, mf);
        std::printf("%-8d %10.4f %10.5f %12.5f\n", ti, psnr, ssim, mse);
        emit({{"frame", ti}, {"psnr", psnr}, {"ssim", ssim}, {"mse", mse}});
    }
    const double mse = mse_crop(pred, truth, masks);
    const double psnr = psnr_crop(pred, truth, masks);
    const double ssim = ssim_crop(pred, truth, masks);
    std::printf("%-8s %10.4f %10.5f %12.5f\n", "overall", psnr, ssim, mse);
    emit({{"overall", true}, {"psnr", psnr}, {"ssim", ssim}, {"mse", mse}});
    return 0;
}

int cmd_gradcheck(const CommonOpts& opts, int seeds, double tol) {
    resolve_config(opts);
    const GradSuiteReport report = run_gradient_suite(seeds, tol);
    for (const auto& row : report.rows) {
        std::printf("%-24s max_rel_err %.3e  %s\n", row.name.c_str(), row.max_rel_err,
                    row.pass(report.tol) ? "PASS" : "FAIL");
    }
    std::printf("%zu checks, %d seeds, tol %.1e, %.1f s\n", report.rows.size(), seeds, tol,
                report.elapsed_seconds);
    if (!report.all_pass()) {
        throw NumericError("gradient check failed");
    }
    return 0;
}

} // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"depth-aware video inpainting workbench"};
    app.require_subcommand(1);

    CommonOpts synth_opts, train_opts, infer_opts, eval_opts, grad_opts;

    auto* synth = app.add_subcommand("synth", "generate synthetic clips, masks, and depth");
    std::string synth_out = "data";
    bool synth_ppm = false;
    add_common(synth, synth_opts);
    synth->add_option("--out-dir", synth_out, "output directory")->required();
    synth->add_flag("--ppm", synth_ppm, "also export 8-bit PPM/PGM frame directories");

    auto* train = app.add_subcommand("train", "run the optimization loop");
    std::string train_out = "runs";
    std::string train_resume;
    add_common(train, train_opts);
    train->add_option("--out-dir", train_out, "directory for checkpoints and the loss log")->required();
    train->add_option("--resume", train_resume, "checkpoint to resume from");

    auto* infer = app.add_subcommand("infer", "inpaint a corrupted clip with a trained model");
    std::string infer_ck, infer_in, infer_masks, infer_out, infer_mode, infer_timings;
    add_common(infer, infer_opts);
    infer->add_option("--checkpoint", infer_ck, "trained checkpoint")->required();
    infer->add_option("--input", infer_in, "corrupted clip (.dvt or PPM dir)")->required();
    infer->add_option("--masks", infer_masks, "corruption masks (.dvt or PGM dir)")->required();
    infer->add_option("--output", infer_out, "output clip path")->required();
    infer->add_option("--mode", infer_mode, "offline|online (overrides config)")
        ->check(CLI::IsMember({"offline", "online", ""}));
    infer->add_option("--timings", infer_timings, "write per-window timings (JSONL)");

    auto* eval = app.add_subcommand("eval", "masked-region PSNR/SSIM/MSE between clips");
    std::string eval_pred, eval_truth, eval_masks, eval_records;
    add_common(eval, eval_opts);
    eval->add_option("--pred", eval_pred, "prediction clip")->required();
    eval->add_option("--truth", eval_truth, "ground-truth clip")->required();
    eval->add_option("--masks", eval_masks, "corruption masks")->required();
    eval->add_option("--records", eval_records, "write per-frame records (JSONL)");

    auto* grad = app.add_subcommand("gradcheck", "backward vs finite-difference verification");
    int grad_seeds = 20;
    double grad_tol = 1e-5;
    add_common(grad, grad_opts);
    grad->add_option("--seeds", grad_seeds, "randomized instances per check");
    grad->add_option("--tol", grad_tol, "relative error tolerance");

    try {
        app.parse(argc, argv);
        if (synth->parsed()) return cmd_synth(synth_opts, synth_out, synth_ppm);
        if (train->parsed()) return cmd_train(train_opts, train_out, train_resume);
        if (infer->parsed()) {
            return cmd_infer(infer_opts, infer_ck, infer_in, infer_masks, infer_out, infer_mode,
                             infer_timings);
        }
        if (eval->parsed()) return cmd_eval(eval_opts, eval_pred, eval_truth, eval_masks, eval_records);
        if (grad->parsed()) return cmd_gradcheck(grad_opts, grad_seeds, grad_tol);
        return 1;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const NumericError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

} // namespace daevi
