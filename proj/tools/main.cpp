#include <CLI11.hpp>

#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include "surfelslam/dataset.h"
#include "surfelslam/errors.h"
#include "surfelslam/eval.h"
#include "surfelslam/pipeline.h"
#include "surfelslam/surfel_map.h"
#include "surfelslam/synth.h"

using namespace surfelslam;

namespace {

std::string env_name(const std::string& key) {
    std::string out = "SURFELSLAM_";
    for (char c : key) out += c == '.' ? '_' : char(std::toupper(static_cast<unsigned char>(c)));
    return out;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"surfelslam: dense surfel SLAM for endoscopy-like monocular streams"};
    app.require_subcommand(1);
    app.fallthrough(); // lets --log-level appear after the subcommand name
    app.footer("config precedence: defaults < --config file < environment < flags\n"
               "environment override names: SURFELSLAM_ + key upper-cased, '.' -> '_'\n"
               "(for example track.w_rgb -> SURFELSLAM_TRACK_W_RGB)");
    int log_level = 1;
    app.add_option("--log-level", log_level, "0 silent, 1 progress and events, 2 per-frame")
        ->capture_default_str();

    CLI::App* run = app.add_subcommand("run", "process a dataset end to end");
    std::string dataset, out_dir = "out", cfg_path;
    run->add_option("dataset", dataset, "dataset directory")->required();
    run->add_option("--out", out_dir, "output directory")->capture_default_str();
    run->add_option("--config", cfg_path, "key = value config file");
    std::vector<std::pair<std::string, std::string>> flag_overrides;
    for (const auto& [key, spec] : Config::registry()) {
        std::string help = spec.help + " [default " + spec.def + "]";
        run->add_option_function<std::string>(
            "--" + key,
            [key, &flag_overrides](const std::string& v) { flag_overrides.emplace_back(key, v); },
            help);
    }

    CLI::App* synth_cmd = app.add_subcommand("synth", "render a synthetic dataset to disk");
    std::string preset_name, synth_out;
    int synth_frames = 0;
    uint64_t seed = 1;
    synth_cmd->add_option("preset", preset_name, "preset name (see 'synth list')")->required();
    synth_cmd->add_option("frames", synth_frames, "frame count, 0 = preset default")
        ->capture_default_str();
    synth_cmd->add_option("--out", synth_out, "output directory [default: the preset name]");
    synth_cmd->add_option("--seed", seed, "noise seed")->capture_default_str();

    CLI::App* eval_cmd = app.add_subcommand("eval", "score a trajectory and reconstruction");
    std::string est_path, gt_path, ply_path, truth_ply_path, metrics_out;
    double max_dt = 0.02, inlier = 0.01;
    eval_cmd->add_option("--est", est_path, "estimated trajectory file")->required();
    eval_cmd->add_option("--gt", gt_path, "ground-truth trajectory file")->required();
    eval_cmd->add_option("--ply", ply_path, "reconstructed point cloud (optional)");
    eval_cmd->add_option("--truth-ply", truth_ply_path, "ground-truth point cloud (optional)");
    eval_cmd->add_option("--out", metrics_out, "also write a metrics report here");
    eval_cmd->add_option("--max-dt", max_dt, "timestamp association window (s)")
        ->capture_default_str();
    eval_cmd->add_option("--inlier", inlier, "surface correspondence cap (m)")
        ->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            Config cfg;
            if (!cfg_path.empty()) cfg.load_file(cfg_path);
            for (const auto& [key, spec] : Config::registry()) {
                (void)spec;
                if (const char* v = std::getenv(env_name(key).c_str())) cfg.set(key, v);
            }
            for (const auto& [key, value] : flag_overrides) cfg.set(key, value);

            RunResult r = run_pipeline(dataset, cfg, out_dir, log_level);
            std::printf("frames = %d\ndropped = %d\nloops_closed = %d\n", r.frames, r.dropped,
                        r.loops_accepted);
            std::printf("trajectory_length_m = %.9f\n", r.metrics.trajectory_length_m);
            if (r.metrics.ate_rmse_m > 0 || !r.metrics.frames.empty())
                std::printf("ate_rmse_m = %.9f\n", r.metrics.ate_rmse_m);
            std::printf("mean_frame_ms = %.3f\n", r.metrics.mean_frame_ms);
            std::printf("wrote %s, %s, %s, %s\n", r.trajectory_path.c_str(), r.map_path.c_str(),
                        r.metrics_path.c_str(), r.frames_path.c_str());
            if (!r.within_budget) {
                std::fprintf(stderr, "tracking lost on %d frames, over the budget of %d\n",
                             r.dropped, cfg.get_int("run.max_dropped"));
                return 2;
            }
            return 0;
        }

        if (synth_cmd->parsed()) {
            if (preset_name == "list") {
                for (const auto& p : synth::presets())
                    std::printf("%-12s %4d frames\n", p.name.c_str(), p.default_frames);
                return 0;
            }
            if (synth_out.empty()) synth_out = preset_name;
            int n = write_synth_dataset(synth_out, preset_name, synth_frames, seed);
            std::printf("wrote %d frames to %s\n", n, synth_out.c_str());
            return 0;
        }

        if (eval_cmd->parsed()) {
            Trajectory est = load_trajectory(est_path);
            Trajectory gt = load_trajectory(gt_path);
            MetricsReport rep;
            rep.ate_rmse_m = ate_rmse(est, gt, max_dt);
            rep.trajectory_length_m = trajectory_length(est);
            std::printf("ate_rmse_m = %.9f\n", rep.ate_rmse_m);
            std::printf("trajectory_length_m = %.9f\n", rep.trajectory_length_m);
            if (!ply_path.empty() && !truth_ply_path.empty()) {
                Cloud recon = map_positions(import_ply(ply_path));
                Cloud truth = map_positions(import_ply(truth_ply_path));
                SurfaceReport s = surface_rmse(recon, truth, 50, inlier);
                rep.surface_rmse_m = s.rmse;
                rep.surface_coverage = s.coverage;
                std::printf("surface_rmse_m = %.9f\n", s.rmse);
                std::printf("surface_coverage = %.6f\n", s.coverage);
                if (s.warning) std::fprintf(stderr, "warning: cloud alignment did not settle\n");
            } else {
                std::printf("surface metrics omitted (pass --ply and --truth-ply)\n");
            }
            if (!metrics_out.empty()) write_metrics(metrics_out, rep);
            return 0;
        }
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
