#pragma once

#include <string>

#include "surfelslam/config.h"
#include "surfelslam/dataset.h"
#include "surfelslam/eval.h"

namespace surfelslam {

struct RunResult {
    MetricsReport metrics;
    int frames = 0;
    int dropped = 0;        // tracking-lost frames, skipped but counted
    int loops_accepted = 0; // closures that passed the gates and were applied
    bool within_budget = true;
    std::string trajectory_path;
    std::string map_path;
    std::string metrics_path;
    std::string frames_path;
};

// Full dense-SLAM run over a dataset. Per frame: vignetting correction,
// reflection masking and inpainting, depth (from files or shading), pose
// estimation against the predicted model view, fusion into the surfel map,
// and a loop-closure attempt once the cooldown allows. Writes
// trajectory.txt, map.ply, metrics.txt, and frames.csv into out_dir.
// log_level: 0 silent, 1 progress and events, 2 per-frame detail.
RunResult run_pipeline(const std::string& dataset_root, const Config& cfg,
                       const std::string& out_dir, int log_level = 1);

} // namespace surfelslam
