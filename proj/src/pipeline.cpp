#include "surfelslam/pipeline.h"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "surfelslam/defgraph.h"
#include "surfelslam/errors.h"
#include "surfelslam/loopclosure.h"
#include "surfelslam/preprocess.h"
#include "surfelslam/sfs.h"
#include "surfelslam/tracking.h"

namespace fs = std::filesystem;

namespace surfelslam {

namespace {

MapParams map_params(const Config& c) {
    MapParams p;
    p.dt = c.get_int("map.dt");
    p.assoc_depth = c.get_double("map.assoc_depth");
    p.assoc_angle_deg = c.get_double("map.assoc_angle");
    p.w_stable = c.get_double("map.w_stable");
    p.w_max = c.get_double("map.w_max");
    return p;
}

TrackingConfig tracking_config(const Config& c) {
    TrackingConfig t;
    t.w_rgb = c.get_double("track.w_rgb");
    t.levels = c.get_int("track.levels");
    t.iters = c.get_int_list("track.iters");
    t.eps = c.get_double("track.eps");
    t.dist_gate = c.get_double("map.assoc_depth");
    t.angle_gate_deg = c.get_double("map.assoc_angle");
    return t;
}

GraphParams graph_params(const Config& c) {
    GraphParams g;
    g.k = c.get_int("graph.k");
    g.spacing = c.get_int("graph.spacing");
    g.w_rot = c.get_double("graph.w_rot");
    g.w_reg = c.get_double("graph.w_reg");
    g.w_con = c.get_double("graph.w_con");
    return g;
}

LoopParams loop_params(const Config& c) {
    LoopParams l;
    l.coverage_min = c.get_double("loop.coverage_min");
    l.residual_max = c.get_double("loop.residual_max");
    l.inlier_min = c.get_double("loop.inlier_min");
    l.max_constraints = c.get_int("loop.max_constraints");
    l.cooldown = c.get_int("loop.cooldown");
    return l;
}

ReflectParams reflect_params(const Config& c) {
    ReflectParams r;
    r.tile = c.get_int("reflect.tile");
    r.k_sigma = c.get_double("reflect.k_sigma");
    r.ceiling = c.get_double("reflect.ceiling");
    r.dilate = c.get_int("reflect.dilate");
    return r;
}

struct Stopwatch {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double ms() const {
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
            .count();
    }
};

} // namespace

RunResult run_pipeline(const std::string& dataset_root, const Config& cfg,
                       const std::string& out_dir, int log_level) {
    DatasetLayout data = open_dataset(dataset_root);

    std::string depth_source = cfg.get_string("run.depth_source");
    if (depth_source != "files" && depth_source != "sfs")
        throw InvalidInputError("run.depth_source must be 'files' or 'sfs', got '" + depth_source +
                                "'");
    if (depth_source == "files" && !data.has_depth)
        throw LoadError("dataset: run.depth_source = files but '" +
                        frame_path(data.root, "depth", 0) + "' does not exist");

    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (!fs::is_directory(out_dir)) throw IoError("run: cannot create output dir '" + out_dir + "'");

    Trajectory gt;
    if (data.has_groundtruth)
        gt = load_trajectory((fs::path(dataset_root) / "groundtruth.txt").string());
    auto stamp = [&](int i) { return i < static_cast<int>(gt.size()) ? gt[i].timestamp : i / 30.0; };

    MapParams mprm = map_params(cfg);
    TrackingConfig tcfg = tracking_config(cfg);
    GraphParams gprm = graph_params(cfg);
    LoopParams lprm = loop_params(cfg);
    ReflectParams rprm = reflect_params(cfg);
    int sfs_iters = cfg.get_int("sfs.iters");
    double sfs_scale = cfg.get_double("sfs.scale");
    double sfs_offset = cfg.get_double("sfs.offset");
    bool loop_enabled = cfg.get_bool("loop.enabled");
    int max_dropped = cfg.get_int("run.max_dropped");

    SurfelMap map(mprm);
    RunResult res;
    res.frames = data.frames;
    Trajectory estimated;
    Pose pose; // frame 0 anchors the world
    int last_loop = -lprm.cooldown - 1;

    for (int i = 0; i < data.frames; ++i) {
        Stopwatch watch;
        FrameStat stat;
        stat.frame = i;

        ColorImage rgb = load_rgb(data, i);
        ColorImage corrected = correct_vignetting(rgb, data.vignetting);
        MaskImage mask = detect_reflections(corrected, rprm);
        ColorImage clean = inpaint(corrected, mask);

        FrameData frame;
        frame.color = clean;
        frame.mask = mask;
        if (depth_source == "files") {
            frame.depth = load_depth(data, i);
        } else {
            GrayImage gray = to_intensity01(clean);
            GrayImage rel = estimate_relative_depth(gray, data.light, sfs_iters, &mask);
            DepthMap dm = to_metric(rel, sfs_scale, sfs_offset, &mask);
            frame.depth = dm.depth;
            for (int k = 0; k < dm.invalid.width() * dm.invalid.height(); ++k)
                if (dm.invalid.data()[k]) frame.depth.data()[k] = 0.0f;
        }
        frame.normal = compute_normals(frame.depth, data.K);

        if (i > 0) {
            // young maps have nothing stable yet, so predict everything
            double min_weight = i < mprm.t_stable ? 0.0 : -1.0;
            try {
                PredictedView pred = map.predict_view(Subset::Active, pose, data.K, min_weight);
                TrackingResult tr = estimate_pose(frame, pred, pose, data.K, tcfg);
                pose = tr.pose;
                stat.icp_rmse = std::sqrt(tr.energy / std::max(1, tr.icp_inliers));
                if (log_level >= 2)
                    std::fprintf(stderr, "frame %d: energy %.3e inliers %d converged %d\n", i,
                                 tr.energy, tr.icp_inliers, int(tr.converged));
            } catch (const TrackingLostError& e) {
                stat.tracked = false;
                ++res.dropped;
                if (log_level >= 1) std::fprintf(stderr, "frame %d dropped: %s\n", i, e.what());
            }
        }

        if (stat.tracked) {
            map.integrate(frame, pose, data.K, i);
            estimated.push_back(entry_from_pose(stamp(i), pose));

            if (loop_enabled && i - last_loop > lprm.cooldown) {
                LoopAttempt att = attempt_loop(map, pose, data.K, loop_tracking_config(), lprm);
                if (att.accepted) {
                    last_loop = i; // accepted attempts arm the cooldown even if unapplied
                    PredictedView active = map.predict_view(Subset::Active, pose, data.K);
                    PredictedView inactive = map.predict_view(Subset::Inactive, pose, data.K);
                    try {
                        auto cons = make_constraints(map, att, active, inactive, pose, data.K, lprm);
                        DeformationGraph graph = build_graph(map, gprm);
                        CloseResult closed =
                            close_loop(map, graph, cons, visible_ids(inactive.index), i, gprm);
                        if (closed.applied) {
                            ++res.loops_accepted;
                            if (log_level >= 1)
                                std::fprintf(stderr,
                                             "frame %d: loop closed, %d constraints, "
                                             "%d reactivated, energy %.3e -> %.3e\n",
                                             i, att.constraint_count, closed.reactivated,
                                             closed.stats.initial.total, closed.stats.final.total);
                        }
                    } catch (const GraphTooSmallError&) {
                        // map too young to deform; the attempt cost nothing
                    }
                }
            }
        }

        stat.surfels = static_cast<int>(map.surfels().size());
        stat.ms = watch.ms();
        res.metrics.frames.push_back(stat);
        if (log_level >= 1 && (i + 1) % 50 == 0)
            std::fprintf(stderr, "processed %d/%d frames, %zu surfels\n", i + 1, data.frames,
                         map.surfels().size());
    }

    res.within_budget = res.dropped <= max_dropped;

    double ms_sum = 0, ms_max = 0;
    for (const FrameStat& s : res.metrics.frames) {
        ms_sum += s.ms;
        ms_max = std::max(ms_max, s.ms);
    }
    res.metrics.mean_frame_ms = res.metrics.frames.empty() ? 0 : ms_sum / res.metrics.frames.size();
    res.metrics.max_frame_ms = ms_max;
    res.metrics.trajectory_length_m = trajectory_length(estimated);
    if (data.has_groundtruth && estimated.size() >= 2) {
        try {
            res.metrics.ate_rmse_m = ate_rmse(estimated, gt);
        } catch (const DegenerateAssociationError& e) {
            if (log_level >= 1) std::fprintf(stderr, "ATE skipped: %s\n", e.what());
        }
    }

    res.trajectory_path = (fs::path(out_dir) / "trajectory.txt").string();
    res.map_path = (fs::path(out_dir) / "map.ply").string();
    res.metrics_path = (fs::path(out_dir) / "metrics.txt").string();
    res.frames_path = (fs::path(out_dir) / "frames.csv").string();
    save_trajectory(res.trajectory_path, estimated);
    map.export_ply(res.map_path);
    write_metrics(res.metrics_path, res.metrics);
    write_frame_table(res.frames_path, res.metrics.frames);
    return res;
}

} // namespace surfelslam
