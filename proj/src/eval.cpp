#include "surfelslam/eval.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_map>

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include "surfelslam/errors.h"

namespace surfelslam {

namespace {

[[noreturn]] void parse_fail(const std::string& path, int line, const std::string& what) {
    throw LoadError(path + ":" + std::to_string(line) + ": " + what);
}

void check_sorted(const Trajectory& t, const char* who) {
    for (size_t i = 1; i < t.size(); ++i)
        if (!(t[i].timestamp > t[i - 1].timestamp))
            throw InvalidInputError(std::string(who) + ": timestamps must be strictly increasing");
}

} // namespace

Trajectory load_trajectory(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("load_trajectory: cannot open '" + path + "'");
    Trajectory out;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        std::istringstream ss(line);
        TrajectoryEntry e;
        double qx, qy, qz, qw;
        if (!(ss >> e.timestamp)) continue; // blank or comment-only line
        if (!(ss >> e.position.x() >> e.position.y() >> e.position.z() >> qx >> qy >> qz >> qw))
            parse_fail(path, lineno, "expected 'timestamp tx ty tz qx qy qz qw'");
        std::string extra;
        if (ss >> extra) parse_fail(path, lineno, "trailing token '" + extra + "'");
        double norm = std::sqrt(qx * qx + qy * qy + qz * qz + qw * qw);
        if (std::abs(norm - 1.0) > 1e-6)
            parse_fail(path, lineno, "quaternion norm " + std::to_string(norm) + " is not 1");
        if (!out.empty() && !(e.timestamp > out.back().timestamp))
            parse_fail(path, lineno, "timestamp does not increase");
        e.orientation = Eigen::Quaterniond(qw, qx, qy, qz);
        out.push_back(e);
    }
    return out;
}

void save_trajectory(const std::string& path, const Trajectory& traj) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw IoError("save_trajectory: cannot open '" + path + "' for writing");
    std::fputs("# timestamp tx ty tz qx qy qz qw\n", f);
    for (const TrajectoryEntry& e : traj) {
        const Eigen::Quaterniond& q = e.orientation;
        std::fprintf(f, "%.6f %.9f %.9f %.9f %.9f %.9f %.9f %.9f\n", e.timestamp,
                     e.position.x(), e.position.y(), e.position.z(), q.x(), q.y(), q.z(), q.w());
    }
    if (std::fclose(f) != 0) throw IoError("save_trajectory: write failed for '" + path + "'");
}

TrajectoryEntry entry_from_pose(double timestamp, const Pose& pose) {
    TrajectoryEntry e;
    e.timestamp = timestamp;
    e.position = pose.t;
    e.orientation = Eigen::Quaterniond(pose.R).normalized();
    return e;
}

Pose entry_pose(const TrajectoryEntry& e) {
    Pose p;
    p.R = e.orientation.normalized().toRotationMatrix();
    p.t = e.position;
    return p;
}

double trajectory_length(const Trajectory& traj) {
    double len = 0;
    for (size_t i = 1; i < traj.size(); ++i)
        len += (traj[i].position - traj[i - 1].position).norm();
    return len;
}

double ate_rmse(const Trajectory& estimated, const Trajectory& truth, double max_dt) {
    if (max_dt < 0) throw InvalidInputError("ate_rmse: max_dt must be non-negative");
    check_sorted(estimated, "ate_rmse");
    check_sorted(truth, "ate_rmse");

    std::vector<Eigen::Vector3d> ep, gp;
    for (const TrajectoryEntry& e : estimated) {
        auto it = std::lower_bound(truth.begin(), truth.end(), e.timestamp,
                                   [](const TrajectoryEntry& g, double t) { return g.timestamp < t; });
        const TrajectoryEntry* best = nullptr;
        if (it != truth.end()) best = &*it;
        if (it != truth.begin()) {
            const TrajectoryEntry& prev = *std::prev(it);
            if (!best || std::abs(prev.timestamp - e.timestamp) <= std::abs(best->timestamp - e.timestamp))
                best = &prev;
        }
        if (best && std::abs(best->timestamp - e.timestamp) <= max_dt) {
            ep.push_back(e.position);
            gp.push_back(best->position);
        }
    }
    if (ep.size() < 2)
        throw DegenerateAssociationError("ate_rmse: fewer than 2 pose pairs matched within max_dt");

    Eigen::Matrix3Xd src(3, ep.size()), dst(3, ep.size());
    for (size_t i = 0; i < ep.size(); ++i) {
        src.col(i) = ep[i];
        dst.col(i) = gp[i];
    }
    // closed-form least-squares rigid fit, deliberately without scale
    Eigen::Matrix4d T = Eigen::umeyama(src, dst, false);
    Eigen::Matrix3d R = T.topLeftCorner<3, 3>();
    Eigen::Vector3d t = T.topRightCorner<3, 1>();
    double se = 0;
    for (size_t i = 0; i < ep.size(); ++i) se += (R * ep[i] + t - gp[i]).squaredNorm();
    return std::sqrt(se / ep.size());
}

Cloud map_positions(const SurfelMap& map) {
    Cloud out;
    out.reserve(map.surfels().size());
    for (const Surfel& s : map.surfels()) out.push_back(s.position);
    return out;
}

namespace {

// Voxel grid over a cloud; exact nearest neighbor within one cell radius,
// which covers every match when cell size equals the inlier distance.
class CellGrid {
public:
    CellGrid(const Cloud& points, double cell) : points_(points), cell_(cell) {
        for (size_t i = 0; i < points.size(); ++i)
            cells_[key(points[i])].push_back(static_cast<int>(i));
    }

    // index of the nearest point within radius cell_, or -1
    int nearest(const Eigen::Vector3d& p, double* dist = nullptr) const {
        int best = -1;
        double best2 = cell_ * cell_;
        Eigen::Array3i c = coords(p);
        for (int dz = -1; dz <= 1; ++dz)
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    auto it = cells_.find(pack(c.x() + dx, c.y() + dy, c.z() + dz));
                    if (it == cells_.end()) continue;
                    for (int i : it->second) {
                        double d2 = (points_[i] - p).squaredNorm();
                        if (d2 < best2 || (d2 == best2 && best >= 0 && i < best)) {
                            best2 = d2;
                            best = i;
                        }
                    }
                }
        if (dist) *dist = best >= 0 ? std::sqrt(best2) : std::numeric_limits<double>::infinity();
        return best;
    }

private:
    Eigen::Array3i coords(const Eigen::Vector3d& p) const {
        return {static_cast<int>(std::floor(p.x() / cell_)),
                static_cast<int>(std::floor(p.y() / cell_)),
                static_cast<int>(std::floor(p.z() / cell_))};
    }
    static int64_t pack(int x, int y, int z) {
        constexpr int64_t mask = (int64_t(1) << 21) - 1;
        return ((int64_t(x) & mask) << 42) | ((int64_t(y) & mask) << 21) | (int64_t(z) & mask);
    }
    int64_t key(const Eigen::Vector3d& p) const {
        Eigen::Array3i c = coords(p);
        return pack(c.x(), c.y(), c.z());
    }

    const Cloud& points_;
    double cell_;
    std::unordered_map<int64_t, std::vector<int>> cells_;
};

Pose kabsch(const std::vector<Eigen::Vector3d>& src, const std::vector<Eigen::Vector3d>& dst) {
    Eigen::Vector3d cs = Eigen::Vector3d::Zero(), cd = Eigen::Vector3d::Zero();
    for (size_t i = 0; i < src.size(); ++i) {
        cs += src[i];
        cd += dst[i];
    }
    cs /= double(src.size());
    cd /= double(src.size());
    Eigen::Matrix3d H = Eigen::Matrix3d::Zero();
    for (size_t i = 0; i < src.size(); ++i) H += (src[i] - cs) * (dst[i] - cd).transpose();
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(H, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Matrix3d VUt = svd.matrixV() * svd.matrixU().transpose();
    Eigen::Vector3d d{1, 1, VUt.determinant() > 0 ? 1.0 : -1.0};
    Pose p;
    p.R = svd.matrixV() * d.asDiagonal() * svd.matrixU().transpose();
    p.t = cd - p.R * cs;
    return p;
}

} // namespace

IcpResult icp_align(const Cloud& source, const Cloud& target, int max_iters, double inlier_dist) {
    if (source.size() < 100 || target.size() < 100)
        throw InvalidInputError("icp_align: both clouds need at least 100 points");
    if (!(inlier_dist > 0)) throw InvalidInputError("icp_align: inlier_dist must be positive");

    CellGrid grid(target, inlier_dist);
    IcpResult res;
    Pose best_pose;
    double best_rmse = std::numeric_limits<double>::infinity();
    double prev = std::numeric_limits<double>::infinity();
    int rises = 0;
    Pose cur;
    std::vector<Eigen::Vector3d> ps, qs;

    for (int it = 0; it < max_iters; ++it) {
        ps.clear();
        qs.clear();
        double se = 0;
        for (const Eigen::Vector3d& p : source) {
            int j = grid.nearest(cur * p);
            if (j < 0) continue;
            ps.push_back(p);
            qs.push_back(target[j]);
        }
        if (ps.size() < 3) {
            res.warning = true;
            break;
        }
        cur = kabsch(ps, qs);
        for (size_t i = 0; i < ps.size(); ++i) se += (cur * ps[i] - qs[i]).squaredNorm();
        double rmse = std::sqrt(se / ps.size());
        res.iterations = it + 1;
        if (rmse < best_rmse) {
            best_rmse = rmse;
            best_pose = cur;
        }
        if (rmse > prev) {
            if (++rises >= 3) {
                res.warning = true;
                break;
            }
        } else {
            rises = 0;
        }
        if (std::isfinite(prev) && std::abs(prev - rmse) < 1e-6 * std::max(prev, 1e-12)) break;
        prev = rmse;
    }
    res.pose = best_pose;
    res.rmse = best_rmse;
    if (!std::isfinite(best_rmse)) res.warning = true;
    return res;
}

SurfaceReport surface_rmse(const Cloud& reconstructed, const Cloud& truth, int max_iters,
                           double inlier_dist) {
    if (reconstructed.empty() || truth.empty())
        throw InvalidInputError("surface_rmse: clouds must be non-empty");
    SurfaceReport rep;
    Pose align;
    if (reconstructed.size() >= 100 && truth.size() >= 100) {
        IcpResult icp = icp_align(reconstructed, truth, max_iters, inlier_dist);
        rep.warning = icp.warning;
        if (std::isfinite(icp.rmse)) align = icp.pose;
    }
    CellGrid grid(truth, inlier_dist);
    double se = 0;
    size_t matched = 0;
    for (const Eigen::Vector3d& p : reconstructed) {
        double d;
        if (grid.nearest(align * p, &d) >= 0) {
            se += d * d;
            ++matched;
        }
    }
    rep.rmse = matched ? std::sqrt(se / double(matched)) : 0.0;
    rep.coverage = double(matched) / double(reconstructed.size());
    return rep;
}

void write_metrics(const std::string& path, const MetricsReport& report) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw IoError("write_metrics: cannot open '" + path + "' for writing");
    std::fputs("# timings are single-threaded CPU milliseconds; not comparable to GPU figures\n", f);
    std::fprintf(f, "ate_rmse_m = %.9f\n", report.ate_rmse_m);
    std::fprintf(f, "surface_rmse_m = %.9f\n", report.surface_rmse_m);
    std::fprintf(f, "surface_coverage = %.6f\n", report.surface_coverage);
    std::fprintf(f, "trajectory_length_m = %.9f\n", report.trajectory_length_m);
    std::fprintf(f, "mean_frame_ms = %.3f\n", report.mean_frame_ms);
    std::fprintf(f, "max_frame_ms = %.3f\n", report.max_frame_ms);
    std::fprintf(f, "frames = %zu\n", report.frames.size());
    if (std::fclose(f) != 0) throw IoError("write_metrics: write failed for '" + path + "'");
}

void write_frame_table(const std::string& path, const std::vector<FrameStat>& frames) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw IoError("write_frame_table: cannot open '" + path + "' for writing");
    std::fputs("frame,ms,icp_rmse,surfels,tracked\n", f);
    for (const FrameStat& s : frames)
        std::fprintf(f, "%d,%.3f,%.9f,%d,%d\n", s.frame, s.ms, s.icp_rmse, s.surfels,
                     s.tracked ? 1 : 0);
    if (std::fclose(f) != 0) throw IoError("write_frame_table: write failed for '" + path + "'");
}

} // namespace surfelslam
