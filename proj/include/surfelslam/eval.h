#pragma once

#include <string>
#include <vector>

#include "surfelslam/geometry.h"
#include "surfelslam/surfel_map.h"

namespace surfelslam {

// One line of a trajectory file: timestamp, position, orientation.
// On disk the quaternion is stored x y z w.
struct TrajectoryEntry {
    double timestamp = 0;
    Eigen::Vector3d position = Eigen::Vector3d::Zero();
    Eigen::Quaterniond orientation = Eigen::Quaterniond::Identity();
};

using Trajectory = std::vector<TrajectoryEntry>;

// Plain-text trajectory format, one pose per line:
//   timestamp tx ty tz qx qy qz qw
// '#' starts a comment. Loading enforces strictly increasing timestamps and
// unit quaternions (within 1e-6); violations throw LoadError naming the line.
Trajectory load_trajectory(const std::string& path);
void save_trajectory(const std::string& path, const Trajectory& traj);

TrajectoryEntry entry_from_pose(double timestamp, const Pose& pose);
Pose entry_pose(const TrajectoryEntry& e);

// Sum of distances between consecutive positions.
double trajectory_length(const Trajectory& traj);

// Absolute trajectory error: poses are associated by nearest timestamp
// within max_dt, the estimate is rigidly aligned to the truth by the
// closed-form least-squares fit over matched positions (no scale), and the
// RMSE of the residual distances is returned. Fewer than two matches throw
// DegenerateAssociationError.
double ate_rmse(const Trajectory& estimated, const Trajectory& truth,
                double max_dt = 0.02);

using Cloud = std::vector<Eigen::Vector3d>;

Cloud map_positions(const SurfelMap& map);

struct IcpResult {
    Pose pose;            // maps source points into the target frame
    double rmse = 0;      // over the final association set
    int iterations = 0;
    // set when associations starve or the error rises three iterations in a
    // row; pose then holds the best transform seen
    bool warning = false;
};

// Point-to-point ICP: nearest neighbors within inlier_dist via a voxel
// grid, closed-form rigid update per iteration, stop when the relative
// RMSE change drops below 1e-6. Both clouds need at least 100 points.
IcpResult icp_align(const Cloud& source, const Cloud& target,
                    int max_iters = 50, double inlier_dist = 0.01);

struct SurfaceReport {
    double rmse = 0;     // over reconstructed points matched within inlier_dist
    double coverage = 0; // matched fraction; guards against sparse maps
    bool warning = false;
};

// Aligns reconstructed onto truth with icp_align (skipped below 100 points),
// then measures nearest-neighbor distances from each reconstructed point to
// the truth cloud. Only the reconstructed->truth direction is measured; the
// truth scan is expected to cover more surface than the reconstruction.
SurfaceReport surface_rmse(const Cloud& reconstructed, const Cloud& truth,
                           int max_iters = 50, double inlier_dist = 0.01);

struct FrameStat {
    int frame = 0;
    double ms = 0;        // wall time spent on the frame
    double icp_rmse = 0;  // tracking residual after convergence
    int surfels = 0;      // map size after integration
    bool tracked = true;
};

struct MetricsReport {
    double ate_rmse_m = 0;
    double surface_rmse_m = 0;
    double surface_coverage = 0;
    double trajectory_length_m = 0;
    double mean_frame_ms = 0;
    double max_frame_ms = 0;
    std::vector<FrameStat> frames;
};

// Key-value report, one `key = value` pair per line, readable by humans and
// scripts alike. Frame rows go to a separate CSV.
void write_metrics(const std::string& path, const MetricsReport& report);
void write_frame_table(const std::string& path,
                       const std::vector<FrameStat>& frames);

} // namespace surfelslam
