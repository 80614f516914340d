#pragma once

#include <vector>

#include "surfelslam/geometry.h"
#include "surfelslam/surfel_map.h"

namespace surfelslam {

using Matrix6d = Eigen::Matrix<double, 6, 6>;

struct TrackingConfig {
    double w_rgb = 0.1;
    int levels = 3;
    std::vector<int> iters = {10, 5, 4};   // coarsest level first
    double eps = 1e-6;                     // twist-norm convergence threshold
    double dist_gate = 0.01;               // shared with fusion association
    double angle_gate_deg = 20.0;
    int min_assoc = 100;
    int max_halvings = 5;
};

struct TrackingResult {
    Pose pose;                             // global camera pose
    double energy = 0.0;
    int icp_inliers = 0;
    double rgb_residual_mean = 0.0;
    bool converged = false;
    std::vector<int> iters_per_level;      // coarsest level first
};

// Energy, exact gradient, and Gauss-Newton hessian of one term, linearized
// at zero twist around T.  grad is d(energy)/d(xi), so it carries the factor
// of two from the squared residuals; the Gauss-Newton step is unaffected.
struct EnergyTerms {
    double energy = 0.0;
    Twist grad = Twist::Zero();
    Matrix6d hess = Matrix6d::Zero();
    int count = 0;
    double residual_mean = 0.0;
};

// Point-to-plane energy between the frame's back-projected vertices moved by
// T and the predicted model vertices, associated projectively.  Throws
// DegenerateAssociationError when fewer than cfg.min_assoc pixels associate.
EnergyTerms icp_energy(const FrameData& frame, const PredictedView& pred, const Pose& T,
                       const Intrinsics& K, const TrackingConfig& cfg = {});

// Photometric energy between frame intensities and the predicted intensities
// sampled at the warp of each back-projected frame pixel.  Intensities are
// on a [0,1] scale; reflection-masked pixels are skipped.  Throws
// DegenerateAssociationError when fewer than cfg.min_assoc pixels warp to
// valid predicted samples.
EnergyTerms rgb_energy(const FrameData& frame, const PredictedView& pred, const Pose& T,
                       const Intrinsics& K, const TrackingConfig& cfg = {});

// Coarse-to-fine Gauss-Newton minimization of E_icp + w_rgb * E_rgb over the
// relative pose T (current camera to prediction camera), with step halving
// when a step would increase the energy.  `init` is the global pose the
// prediction was rendered from; the returned global pose is init * T.
// converged is true when the finest level stopped on the twist threshold and
// the system was well conditioned (no unobservable directions).  Degenerate
// association at the finest level throws TrackingLostError.
TrackingResult estimate_pose(const FrameData& frame, const PredictedView& pred,
                             const Pose& init, const Intrinsics& K,
                             const TrackingConfig& cfg = {});

} // namespace surfelslam
