#pragma once

#include <vector>

#include "surfelslam/defgraph.h"
#include "surfelslam/surfel_map.h"
#include "surfelslam/tracking.h"

namespace surfelslam {

struct LoopParams {
    double coverage_min = 0.03;   // inactive-pixel share of the view needed to try
    double residual_max = 0.005;  // meters, mean point-to-plane at the aligned pose
    double inlier_min = 0.35;     // associated share of rendered active pixels
    int max_constraints = 128;    // loop constraints (pins add as many again)
    int cooldown = 10;            // frames between accepted closures (pipeline's job)
};

struct LoopAttempt {
    Pose relative;             // maps active-view points onto the inactive rendering
    double energy = 0;         // final alignment energy
    double residual_mean = 0;  // mean point-to-plane distance, meters
    double inlier_fraction = 0;
    double coverage = 0;       // share of pixels the inactive rendering fills
    bool accepted = false;
    int constraint_count = 0;  // loop constraints available, > 0 whenever accepted
};

// Alignment config for model-to-model registration: geometry only, since
// the two sheets' fused colors carry different illumination histories and
// photometric constancy does not hold between them.
TrackingConfig loop_tracking_config();

// Renders the stable active and inactive subsets from the same pose and
// aligns active onto inactive. Rejected attempts (thin coverage, lost
// tracking, weak overlap) come back with accepted=false; the map is never
// touched and nothing is thrown for them.
LoopAttempt attempt_loop(const SurfelMap& map, const Pose& pose, const Intrinsics& K,
                         TrackingConfig tcfg = loop_tracking_config(),
                         const LoopParams& prm = {});

// Grid-samples associated pixel pairs under attempt.relative. Each inlier
// yields a loop constraint (active point -> matched inactive point, both in
// the global frame) plus a pin holding the inactive point in place, every
// constraint stamped with its source surfel's timestamp.
std::vector<Constraint> make_constraints(const SurfelMap& map, const LoopAttempt& attempt,
                                         const PredictedView& active,
                                         const PredictedView& inactive, const Pose& pose,
                                         const Intrinsics& K, const LoopParams& prm = {});

// Sorted unique surfel ids present in a rendering.
std::vector<int> visible_ids(const IndexImage& index);

struct CloseResult {
    bool applied = false;   // deformation written into the map
    OptimizeStats stats;
    int reactivated = 0;
};

// Optimizes the graph against the constraints and, when the constraint
// energy actually dropped (or was already zero), deforms the whole map and
// stamps the matched inactive surfels with `now` so they rejoin tracking.
// A failed optimization leaves the map untouched.
CloseResult close_loop(SurfelMap& map, DeformationGraph& graph,
                       const std::vector<Constraint>& constraints,
                       const std::vector<int>& reactivate, int now,
                       const GraphParams& gprm = {});

} // namespace surfelslam
