#include "surfelslam/loopclosure.h"

#include <algorithm>
#include <cmath>

#include "surfelslam/errors.h"

namespace surfelslam {

namespace {

// One associated pixel pair between the two renderings.
struct Match {
    Eigen::Vector3d pa;  // active point, camera frame
    Eigen::Vector3d vi;  // matched inactive point, camera frame
    int active_id;
    int inactive_id;
};

// The same gates tracking applies, evaluated on a sparse pixel grid sized
// to yield about max_constraints candidates.
std::vector<Match> grid_matches(const PredictedView& active, const PredictedView& inactive,
                                const Pose& T, const Intrinsics& K, const TrackingConfig& tcfg,
                                const LoopParams& prm) {
    std::vector<Match> out;
    if (prm.max_constraints < 1) return out;
    int stride = std::max(1, static_cast<int>(std::floor(
                                 std::sqrt(double(K.width) * K.height / prm.max_constraints))));
    double cos_gate = std::cos(tcfg.angle_gate_deg * M_PI / 180.0);
    for (int y = stride / 2; y < K.height; y += stride) {
        for (int x = stride / 2; x < K.width; x += stride) {
            if (static_cast<int>(out.size()) >= prm.max_constraints) return out;
            float d = active.depth.at(x, y);
            if (d <= 0) continue;
            const Eigen::Vector3f& na = active.normal.at(x, y);
            if (na.squaredNorm() < 0.25f) continue;
            Eigen::Vector3d pc = T * backproject(x, y, d, K);
            if (pc.z() <= 1e-9) continue;
            int px = static_cast<int>(std::lround(K.fx * pc.x() / pc.z() + K.cx));
            int py = static_cast<int>(std::lround(K.fy * pc.y() / pc.z() + K.cy));
            if (!inactive.depth.inside(px, py)) continue;
            float dm = inactive.depth.at(px, py);
            if (dm <= 0) continue;
            const Eigen::Vector3f& nm = inactive.normal.at(px, py);
            if (nm.squaredNorm() < 0.25f) continue;
            Eigen::Vector3d v = backproject(px, py, dm, K);
            if ((v - pc).norm() >= tcfg.dist_gate) continue;
            if (nm.cast<double>().dot(T.R * na.cast<double>()) <= cos_gate) continue;
            out.push_back({backproject(x, y, d, K), v,
                           active.index.at(x, y), inactive.index.at(px, py)});
        }
    }
    return out;
}

} // namespace

TrackingConfig loop_tracking_config() {
    TrackingConfig t;
    t.w_rgb = 0.0; // fused sheet colors disagree, geometry does not
    t.eps = 1e-5;  // loop alignment needs tenth-millimeter precision, not more
    return t;
}

LoopAttempt attempt_loop(const SurfelMap& map, const Pose& pose, const Intrinsics& K,
                         TrackingConfig tcfg, const LoopParams& prm) {
    LoopAttempt att;
    PredictedView inactive = map.predict_view(Subset::Inactive, pose, K);
    int covered = 0, active_valid = 0;
    for (int i = 0; i < K.width * K.height; ++i)
        if (inactive.depth.data()[i] > 0) ++covered;
    att.coverage = double(covered) / (double(K.width) * K.height);
    if (att.coverage < prm.coverage_min) return att;

    PredictedView active = map.predict_view(Subset::Active, pose, K);
    for (int i = 0; i < K.width * K.height; ++i)
        if (active.depth.data()[i] > 0) ++active_valid;
    if (active_valid == 0) return att;

    FrameData frame;
    frame.color = active.color;
    frame.depth = active.depth;
    frame.normal = active.normal;
    frame.mask = MaskImage(K.width, K.height, 0);

    try {
        TrackingResult res = estimate_pose(frame, inactive, Pose(), K, tcfg);
        EnergyTerms terms = icp_energy(frame, inactive, res.pose, K, tcfg);
        att.relative = res.pose;
        att.energy = res.energy;
        att.residual_mean = terms.residual_mean;
        att.inlier_fraction = double(terms.count) / active_valid;
        att.accepted = res.converged && terms.residual_mean < prm.residual_max &&
                       att.inlier_fraction > prm.inlier_min;
    } catch (const Error&) {
        return att; // a failed alignment is a rejected attempt, not a crash
    }

    if (att.accepted) {
        att.constraint_count =
            static_cast<int>(grid_matches(active, inactive, att.relative, K, tcfg, prm).size());
        if (att.constraint_count == 0) att.accepted = false;
    }
    return att;
}

std::vector<Constraint> make_constraints(const SurfelMap& map, const LoopAttempt& attempt,
                                         const PredictedView& active,
                                         const PredictedView& inactive, const Pose& pose,
                                         const Intrinsics& K, const LoopParams& prm) {
    if (!attempt.accepted) throw InvalidInputError("constraints come from accepted attempts only");
    TrackingConfig tcfg;
    std::vector<Match> matches = grid_matches(active, inactive, attempt.relative, K, tcfg, prm);
    if (matches.empty())
        throw InvalidInputError("accepted attempt produced zero inlier pixels");

    auto stamp = [&](int id) {
        return id >= 0 && id < static_cast<int>(map.surfels().size()) ? map.surfels()[id].t0 : -1;
    };
    std::vector<Constraint> out;
    out.reserve(2 * matches.size());
    for (const Match& m : matches) {
        Constraint loop;
        loop.source = pose * m.pa;
        loop.destination = pose * m.vi;
        loop.kind = Constraint::Loop;
        loop.t0 = stamp(m.active_id);
        out.push_back(loop);

        Constraint pin;
        pin.source = pose * m.vi;
        pin.destination = pin.source;
        pin.kind = Constraint::Pin;
        pin.t0 = stamp(m.inactive_id);
        out.push_back(pin);
    }
    return out;
}

std::vector<int> visible_ids(const IndexImage& index) {
    std::vector<int> ids;
    for (int i = 0; i < index.width() * index.height(); ++i)
        if (index.data()[i] >= 0) ids.push_back(index.data()[i]);
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    return ids;
}

CloseResult close_loop(SurfelMap& map, DeformationGraph& graph,
                       const std::vector<Constraint>& constraints,
                       const std::vector<int>& reactivate, int now, const GraphParams& gprm) {
    if (constraints.empty()) throw InvalidInputError("close_loop needs constraints");
    for (int id : reactivate)
        if (id < 0 || id >= static_cast<int>(map.surfels().size()))
            throw InvalidInputError("reactivation id outside the map");
    CloseResult res;
    res.stats = optimize_graph(graph, constraints, gprm);
    // nothing-to-fix closures (constraints already satisfied) still proceed,
    // so reactivation happens; a closure that failed to reduce the
    // constraint energy is discarded wholesale
    bool harmless = res.stats.initial.con <= 1e-18;
    bool improved = res.stats.final.con < res.stats.initial.con &&
                    res.stats.final.total <= res.stats.initial.total;
    if (!harmless && !improved) return res;

    apply_deformation(map, graph);
    for (int id : reactivate) map.surfels()[id].t = now;
    res.applied = true;
    res.reactivated = static_cast<int>(reactivate.size());
    return res;
}

} // namespace surfelslam
