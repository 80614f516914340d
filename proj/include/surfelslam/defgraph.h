#pragma once

#include <utility>
#include <vector>

#include "surfelslam/surfel_map.h"

namespace surfelslam {

// Sparse control structure for non-rigid map warps. Nodes carry a free
// affine transform each; surfels blend the transforms of a few nearby
// nodes, so optimizing the nodes against surface constraints bends the
// whole map smoothly.
struct DeformationNode {
    Eigen::Vector3d g;             // rest position, meters
    int t0 = 0;                    // timestamp of the source surfel
    Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
    Eigen::Vector3d t = Eigen::Vector3d::Zero();
    std::vector<int> neighbors;    // exactly k node ids
};

struct DeformationGraph {
    std::vector<DeformationNode> nodes;
    int k = 4;       // graph connectivity
    int k_inf = 4;   // nodes blended per surfel
};

struct Constraint {
    Eigen::Vector3d source;        // map point before deformation
    Eigen::Vector3d destination;   // where it should land
    enum Kind { Loop, Pin } kind = Loop;
    // timestamp of the surfel the source came from, or -1 to select
    // influencing nodes by distance alone; a timestamp keeps a constraint
    // bound to its own surface sheet when two sheets nearly coincide
    int t0 = -1;
};

struct GraphParams {
    int k = 4;
    int k_inf = 4;
    int spacing = 0;       // sampling stride over stable surfels, 0 = auto
    double w_rot = 1.0;    // keeps node transforms near rotations
    double w_reg = 10.0;   // keeps neighboring nodes consistent
    double w_con = 100.0;  // pulls constraint sources onto destinations
    int max_iters = 20;
    double rel_tol = 1e-6; // relative energy decrease that counts as done
};

// Unweighted sums of squared residuals per term, plus the weighted total.
struct GraphEnergies {
    double rot = 0;
    double reg = 0;
    double con = 0;
    double total = 0;
};

struct OptimizeStats {
    GraphEnergies initial;
    GraphEnergies final;
    int iterations = 0;
    bool damped = false;   // a Levenberg fallback or safeguarded step fired
};

// Samples every spacing-th stable surfel in timestamp order (auto spacing
// targets max(16, stable/5000) nodes) and wires each node to its k nearest
// temporal neighbors. Throws GraphTooSmallError when fewer than k+1 nodes
// would result.
DeformationGraph build_graph(const SurfelMap& map, const GraphParams& prm = {});

// Influence set of a point: the k_inf spatially nearest among the 2*k_inf
// temporally nearest nodes, weighted by (1 - d/d_max)^2 with d_max the
// distance to the (k_inf+1)-nearest candidate, clamped at zero beyond
// d_max and normalized to sum to one. Falls back to uniform weights when
// every candidate sits at or past d_max or too few nodes exist for d_max.
std::vector<std::pair<int, double>> influence_weights(const Eigen::Vector3d& p, int t0,
                                                      const DeformationGraph& graph);
inline std::vector<std::pair<int, double>> influence_weights(const Surfel& s,
                                                             const DeformationGraph& graph) {
    return influence_weights(s.position, s.t0, graph);
}

// Same selection ignoring timestamps; used for constraints, which carry none.
std::vector<std::pair<int, double>> spatial_influence_weights(const Eigen::Vector3d& p,
                                                              const DeformationGraph& graph);

// sum_n w_n * (R_n (p - g_n) + g_n + t_n)
Eigen::Vector3d deform_position(const Eigen::Vector3d& p, const DeformationGraph& graph,
                                const std::vector<std::pair<int, double>>& weights);

// sum_n w_n * R_n^{-T} n, renormalized; keeps n when the sum degenerates.
Eigen::Vector3d deform_normal(const Eigen::Vector3d& n, const DeformationGraph& graph,
                              const std::vector<std::pair<int, double>>& weights);

// Evaluates the deformation energy at the graph's current transforms.
GraphEnergies graph_energy(const DeformationGraph& graph, const std::vector<Constraint>& constraints,
                           const GraphParams& prm = {});

// Gauss-Newton over all node transforms (12 parameters each) minimizing
//   w_rot * sum_n |R_n^T R_n - I|_F^2
// + w_reg * sum_n sum_{m in N(n)} |R_n (g_m - g_n) + g_n + t_n - g_m - t_m|^2
// + w_con * sum_q |deform(q.source) - q.destination|^2.
// Steps that raise the energy are retried with increasing Levenberg damping
// and dropped if damping cannot save them, so the energy never increases.
OptimizeStats optimize_graph(DeformationGraph& graph, const std::vector<Constraint>& constraints,
                             const GraphParams& prm = {});

// Moves every surfel (position and normal) through the graph. Timestamps
// are untouched; reactivation is the loop-closure step's call to make.
void apply_deformation(SurfelMap& map, const DeformationGraph& graph);

} // namespace surfelslam
