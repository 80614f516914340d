#include "surfelslam/defgraph.h"

#include <Eigen/Cholesky>
#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <string>

#include "surfelslam/errors.h"

namespace surfelslam {

namespace {

void check_graph(const DeformationGraph& g) {
    int n = static_cast<int>(g.nodes.size());
    if (n == 0) throw InvalidInputError("deformation graph is empty");
    if (g.k_inf < 1) throw InvalidInputError("k_inf must be positive");
    for (const auto& node : g.nodes)
        for (int id : node.neighbors)
            if (id < 0 || id >= n)
                throw InvalidInputError("graph neighbor id out of range");
}

// Distance-then-id ordering keeps candidate selection deterministic.
struct Cand {
    double d2;
    int id;
    bool operator<(const Cand& o) const { return d2 < o.d2 || (d2 == o.d2 && id < o.id); }
};

std::vector<std::pair<int, double>> weights_from(const Eigen::Vector3d& p,
                                                 const std::vector<int>& cand,
                                                 const DeformationGraph& graph) {
    std::vector<Cand> by_dist;
    by_dist.reserve(cand.size());
    for (int id : cand) by_dist.push_back({(p - graph.nodes[id].g).squaredNorm(), id});
    std::sort(by_dist.begin(), by_dist.end());

    int m = std::min<int>(graph.k_inf, static_cast<int>(by_dist.size()));
    std::vector<std::pair<int, double>> out;
    out.reserve(m);
    double sum = 0;
    if (static_cast<int>(by_dist.size()) > graph.k_inf) {
        double dmax = std::sqrt(by_dist[graph.k_inf].d2);
        if (dmax > 0) {
            for (int i = 0; i < m; ++i) {
                double w = std::max(0.0, 1.0 - std::sqrt(by_dist[i].d2) / dmax);
                w *= w;
                out.emplace_back(by_dist[i].id, w);
                sum += w;
            }
        }
    }
    if (sum < 1e-300) {
        // every candidate at or past dmax, or no (k_inf+1)-th node to set
        // the falloff scale: weight the selected nodes evenly
        out.clear();
        for (int i = 0; i < m; ++i) out.emplace_back(by_dist[i].id, 1.0 / m);
        return out;
    }
    for (auto& [id, w] : out) w /= sum;
    return out;
}

Eigen::Matrix3d normal_transform(const Eigen::Matrix3d& R) {
    return R.inverse().transpose();
}

// Per-edge regularizer residual: a node's affine map applied to a
// neighbor's rest position should agree with that neighbor's own motion.
Eigen::Vector3d reg_residual(const DeformationNode& a, const DeformationNode& b) {
    return a.R * (b.g - a.g) + a.g + a.t - (b.g + b.t);
}

using ConWeights = std::vector<std::vector<std::pair<int, double>>>;

GraphEnergies energy_with(const DeformationGraph& g, const std::vector<Constraint>& cons,
                          const ConWeights& cw, const GraphParams& prm) {
    GraphEnergies e;
    for (const auto& node : g.nodes) {
        e.rot += (node.R.transpose() * node.R - Eigen::Matrix3d::Identity()).squaredNorm();
        for (int id : node.neighbors) e.reg += reg_residual(node, g.nodes[id]).squaredNorm();
    }
    for (size_t q = 0; q < cons.size(); ++q)
        e.con += (deform_position(cons[q].source, g, cw[q]) - cons[q].destination).squaredNorm();
    e.total = prm.w_rot * e.rot + prm.w_reg * e.reg + prm.w_con * e.con;
    return e;
}

// Normal equations accumulated block by block; the graphs are small enough
// for a dense solve.
struct NormalEqs {
    Eigen::MatrixXd H;
    Eigen::VectorXd b; // -J^T r
    explicit NormalEqs(int params) : H(Eigen::MatrixXd::Zero(params, params)),
                                     b(Eigen::VectorXd::Zero(params)) {}
    void add(const std::vector<int>& cols, const Eigen::MatrixXd& J, const Eigen::VectorXd& r) {
        Eigen::MatrixXd JtJ = J.transpose() * J;
        Eigen::VectorXd Jtr = J.transpose() * r;
        int L = static_cast<int>(cols.size());
        for (int a = 0; a < L; ++a) {
            b(cols[a]) -= Jtr(a);
            for (int c = 0; c < L; ++c) H(cols[a], cols[c]) += JtJ(a, c);
        }
    }
};

// Column-major layout: node n owns params [12n, 12n+12), R entry (r,c) at
// 12n + 3c + r, translation at 12n + 9.
void linearize(const DeformationGraph& g, const std::vector<Constraint>& cons,
               const ConWeights& cw, const GraphParams& prm, NormalEqs& eqs) {
    double sr = std::sqrt(prm.w_rot), sg = std::sqrt(prm.w_reg), sc = std::sqrt(prm.w_con);
    int N = static_cast<int>(g.nodes.size());

    for (int n = 0; n < N; ++n) {
        const Eigen::Matrix3d& R = g.nodes[n].R;
        std::vector<int> cols(9);
        for (int c = 0; c < 3; ++c)
            for (int r = 0; r < 3; ++r) cols[3 * c + r] = 12 * n + 3 * c + r;
        Eigen::MatrixXd J = Eigen::MatrixXd::Zero(9, 9);
        Eigen::VectorXd res(9);
        Eigen::Matrix3d G = R.transpose() * R - Eigen::Matrix3d::Identity();
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                int row = 3 * j + i;
                res(row) = sr * G(i, j);
                for (int a = 0; a < 3; ++a) {
                    J(row, 3 * i + a) += sr * R(a, j);
                    J(row, 3 * j + a) += sr * R(a, i);
                }
            }
        eqs.add(cols, J, res);
    }

    for (int n = 0; n < N; ++n) {
        for (int id : g.nodes[n].neighbors) {
            Eigen::Vector3d d = g.nodes[id].g - g.nodes[n].g;
            std::vector<int> cols(15);
            for (int i = 0; i < 12; ++i) cols[i] = 12 * n + i;
            for (int i = 0; i < 3; ++i) cols[12 + i] = 12 * id + 9 + i;
            Eigen::MatrixXd J = Eigen::MatrixXd::Zero(3, 15);
            for (int c = 0; c < 3; ++c)
                for (int r = 0; r < 3; ++r) J(r, 3 * c + r) = sg * d(c);
            J.block<3, 3>(0, 9) = sg * Eigen::Matrix3d::Identity();
            J.block<3, 3>(0, 12) = -sg * Eigen::Matrix3d::Identity();
            eqs.add(cols, J, sg * reg_residual(g.nodes[n], g.nodes[id]));
        }
    }

    for (size_t q = 0; q < cons.size(); ++q) {
        const auto& wl = cw[q];
        int L = static_cast<int>(wl.size());
        std::vector<int> cols(12 * L);
        Eigen::MatrixXd J = Eigen::MatrixXd::Zero(3, 12 * L);
        for (int i = 0; i < L; ++i) {
            auto [id, w] = wl[i];
            Eigen::Vector3d d = cons[q].source - g.nodes[id].g;
            for (int j = 0; j < 12; ++j) cols[12 * i + j] = 12 * id + j;
            for (int c = 0; c < 3; ++c)
                for (int r = 0; r < 3; ++r) J(r, 12 * i + 3 * c + r) = sc * w * d(c);
            J.block<3, 3>(0, 12 * i + 9) = sc * w * Eigen::Matrix3d::Identity();
        }
        Eigen::Vector3d res = sc * (deform_position(cons[q].source, g, wl) - cons[q].destination);
        eqs.add(cols, J, res);
    }
}

void apply_step(DeformationGraph& g, const Eigen::VectorXd& delta) {
    for (size_t n = 0; n < g.nodes.size(); ++n) {
        for (int c = 0; c < 3; ++c)
            for (int r = 0; r < 3; ++r) g.nodes[n].R(r, c) += delta(12 * n + 3 * c + r);
        g.nodes[n].t += delta.segment<3>(12 * n + 9);
    }
}

} // namespace

DeformationGraph build_graph(const SurfelMap& map, const GraphParams& prm) {
    if (prm.k < 1 || prm.k_inf < 1 || prm.spacing < 0)
        throw InvalidInputError("bad graph parameters");
    const auto& surf = map.surfels();
    std::vector<int> stable;
    for (int i = 0; i < static_cast<int>(surf.size()); ++i)
        if (surf[i].weight >= map.params().w_stable) stable.push_back(i);
    std::stable_sort(stable.begin(), stable.end(),
                     [&](int a, int b) { return surf[a].t0 < surf[b].t0; });

    int spacing = prm.spacing;
    if (spacing == 0) {
        int target = std::max<int>(16, static_cast<int>(stable.size()) / 5000);
        spacing = std::max<int>(1, static_cast<int>(stable.size()) / target);
    }

    DeformationGraph g;
    g.k = prm.k;
    g.k_inf = prm.k_inf;
    for (size_t i = 0; i < stable.size(); i += spacing) {
        DeformationNode node;
        node.g = surf[stable[i]].position;
        node.t0 = surf[stable[i]].t0;
        g.nodes.push_back(std::move(node));
    }
    int N = static_cast<int>(g.nodes.size());
    if (N < prm.k + 1)
        throw GraphTooSmallError("sampled " + std::to_string(N) + " nodes, need " +
                                 std::to_string(prm.k + 1));

    for (int i = 0; i < N; ++i) {
        std::vector<std::array<int, 3>> order; // |dt0|, index gap, id
        order.reserve(N - 1);
        for (int j = 0; j < N; ++j)
            if (j != i)
                order.push_back({std::abs(g.nodes[j].t0 - g.nodes[i].t0), std::abs(j - i), j});
        std::sort(order.begin(), order.end());
        g.nodes[i].neighbors.resize(prm.k);
        for (int j = 0; j < prm.k; ++j) g.nodes[i].neighbors[j] = order[j][2];
    }
    return g;
}

std::vector<std::pair<int, double>> influence_weights(const Eigen::Vector3d& p, int t0,
                                                      const DeformationGraph& graph) {
    check_graph(graph);
    int N = static_cast<int>(graph.nodes.size());
    // A tight temporal pool keeps a surfel bound to nodes of its own sheet:
    // at the default graph size of 16, a wider pool would span every node
    // and let nearly coincident sheets share influence, which smears any
    // loop correction across both.
    int cap = std::min(N, 2 * graph.k_inf);
    std::vector<std::array<int, 2>> order; // |dt0|, id
    order.reserve(N);
    for (int j = 0; j < N; ++j) order.push_back({std::abs(graph.nodes[j].t0 - t0), j});
    std::partial_sort(order.begin(), order.begin() + cap, order.end());
    std::vector<int> cand(cap);
    for (int j = 0; j < cap; ++j) cand[j] = order[j][1];
    return weights_from(p, cand, graph);
}

std::vector<std::pair<int, double>> spatial_influence_weights(const Eigen::Vector3d& p,
                                                              const DeformationGraph& graph) {
    check_graph(graph);
    std::vector<int> cand(graph.nodes.size());
    std::iota(cand.begin(), cand.end(), 0);
    return weights_from(p, cand, graph);
}

Eigen::Vector3d deform_position(const Eigen::Vector3d& p, const DeformationGraph& graph,
                                const std::vector<std::pair<int, double>>& weights) {
    Eigen::Vector3d out = Eigen::Vector3d::Zero();
    for (auto [id, w] : weights) {
        if (id < 0 || id >= static_cast<int>(graph.nodes.size()))
            throw InvalidInputError("weight refers to a node outside the graph");
        const DeformationNode& n = graph.nodes[id];
        out += w * (n.R * (p - n.g) + n.g + n.t);
    }
    return out;
}

Eigen::Vector3d deform_normal(const Eigen::Vector3d& n, const DeformationGraph& graph,
                              const std::vector<std::pair<int, double>>& weights) {
    Eigen::Vector3d out = Eigen::Vector3d::Zero();
    for (auto [id, w] : weights) {
        if (id < 0 || id >= static_cast<int>(graph.nodes.size()))
            throw InvalidInputError("weight refers to a node outside the graph");
        out += w * (normal_transform(graph.nodes[id].R) * n);
    }
    if (!out.allFinite() || out.squaredNorm() < 1e-24) return n;
    return out.normalized();
}

GraphEnergies graph_energy(const DeformationGraph& graph, const std::vector<Constraint>& constraints,
                           const GraphParams& prm) {
    check_graph(graph);
    ConWeights cw;
    cw.reserve(constraints.size());
    for (const auto& q : constraints) {
        if (!q.source.allFinite() || !q.destination.allFinite())
            throw InvalidInputError("constraint with non-finite coordinates");
        cw.push_back(q.t0 >= 0 ? influence_weights(q.source, q.t0, graph)
                              : spatial_influence_weights(q.source, graph));
    }
    return energy_with(graph, constraints, cw, prm);
}

OptimizeStats optimize_graph(DeformationGraph& graph, const std::vector<Constraint>& constraints,
                             const GraphParams& prm) {
    check_graph(graph);
    if (constraints.empty()) throw InvalidInputError("no constraints to optimize against");

    // node rest positions never move, so constraint weights are fixed
    ConWeights cw;
    cw.reserve(constraints.size());
    for (const auto& q : constraints) {
        if (!q.source.allFinite() || !q.destination.allFinite())
            throw InvalidInputError("constraint with non-finite coordinates");
        cw.push_back(q.t0 >= 0 ? influence_weights(q.source, q.t0, graph)
                              : spatial_influence_weights(q.source, graph));
    }

    OptimizeStats stats;
    stats.initial = energy_with(graph, constraints, cw, prm);
    double cur = stats.initial.total;
    int params = 12 * static_cast<int>(graph.nodes.size());

    for (int iter = 0; iter < prm.max_iters; ++iter) {
        if (cur <= 1e-24) break; // already at rounding dust, nothing to gain
        NormalEqs eqs(params);
        linearize(graph, constraints, cw, prm, eqs);
        if (eqs.b.norm() < 1e-15) break;

        double lambda = 0;
        bool accepted = false;
        DeformationGraph trial;
        double etrial = cur;
        for (int attempt = 0; attempt < 8; ++attempt) {
            Eigen::MatrixXd Hd = eqs.H;
            if (lambda > 0) Hd.diagonal().array() += lambda;
            Eigen::VectorXd delta = Hd.ldlt().solve(eqs.b);
            if (delta.allFinite()) {
                trial = graph;
                apply_step(trial, delta);
                etrial = energy_with(trial, constraints, cw, prm).total;
                if (std::isfinite(etrial) && etrial <= cur) {
                    accepted = true;
                    break;
                }
            }
            lambda = std::max(lambda * 10, 1e-4);
            stats.damped = true;
        }
        if (!accepted) break;

        graph = std::move(trial);
        stats.iterations = iter + 1;
        double rel = (cur - etrial) / std::max(cur, 1e-300);
        cur = etrial;
        if (rel < prm.rel_tol) break;
    }

    stats.final = energy_with(graph, constraints, cw, prm);
    return stats;
}

void apply_deformation(SurfelMap& map, const DeformationGraph& graph) {
    check_graph(graph);
    std::vector<Eigen::Matrix3d> invT;
    invT.reserve(graph.nodes.size());
    for (const auto& n : graph.nodes) invT.push_back(normal_transform(n.R));

    for (Surfel& s : map.surfels()) {
        auto w = influence_weights(s.position, s.t0, graph);
        Eigen::Vector3d p = Eigen::Vector3d::Zero();
        Eigen::Vector3d nrm = Eigen::Vector3d::Zero();
        for (auto [id, wi] : w) {
            const DeformationNode& n = graph.nodes[id];
            p += wi * (n.R * (s.position - n.g) + n.g + n.t);
            nrm += wi * (invT[id] * s.normal);
        }
        s.position = p;
        if (nrm.allFinite() && nrm.squaredNorm() >= 1e-24) s.normal = nrm.normalized();
    }
}

} // namespace surfelslam
