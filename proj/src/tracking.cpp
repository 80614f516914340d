#include "surfelslam/tracking.h"

#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "surfelslam/errors.h"

namespace surfelslam {

namespace {

struct PredCache {
    DepthImage depth;
    NormalImage normal;
    GrayImage intensity;   // [0,1]
    GrayImage gx, gy;      // central-difference intensity gradients
};

GrayImage to_intensity(const ColorImage& c) {
    GrayImage g(c.width(), c.height(), 0.0f);
    for (int y = 0; y < c.height(); ++y)
        for (int x = 0; x < c.width(); ++x) {
            const Eigen::Vector3f& v = c.at(x, y);
            g.at(x, y) = static_cast<float>(intensity(v.x(), v.y(), v.z()) / 255.0);
        }
    return g;
}

PredCache make_pred_cache(const DepthImage& depth, const ColorImage& color,
                          const NormalImage& normal) {
    PredCache pc;
    pc.depth = depth;
    pc.normal = normal;
    pc.intensity = to_intensity(color);
    int w = depth.width(), h = depth.height();
    pc.gx = GrayImage(w, h, 0.0f);
    pc.gy = GrayImage(w, h, 0.0f);
    for (int y = 1; y + 1 < h; ++y)
        for (int x = 1; x + 1 < w; ++x) {
            pc.gx.at(x, y) = 0.5f * (pc.intensity.at(x + 1, y) - pc.intensity.at(x - 1, y));
            pc.gy.at(x, y) = 0.5f * (pc.intensity.at(x, y + 1) - pc.intensity.at(x, y - 1));
        }
    return pc;
}

struct FrameCache {
    DepthImage depth;
    NormalImage normal;
    MaskImage mask;
    GrayImage intensity;
};

FrameCache make_frame_cache(const FrameData& f) {
    return {f.depth, f.normal, f.mask, to_intensity(f.color)};
}

EnergyTerms icp_terms(const FrameCache& f, const PredCache& p, const Pose& T,
                      const Intrinsics& K, const TrackingConfig& cfg) {
    EnergyTerms out;
    double abs_sum = 0.0;
    double cos_gate = std::cos(cfg.angle_gate_deg * M_PI / 180.0);
    for (int y = 0; y < K.height; ++y) {
        for (int x = 0; x < K.width; ++x) {
            if (f.mask.at(x, y)) continue;
            float d = f.depth.at(x, y);
            if (d <= 0) continue;
            const Eigen::Vector3f& nf = f.normal.at(x, y);
            if (nf.squaredNorm() < 0.25f) continue;
            Eigen::Vector3d pc = T * backproject(x, y, d, K);
            if (pc.z() <= 1e-9) continue;
            int px = static_cast<int>(std::lround(K.fx * pc.x() / pc.z() + K.cx));
            int py = static_cast<int>(std::lround(K.fy * pc.y() / pc.z() + K.cy));
            if (!p.depth.inside(px, py)) continue;
            float dm = p.depth.at(px, py);
            if (dm <= 0) continue;
            const Eigen::Vector3f& nm = p.normal.at(px, py);
            if (nm.squaredNorm() < 0.25f) continue;
            Eigen::Vector3d v = backproject(px, py, dm, K);
            if ((v - pc).norm() >= cfg.dist_gate) continue;
            Eigen::Vector3d n = nm.cast<double>();
            if (n.dot(T.R * nf.cast<double>()) <= cos_gate) continue;
            double r = n.dot(v - pc);
            Twist J;
            J.head<3>() = -n;
            J.tail<3>() = -pc.cross(n);
            out.energy += r * r;
            out.grad += 2.0 * r * J;
            out.hess += 2.0 * J * J.transpose();
            abs_sum += std::abs(r);
            ++out.count;
        }
    }
    if (out.count < cfg.min_assoc)
        throw DegenerateAssociationError("icp association count " + std::to_string(out.count) +
                                         " below " + std::to_string(cfg.min_assoc));
    out.residual_mean = abs_sum / out.count;
    return out;
}

// a bilinear sample is trusted only when the predicted depth is valid on the
// whole 4x4 block around it, so the intensity gradients never mix in empty
// prediction pixels
bool sample_region_valid(const DepthImage& d, int x0, int y0) {
    if (x0 < 1 || y0 < 1 || x0 + 2 >= d.width() || y0 + 2 >= d.height()) return false;
    for (int dy = -1; dy <= 2; ++dy)
        for (int dx = -1; dx <= 2; ++dx)
            if (d.at(x0 + dx, y0 + dy) <= 0) return false;
    return true;
}

EnergyTerms rgb_terms(const FrameCache& f, const PredCache& p, const Pose& T,
                      const Intrinsics& K, const TrackingConfig& cfg) {
    EnergyTerms out;
    double abs_sum = 0.0;
    for (int y = 0; y < K.height; ++y) {
        for (int x = 0; x < K.width; ++x) {
            if (f.mask.at(x, y)) continue;
            float d = f.depth.at(x, y);
            if (d <= 0) continue;
            Eigen::Vector3d pc = T * backproject(x, y, d, K);
            if (pc.z() <= 1e-9) continue;
            double wx = K.fx * pc.x() / pc.z() + K.cx;
            double wy = K.fy * pc.y() / pc.z() + K.cy;
            int x0 = static_cast<int>(std::floor(wx));
            int y0 = static_cast<int>(std::floor(wy));
            if (!sample_region_valid(p.depth, x0, y0)) continue;
            double ihat = bilinear(p.intensity, static_cast<float>(wx), static_cast<float>(wy));
            double r = f.intensity.at(x, y) - ihat;
            double gx = bilinear(p.gx, static_cast<float>(wx), static_cast<float>(wy));
            double gy = bilinear(p.gy, static_cast<float>(wx), static_cast<float>(wy));
            double iz = 1.0 / pc.z();
            // d(warp)/d(point), then chain through the twist action p + v + w x p
            Eigen::Vector3d gp(K.fx * gx * iz, K.fy * gy * iz,
                               -iz * (K.fx * gx * pc.x() * iz + K.fy * gy * pc.y() * iz));
            Twist J;
            J.head<3>() = -gp;
            J.tail<3>() = -pc.cross(gp);
            out.energy += r * r;
            out.grad += 2.0 * r * J;
            out.hess += 2.0 * J * J.transpose();
            abs_sum += std::abs(r);
            ++out.count;
        }
    }
    if (out.count < cfg.min_assoc)
        throw DegenerateAssociationError("rgb valid warp count " + std::to_string(out.count) +
                                         " below " + std::to_string(cfg.min_assoc));
    out.residual_mean = abs_sum / out.count;
    return out;
}

struct Level {
    FrameCache frame;
    PredCache pred;
    Intrinsics K;
};

FrameCache downsample_frame(const FrameCache& f) {
    int w = f.depth.width() / 2, h = f.depth.height() / 2;
    FrameCache o;
    o.depth = DepthImage(w, h, 0.0f);
    o.normal = NormalImage(w, h, Eigen::Vector3f::Zero());
    o.mask = MaskImage(w, h, 0);
    o.intensity = GrayImage(w, h, 0.0f);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            float dsum = 0, isum = 0;
            int dn = 0;
            Eigen::Vector3f nsum = Eigen::Vector3f::Zero();
            uint8_t m = 0;
            for (int dy = 0; dy < 2; ++dy)
                for (int dx = 0; dx < 2; ++dx) {
                    int sx = 2 * x + dx, sy = 2 * y + dy;
                    isum += f.intensity.at(sx, sy);
                    m |= f.mask.at(sx, sy);
                    float dv = f.depth.at(sx, sy);
                    if (dv > 0) {
                        dsum += dv;
                        ++dn;
                    }
                    const Eigen::Vector3f& nv = f.normal.at(sx, sy);
                    if (nv.squaredNorm() >= 0.25f) nsum += nv;
                }
            o.intensity.at(x, y) = isum / 4.0f;
            o.mask.at(x, y) = m;
            if (dn > 0) o.depth.at(x, y) = dsum / dn;
            if (nsum.squaredNorm() > 1e-12f) o.normal.at(x, y) = nsum.normalized();
        }
    return o;
}

PredCache downsample_pred(const PredCache& p) {
    int w = p.depth.width() / 2, h = p.depth.height() / 2;
    DepthImage dep(w, h, 0.0f);
    NormalImage nor(w, h, Eigen::Vector3f::Zero());
    GrayImage inten(w, h, 0.0f);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            float dsum = 0, isum = 0;
            int dn = 0;
            Eigen::Vector3f nsum = Eigen::Vector3f::Zero();
            for (int dy = 0; dy < 2; ++dy)
                for (int dx = 0; dx < 2; ++dx) {
                    int sx = 2 * x + dx, sy = 2 * y + dy;
                    float dv = p.depth.at(sx, sy);
                    if (dv <= 0) continue;
                    dsum += dv;
                    isum += p.intensity.at(sx, sy);
                    ++dn;
                    const Eigen::Vector3f& nv = p.normal.at(sx, sy);
                    if (nv.squaredNorm() >= 0.25f) nsum += nv;
                }
            if (dn > 0) {
                dep.at(x, y) = dsum / dn;
                inten.at(x, y) = isum / dn;
                if (nsum.squaredNorm() > 1e-12f) nor.at(x, y) = nsum.normalized();
            }
        }
    PredCache o;
    o.depth = std::move(dep);
    o.normal = std::move(nor);
    o.intensity = std::move(inten);
    o.gx = GrayImage(w, h, 0.0f);
    o.gy = GrayImage(w, h, 0.0f);
    for (int y = 1; y + 1 < h; ++y)
        for (int x = 1; x + 1 < w; ++x) {
            o.gx.at(x, y) = 0.5f * (o.intensity.at(x + 1, y) - o.intensity.at(x - 1, y));
            o.gy.at(x, y) = 0.5f * (o.intensity.at(x, y + 1) - o.intensity.at(x, y - 1));
        }
    return o;
}

struct Combined {
    double energy = 0.0;
    Twist grad = Twist::Zero();
    Matrix6d hess = Matrix6d::Zero();
    EnergyTerms icp, rgb;
};

Combined combined_terms(const Level& L, const Pose& T, const TrackingConfig& cfg) {
    Combined c;
    c.icp = icp_terms(L.frame, L.pred, T, L.K, cfg);
    c.rgb = rgb_terms(L.frame, L.pred, T, L.K, cfg);
    c.energy = c.icp.energy + cfg.w_rgb * c.rgb.energy;
    c.grad = c.icp.grad + cfg.w_rgb * c.rgb.grad;
    c.hess = c.icp.hess + cfg.w_rgb * c.rgb.hess;
    return c;
}

} // namespace

EnergyTerms icp_energy(const FrameData& frame, const PredictedView& pred, const Pose& T,
                       const Intrinsics& K, const TrackingConfig& cfg) {
    if (!frame.depth.same_size(K.width, K.height) || !pred.depth.same_size(K.width, K.height))
        throw InvalidInputError("icp_energy: dimensions do not match intrinsics");
    FrameCache f = make_frame_cache(frame);
    PredCache p = make_pred_cache(pred.depth, pred.color, pred.normal);
    return icp_terms(f, p, T, K, cfg);
}

EnergyTerms rgb_energy(const FrameData& frame, const PredictedView& pred, const Pose& T,
                       const Intrinsics& K, const TrackingConfig& cfg) {
    if (!frame.depth.same_size(K.width, K.height) || !pred.depth.same_size(K.width, K.height))
        throw InvalidInputError("rgb_energy: dimensions do not match intrinsics");
    FrameCache f = make_frame_cache(frame);
    PredCache p = make_pred_cache(pred.depth, pred.color, pred.normal);
    return rgb_terms(f, p, T, K, cfg);
}

TrackingResult estimate_pose(const FrameData& frame, const PredictedView& pred,
                             const Pose& init, const Intrinsics& K, const TrackingConfig& cfg) {
    if (cfg.levels < 1 || cfg.iters.empty())
        throw InvalidInputError("estimate_pose: need at least one pyramid level and iteration budget");
    if (!frame.depth.same_size(K.width, K.height) || !pred.depth.same_size(K.width, K.height))
        throw InvalidInputError("estimate_pose: dimensions do not match intrinsics");
    if (pred.depth.empty()) throw InvalidInputError("estimate_pose: empty prediction");

    std::vector<Level> levels(cfg.levels);
    levels[0].frame = make_frame_cache(frame);
    levels[0].pred = make_pred_cache(pred.depth, pred.color, pred.normal);
    levels[0].K = K;
    for (int l = 1; l < cfg.levels; ++l) {
        levels[l].frame = downsample_frame(levels[l - 1].frame);
        levels[l].pred = downsample_pred(levels[l - 1].pred);
        levels[l].K = K.level(l);
    }

    TrackingResult res;
    res.iters_per_level.assign(cfg.levels, 0);
    Pose T = Pose::identity();
    bool finest_on_threshold = false;
    Matrix6d finest_hess = Matrix6d::Zero();
    Combined cur;

    for (int l = cfg.levels - 1; l >= 0; --l) {
        size_t bi = std::min<size_t>(cfg.levels - 1 - l, cfg.iters.size() - 1);
        int budget = cfg.iters[bi];
        const Level& L = levels[l];
        for (int it = 0; it < budget; ++it) {
            try {
                cur = combined_terms(L, T, cfg);
            } catch (const DegenerateAssociationError& e) {
                if (l == 0) throw TrackingLostError(e.what());
                budget = it;
                break;
            }
            if (l == 0) {
                finest_hess = cur.hess;
                res.energy = cur.energy;
                res.icp_inliers = cur.icp.count;
                res.rgb_residual_mean = cur.rgb.residual_mean;
            }
            Twist delta = cur.hess.ldlt().solve(-cur.grad);
            if (!delta.allFinite()) {
                res.iters_per_level[cfg.levels - 1 - l] = it + 1;
                break;
            }
            bool accepted = false;
            for (int h = 0; h <= cfg.max_halvings; ++h) {
                Pose Ttry = se3_exp(delta) * T;
                double etry = std::numeric_limits<double>::infinity();
                try {
                    Combined trial = combined_terms(L, Ttry, cfg);
                    etry = trial.energy;
                    if (etry <= cur.energy) {
                        T = Ttry;
                        cur = trial;
                        accepted = true;
                        if (l == 0) {
                            finest_hess = cur.hess;
                            res.energy = cur.energy;
                            res.icp_inliers = cur.icp.count;
                            res.rgb_residual_mean = cur.rgb.residual_mean;
                        }
                    }
                } catch (const DegenerateAssociationError&) {
                }
                if (accepted) break;
                delta *= 0.5;
            }
            res.iters_per_level[cfg.levels - 1 - l] = it + 1;
            if (!accepted) break;
            if (delta.norm() < cfg.eps) {
                if (l == 0) finest_on_threshold = true;
                break;
            }
        }
    }

    // a vanishing gradient also counts as stopping on the threshold: the
    // solver is at a stationary point even if the loop exhausted its budget
    if (!finest_on_threshold && cur.grad.norm() < 1e-12) finest_on_threshold = true;

    // unobservable directions leave the Gauss-Newton system rank deficient;
    // flag the estimate rather than trusting whatever the solver returned
    bool observable = true;
    Eigen::SelfAdjointEigenSolver<Matrix6d> es(finest_hess);
    if (es.info() == Eigen::Success) {
        double emax = es.eigenvalues().maxCoeff();
        double emin = es.eigenvalues().minCoeff();
        if (!(emin > 1e-9 * std::max(emax, 1e-300))) observable = false;
    }

    res.converged = finest_on_threshold && observable;
    res.pose = init * T;
    return res;
}

} // namespace surfelslam
