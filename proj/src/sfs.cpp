#include "surfelslam/sfs.h"

#include <cmath>

#include "surfelslam/errors.h"

namespace surfelslam {

namespace {

constexpr double kEps = 1e-6;        // Newton denominator regularizer
constexpr double kStepClamp = 5.0;   // per-pixel step bound after the opening iteration
constexpr int kMaxHalvings = 30;
constexpr double kResidualTol = 1.0099; // <=1% residual increase allowed per step

struct Reflect {
    double a, b, c, albedo; // c = cos(slant), (a,b) = tilt direction * sin(slant)
    explicit Reflect(const LightModel& L)
        : a(std::cos(L.tilt) * std::sin(L.slant)),
          b(std::sin(L.tilt) * std::sin(L.slant)),
          c(std::cos(L.slant)),
          albedo(L.albedo) {}

    // R and dR/dZ (= dR/dp + dR/dq, backward differences give both unit weight)
    void eval(double p, double q, double& R, double& dRdZ) const {
        double w2 = 1.0 + p * p + q * q;
        double w = std::sqrt(w2);
        double lin = c + p * a + q * b;
        if (lin <= 0) {
            R = 0;
            dRdZ = 0;
            return;
        }
        R = albedo * lin / w;
        double w3 = w2 * w;
        dRdZ = albedo * ((a + b) / w - (p + q) * lin / w3);
    }
};

// Backward differences; first row/column gradients are zero.
inline void gradients(const GrayImage& Z, int x, int y, double& p, double& q) {
    p = x > 0 ? Z.at(x, y) - Z.at(x - 1, y) : 0.0;
    q = y > 0 ? Z.at(x, y) - Z.at(x, y - 1) : 0.0;
}

double rms_residual(const GrayImage& I, const GrayImage& Z, const Reflect& rf,
                    const MaskImage* mask) {
    double sum = 0;
    long n = 0;
    for (int y = 0; y < I.height(); ++y) {
        for (int x = 0; x < I.width(); ++x) {
            if (mask && mask->at(x, y)) continue;
            double p, q, R, d;
            gradients(Z, x, y, p, q);
            rf.eval(p, q, R, d);
            double r = I.at(x, y) - R;
            sum += r * r;
            ++n;
        }
    }
    return n > 0 ? std::sqrt(sum / n) : 0.0;
}

// Fill masked pixels by repeated 4-neighbor averaging.
void diffuse_fill(GrayImage& Z, const MaskImage& mask) {
    for (int iter = 0; iter < 500; ++iter) {
        float max_change = 0;
        for (int y = 0; y < Z.height(); ++y) {
            for (int x = 0; x < Z.width(); ++x) {
                if (!mask.at(x, y)) continue;
                float sum = 0;
                int n = 0;
                if (x > 0) { sum += Z.at(x - 1, y); ++n; }
                if (x + 1 < Z.width()) { sum += Z.at(x + 1, y); ++n; }
                if (y > 0) { sum += Z.at(x, y - 1); ++n; }
                if (y + 1 < Z.height()) { sum += Z.at(x, y + 1); ++n; }
                if (n == 0) continue;
                float v = sum / n;
                max_change = std::max(max_change, std::abs(v - Z.at(x, y)));
                Z.at(x, y) = v;
            }
        }
        if (max_change < 1e-4f) break;
    }
}

} // namespace

double reflectance(double p, double q, const LightModel& L) {
    if (!std::isfinite(p) || !std::isfinite(q))
        throw InvalidInputError("reflectance: non-finite gradient");
    double lin = std::cos(L.slant) + p * std::cos(L.tilt) * std::sin(L.slant) +
                 q * std::sin(L.tilt) * std::sin(L.slant);
    return L.albedo * std::max(0.0, lin / std::sqrt(1.0 + p * p + q * q));
}

GrayImage estimate_relative_depth(const GrayImage& I, const LightModel& L, int iters,
                                  const MaskImage* mask, std::vector<double>* residuals) {
    if (iters < 1) throw InvalidInputError("estimate_relative_depth: iters must be >= 1");
    long valid = 0;
    for (int y = 0; y < I.height(); ++y)
        for (int x = 0; x < I.width(); ++x)
            if (!mask || !mask->at(x, y)) ++valid;
    if (valid == 0) throw InvalidInputError("estimate_relative_depth: all pixels masked");

    Reflect rf(L);
    GrayImage Z(I.width(), I.height(), 0.0f);
    GrayImage step(I.width(), I.height(), 0.0f);
    GrayImage trial(I.width(), I.height(), 0.0f);

    double res = rms_residual(I, Z, rf, mask);
    if (residuals) residuals->push_back(res);

    // Newton direction per pixel, then a backtracking global step factor so
    // the residual never grows past the documented 1% tolerance. The raw
    // first step from the flat start is huge wherever dR/dZ vanishes; the
    // line search scales it into range, and later iterations are clamped so
    // isolated zero-derivative pixels cannot spike.
    for (int it = 0; it < iters; ++it) {
        for (int y = 0; y < I.height(); ++y) {
            for (int x = 0; x < I.width(); ++x) {
                if (mask && mask->at(x, y)) {
                    step.at(x, y) = 0;
                    continue;
                }
                double p, q, R, dRdZ;
                gradients(Z, x, y, p, q);
                rf.eval(p, q, R, dRdZ);
                double s = (I.at(x, y) - R) / (dRdZ + kEps);
                if (it > 0) s = std::clamp(s, -kStepClamp, kStepClamp);
                step.at(x, y) = static_cast<float>(s);
            }
        }
        double factor = 1.0;
        bool accepted = false;
        for (int h = 0; h < kMaxHalvings; ++h) {
            for (int y = 0; y < I.height(); ++y)
                for (int x = 0; x < I.width(); ++x)
                    trial.at(x, y) = Z.at(x, y) + static_cast<float>(factor) * step.at(x, y);
            double t = rms_residual(I, trial, rf, mask);
            if (t <= res * kResidualTol) {
                std::swap(Z, trial);
                res = t;
                accepted = true;
                break;
            }
            factor *= 0.5;
        }
        (void)accepted; // a rejected step leaves Z unchanged
        if (residuals) residuals->push_back(res);
    }

    if (mask) diffuse_fill(Z, *mask);

    // Fix the scale gauge: [0,1] over valid pixels (free in a relative map).
    float lo = std::numeric_limits<float>::max(), hi = std::numeric_limits<float>::lowest();
    for (int y = 0; y < Z.height(); ++y) {
        for (int x = 0; x < Z.width(); ++x) {
            if (mask && mask->at(x, y)) continue;
            lo = std::min(lo, Z.at(x, y));
            hi = std::max(hi, Z.at(x, y));
        }
    }
    float span = hi - lo;
    for (int y = 0; y < Z.height(); ++y)
        for (int x = 0; x < Z.width(); ++x)
            Z.at(x, y) = span > 1e-12f ? (Z.at(x, y) - lo) / span : Z.at(x, y) - lo;
    return Z;
}

DepthMap to_metric(const GrayImage& Z, double scale, double offset, const MaskImage* mask) {
    if (scale <= 0) throw InvalidInputError("to_metric: scale must be > 0");
    float zmin = std::numeric_limits<float>::max();
    for (int y = 0; y < Z.height(); ++y) {
        for (int x = 0; x < Z.width(); ++x) {
            if (mask && mask->at(x, y)) continue;
            zmin = std::min(zmin, Z.at(x, y));
        }
    }
    if (zmin == std::numeric_limits<float>::max())
        throw InvalidInputError("to_metric: all pixels masked");

    DepthMap out;
    out.depth = DepthImage(Z.width(), Z.height(), 0.0f);
    out.invalid = MaskImage(Z.width(), Z.height(), 0);
    for (int y = 0; y < Z.height(); ++y) {
        for (int x = 0; x < Z.width(); ++x) {
            if (mask && mask->at(x, y)) {
                out.invalid.at(x, y) = 1;
                continue;
            }
            out.depth.at(x, y) = static_cast<float>(offset + scale * (Z.at(x, y) - zmin));
        }
    }
    return out;
}

} // namespace surfelslam
