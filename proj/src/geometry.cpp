#include "surfelslam/geometry.h"

#include <cmath>

namespace surfelslam {

Eigen::Vector3d backproject(int u, int v, double depth, const Intrinsics& K) {
    if (depth <= 0) throw InvalidInputError("backproject: non-positive depth");
    return {(u - K.cx) / K.fx * depth, (v - K.cy) / K.fy * depth, depth};
}

Eigen::Vector2d project(const Eigen::Vector3d& p, const Intrinsics& K) {
    if (p.z() <= 0) throw BehindCameraError("project: point behind camera");
    return {K.fx * p.x() / p.z() + K.cx, K.fy * p.y() / p.z() + K.cy};
}

Pose se3_exp(const Twist& xi) {
    Eigen::Vector3d v = xi.head<3>(), w = xi.tail<3>();
    double th = w.norm();
    Eigen::Matrix3d W = skew(w);
    Eigen::Matrix3d R, V;
    if (th < 1e-10) {
        R = Eigen::Matrix3d::Identity() + W + 0.5 * W * W;
        V = Eigen::Matrix3d::Identity() + 0.5 * W + W * W / 6.0;
    } else {
        double a = std::sin(th) / th;
        double b = (1 - std::cos(th)) / (th * th);
        double c = (1 - a) / (th * th);
        R = Eigen::Matrix3d::Identity() + a * W + b * W * W;
        V = Eigen::Matrix3d::Identity() + b * W + c * W * W;
    }
    return {R, V * v};
}

Twist se3_log(const Pose& P) {
    double tr = std::clamp((P.R.trace() - 1.0) * 0.5, -1.0, 1.0);
    double th = std::acos(tr);
    Eigen::Vector3d w;
    if (th < 1e-10) {
        w = 0.5 * Eigen::Vector3d(P.R(2, 1) - P.R(1, 2), P.R(0, 2) - P.R(2, 0),
                                  P.R(1, 0) - P.R(0, 1));
    } else if (th > M_PI - 1e-6) {
        // Near th = pi the skew part vanishes; take the axis from the
        // dominant column of R + I and fix the sign from the skew remnant.
        Eigen::Matrix3d A = P.R + Eigen::Matrix3d::Identity();
        int col;
        A.colwise().norm().maxCoeff(&col);
        Eigen::Vector3d axis = A.col(col).normalized();
        Eigen::Vector3d s(P.R(2, 1) - P.R(1, 2), P.R(0, 2) - P.R(2, 0), P.R(1, 0) - P.R(0, 1));
        if (axis.dot(s) < 0) axis = -axis;
        w = th * axis;
    } else {
        double f = th / (2.0 * std::sin(th));
        w = f * Eigen::Vector3d(P.R(2, 1) - P.R(1, 2), P.R(0, 2) - P.R(2, 0),
                                P.R(1, 0) - P.R(0, 1));
    }

    Eigen::Matrix3d W = skew(w);
    Eigen::Matrix3d Vinv;
    if (th < 1e-10) {
        Vinv = Eigen::Matrix3d::Identity() - 0.5 * W + W * W / 12.0;
    } else {
        double half = 0.5 * th;
        double cot = half / std::tan(half);
        Vinv = Eigen::Matrix3d::Identity() - 0.5 * W + (1 - cot) / (th * th) * W * W;
    }
    Twist xi;
    xi.head<3>() = Vinv * P.t;
    xi.tail<3>() = w;
    return xi;
}

std::vector<GrayImage> build_pyramid(const GrayImage& img, int levels, bool exclude_invalid) {
    if (levels < 1) throw InvalidInputError("build_pyramid: levels must be >= 1");
    int div = 1 << (levels - 1);
    if (img.width() % div != 0 || img.height() % div != 0)
        throw InvalidInputError("build_pyramid: dimensions not divisible by 2^(levels-1)");

    std::vector<GrayImage> pyr;
    pyr.push_back(img);
    for (int l = 1; l < levels; ++l) {
        const GrayImage& prev = pyr.back();
        GrayImage next(prev.width() / 2, prev.height() / 2);
        for (int y = 0; y < next.height(); ++y) {
            for (int x = 0; x < next.width(); ++x) {
                float sum = 0;
                int n = 0;
                for (int dy = 0; dy < 2; ++dy) {
                    for (int dx = 0; dx < 2; ++dx) {
                        float v = prev.at(2 * x + dx, 2 * y + dy);
                        if (exclude_invalid && v == 0.0f) continue;
                        sum += v;
                        ++n;
                    }
                }
                next.at(x, y) = n > 0 ? sum / n : 0.0f;
            }
        }
        pyr.push_back(std::move(next));
    }
    return pyr;
}

} // namespace surfelslam
