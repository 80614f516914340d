#pragma once

#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "surfelslam/errors.h"
#include "surfelslam/image.h"

namespace surfelslam {

struct Intrinsics {
    double fx = 0, fy = 0, cx = 0, cy = 0;
    int width = 0, height = 0;

    // Scaled copy for pyramid level l (level 0 = full resolution).
    // Pixel centers sit at integer coordinates, hence the half-pixel shift.
    Intrinsics level(int l) const {
        Intrinsics k = *this;
        for (int i = 0; i < l; ++i) {
            k.fx *= 0.5;
            k.fy *= 0.5;
            k.cx = (k.cx + 0.5) * 0.5 - 0.5;
            k.cy = (k.cy + 0.5) * 0.5 - 0.5;
            k.width /= 2;
            k.height /= 2;
        }
        return k;
    }
};

struct Pose {
    Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
    Eigen::Vector3d t = Eigen::Vector3d::Zero();

    static Pose identity() { return {}; }

    Eigen::Vector3d operator*(const Eigen::Vector3d& p) const { return R * p + t; }
    Pose operator*(const Pose& other) const { return {R * other.R, R * other.t + t}; }
    Pose inverse() const { return {R.transpose(), -(R.transpose() * t)}; }
};

// Twist layout: (v, w) — translational first, rotational last.
using Twist = Eigen::Matrix<double, 6, 1>;

Eigen::Vector3d backproject(int u, int v, double depth, const Intrinsics& K);
Eigen::Vector2d project(const Eigen::Vector3d& p, const Intrinsics& K);

Pose se3_exp(const Twist& xi);
Twist se3_log(const Pose& P);

inline Eigen::Matrix3d skew(const Eigen::Vector3d& w) {
    Eigen::Matrix3d S;
    S << 0, -w.z(), w.y(), w.z(), 0, -w.x(), -w.y(), w.x(), 0;
    return S;
}

// NTSC luma from an RGB triple on the 0..255 scale.
inline double intensity(double r, double g, double b) {
    return 0.2989 * r + 0.5870 * g + 0.1140 * b;
}
inline float intensity(const Eigen::Vector3f& c) {
    return static_cast<float>(intensity(c.x(), c.y(), c.z()));
}

// Box-filtered half-resolution pyramid. Level 0 is the input.
// With exclude_invalid, zero pixels are left out of each 2x2 average
// (depth maps use zero as the invalid marker).
std::vector<GrayImage> build_pyramid(const GrayImage& img, int levels, bool exclude_invalid = false);

} // namespace surfelslam
