#pragma once

#include <vector>

#include "surfelslam/image.h"

namespace surfelslam {

struct LightModel {
    double slant = 0.0;  // angle between light direction and optical axis, [0, pi/2)
    double tilt = 0.0;   // azimuth of the light direction in the image plane, [0, 2pi)
    double albedo = 1.0; // (0, 1]
};

struct DepthMap {
    DepthImage depth;   // meters, valid entries > 0
    MaskImage invalid;  // nonzero = no depth
};

// Lambertian reflectance of a surface patch with gradients (p, q).
double reflectance(double p, double q, const LightModel& L);

// Iterative shading-based relative depth. Output is dimensionless and
// normalized to [0,1] over valid pixels (constant images stay constant).
// Pixels flagged in `mask` are excluded from the iteration and filled by
// diffusion afterward. `residuals`, when given, receives the RMS shading
// residual before iteration 1 and after each iteration.
GrayImage estimate_relative_depth(const GrayImage& I, const LightModel& L, int iters,
                                  const MaskImage* mask = nullptr,
                                  std::vector<double>* residuals = nullptr);

DepthMap to_metric(const GrayImage& Z, double scale, double offset,
                   const MaskImage* mask = nullptr);

} // namespace surfelslam
