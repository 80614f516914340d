#pragma once

#include "surfelslam/image.h"

namespace surfelslam {

// Radial gain 1 + a2 r^2 + a4 r^4 + a6 r^6 with r = distance from the optical
// center normalized by the farthest corner distance. Negative cx/cy selects
// the image center.
struct VignettingModel {
    double a2 = 0, a4 = 0, a6 = 0;
    double cx = -1, cy = -1;
};

struct ReflectParams {
    int tile = 32;          // adaptive-threshold tile edge, pixels
    double k_sigma = 2.5;   // threshold = tile mean + k_sigma * tile stddev
    double ceiling = 240.0; // luma above this is kept regardless of boundary sharpness
    int dilate = 2;         // square dilation radius applied to the final mask
};

// Specular-highlight mask: luma peaks above a per-tile adaptive threshold,
// kept when their region boundary is sharp or they exceed the hard ceiling,
// then dilated.
MaskImage detect_reflections(const ColorImage& C, const ReflectParams& prm = {});

// Diffusion fill of masked pixels; unmasked pixels pass through untouched.
ColorImage inpaint(const ColorImage& C, const MaskImage& mask);

// Divide out the radial gain, clamping to [0, 255].
ColorImage correct_vignetting(const ColorImage& C, const VignettingModel& V);

// NTSC luma scaled to [0,1].
GrayImage to_intensity01(const ColorImage& C);

} // namespace surfelslam
