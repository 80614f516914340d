#pragma once

#include <cstdint>
#include <string>

#include "surfelslam/image.h"

namespace surfelslam {

// 8-bit RGB(A) PNG -> float RGB 0..255. Grayscale files are expanded.
ColorImage read_png_color(const std::string& path);

// 16-bit grayscale PNG depth: meters = value / 5000, 0 = invalid.
DepthImage read_png_depth(const std::string& path);

void write_png_color(const std::string& path, const ColorImage& img);
void write_png_depth(const std::string& path, const DepthImage& img);

} // namespace surfelslam
