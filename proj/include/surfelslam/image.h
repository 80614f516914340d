#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "surfelslam/errors.h"

namespace surfelslam {

template <typename T>
class Image {
  public:
    Image() = default;
    Image(int width, int height, T fill = T{})
        : w_(width), h_(height), data_(static_cast<size_t>(width) * height, fill) {}

    int width() const { return w_; }
    int height() const { return h_; }
    bool empty() const { return data_.empty(); }
    size_t size() const { return data_.size(); }

    T& at(int x, int y) { return data_[static_cast<size_t>(y) * w_ + x]; }
    const T& at(int x, int y) const { return data_[static_cast<size_t>(y) * w_ + x]; }
    bool inside(int x, int y) const { return x >= 0 && x < w_ && y >= 0 && y < h_; }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    bool same_size(int w, int h) const { return w_ == w && h_ == h; }

  private:
    int w_ = 0, h_ = 0;
    std::vector<T> data_;
};

using GrayImage = Image<float>;                  // intensities, any scale
using DepthImage = Image<float>;                 // meters, 0 = invalid
using MaskImage = Image<uint8_t>;                // nonzero = flagged
using ColorImage = Image<Eigen::Vector3f>;       // RGB, 0..255 per channel
using IndexImage = Image<int32_t>;               // -1 = none
using NormalImage = Image<Eigen::Vector3f>;      // unit vectors, zero = invalid

// Bilinear sample at continuous (x, y); pixel centers at integer coordinates.
// Caller guarantees 0 <= x <= w-1, 0 <= y <= h-1.
inline float bilinear(const GrayImage& img, float x, float y) {
    int x0 = static_cast<int>(std::floor(x));
    int y0 = static_cast<int>(std::floor(y));
    x0 = std::clamp(x0, 0, img.width() - 2);
    y0 = std::clamp(y0, 0, img.height() - 2);
    float fx = x - x0, fy = y - y0;
    float v00 = img.at(x0, y0), v10 = img.at(x0 + 1, y0);
    float v01 = img.at(x0, y0 + 1), v11 = img.at(x0 + 1, y0 + 1);
    return (1 - fx) * (1 - fy) * v00 + fx * (1 - fy) * v10 + (1 - fx) * fy * v01 + fx * fy * v11;
}

} // namespace surfelslam
