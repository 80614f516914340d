#include "surfelslam/preprocess.h"

#include <cmath>
#include <vector>

#include "surfelslam/errors.h"
#include "surfelslam/geometry.h"

namespace surfelslam {

namespace {

constexpr double kBoundaryGradMin = 8.0; // luma levels per pixel

GrayImage luma_image(const ColorImage& C) {
    GrayImage L(C.width(), C.height(), 0.0f);
    for (int y = 0; y < C.height(); ++y)
        for (int x = 0; x < C.width(); ++x) L.at(x, y) = intensity(C.at(x, y));
    return L;
}

double grad_mag(const GrayImage& L, int x, int y) {
    int xm = std::max(x - 1, 0), xp = std::min(x + 1, L.width() - 1);
    int ym = std::max(y - 1, 0), yp = std::min(y + 1, L.height() - 1);
    double gx = (L.at(xp, y) - L.at(xm, y)) / (xp - xm > 0 ? xp - xm : 1);
    double gy = (L.at(x, yp) - L.at(x, ym)) / (yp - ym > 0 ? yp - ym : 1);
    return std::hypot(gx, gy);
}

} // namespace

MaskImage detect_reflections(const ColorImage& C, const ReflectParams& prm) {
    if (C.width() == 0 || C.height() == 0)
        throw InvalidInputError("detect_reflections: empty image");
    if (prm.tile < 1) throw InvalidInputError("detect_reflections: tile must be >= 1");
    GrayImage L = luma_image(C);
    int W = L.width(), H = L.height();

    // per-tile threshold mean + k*sigma; edge tiles use their actual extent
    int tx_n = (W + prm.tile - 1) / prm.tile;
    int ty_n = (H + prm.tile - 1) / prm.tile;
    std::vector<double> thr(static_cast<size_t>(tx_n) * ty_n);
    for (int ty = 0; ty < ty_n; ++ty) {
        for (int tx = 0; tx < tx_n; ++tx) {
            int x0 = tx * prm.tile, x1 = std::min(x0 + prm.tile, W);
            int y0 = ty * prm.tile, y1 = std::min(y0 + prm.tile, H);
            double sum = 0, sum2 = 0;
            long n = 0;
            for (int y = y0; y < y1; ++y)
                for (int x = x0; x < x1; ++x) {
                    double v = L.at(x, y);
                    sum += v;
                    sum2 += v * v;
                    ++n;
                }
            double mean = sum / n;
            double var = std::max(0.0, sum2 / n - mean * mean);
            thr[static_cast<size_t>(ty) * tx_n + tx] = mean + prm.k_sigma * std::sqrt(var);
        }
    }

    MaskImage cand(W, H, 0);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            cand.at(x, y) =
                L.at(x, y) > thr[static_cast<size_t>(y / prm.tile) * tx_n + x / prm.tile] ? 1 : 0;

    // connected candidate regions survive when their boundary is sharp
    Image<int32_t> label(W, H, -1);
    std::vector<uint8_t> region_keep;
    std::vector<std::pair<int, int>> stack;
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            if (!cand.at(x, y) || label.at(x, y) >= 0) continue;
            int id = static_cast<int>(region_keep.size());
            double grad_sum = 0;
            long boundary_n = 0;
            stack.push_back({x, y});
            label.at(x, y) = id;
            while (!stack.empty()) {
                auto [cx, cy] = stack.back();
                stack.pop_back();
                bool boundary = cx == 0 || cy == 0 || cx == W - 1 || cy == H - 1;
                const int dx[4] = {1, -1, 0, 0}, dy[4] = {0, 0, 1, -1};
                for (int k = 0; k < 4; ++k) {
                    int nx = cx + dx[k], ny = cy + dy[k];
                    if (!cand.inside(nx, ny)) continue;
                    if (!cand.at(nx, ny)) {
                        boundary = true;
                    } else if (label.at(nx, ny) < 0) {
                        label.at(nx, ny) = id;
                        stack.push_back({nx, ny});
                    }
                }
                if (boundary) {
                    grad_sum += grad_mag(L, cx, cy);
                    ++boundary_n;
                }
            }
            double mean_grad = boundary_n > 0 ? grad_sum / boundary_n : 0.0;
            region_keep.push_back(mean_grad > kBoundaryGradMin ? 1 : 0);
        }
    }

    MaskImage kept(W, H, 0);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            if (cand.at(x, y) && (region_keep[label.at(x, y)] || L.at(x, y) > prm.ceiling))
                kept.at(x, y) = 1;

    if (prm.dilate <= 0) return kept;
    MaskImage out(W, H, 0);
    int r = prm.dilate;
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            if (!kept.at(x, y)) continue;
            for (int dy = -r; dy <= r; ++dy)
                for (int dx = -r; dx <= r; ++dx)
                    if (out.inside(x + dx, y + dy)) out.at(x + dx, y + dy) = 1;
        }
    return out;
}

ColorImage inpaint(const ColorImage& C, const MaskImage& mask) {
    if (mask.width() != C.width() || mask.height() != C.height())
        throw InvalidInputError("inpaint: mask dimensions do not match the image");
    long unmasked = 0;
    Eigen::Vector3f mean = Eigen::Vector3f::Zero();
    for (int y = 0; y < C.height(); ++y)
        for (int x = 0; x < C.width(); ++x)
            if (!mask.at(x, y)) {
                mean += C.at(x, y);
                ++unmasked;
            }
    if (unmasked == 0) throw InvalidInputError("inpaint: mask covers the entire image");
    mean /= static_cast<float>(unmasked);

    ColorImage out = C;
    // seed holes at the unmasked mean, then relax toward the harmonic fill
    for (int y = 0; y < C.height(); ++y)
        for (int x = 0; x < C.width(); ++x)
            if (mask.at(x, y)) out.at(x, y) = mean;
    for (int iter = 0; iter < 500; ++iter) {
        float max_change = 0;
        for (int y = 0; y < C.height(); ++y) {
            for (int x = 0; x < C.width(); ++x) {
                if (!mask.at(x, y)) continue;
                Eigen::Vector3f sum = Eigen::Vector3f::Zero();
                int n = 0;
                if (x > 0) { sum += out.at(x - 1, y); ++n; }
                if (x + 1 < C.width()) { sum += out.at(x + 1, y); ++n; }
                if (y > 0) { sum += out.at(x, y - 1); ++n; }
                if (y + 1 < C.height()) { sum += out.at(x, y + 1); ++n; }
                if (n == 0) continue;
                Eigen::Vector3f v = sum / n;
                max_change = std::max(max_change, (v - out.at(x, y)).cwiseAbs().maxCoeff());
                out.at(x, y) = v;
            }
        }
        if (max_change < 0.1f) break;
    }
    return out;
}

ColorImage correct_vignetting(const ColorImage& C, const VignettingModel& V) {
    double cx = V.cx >= 0 ? V.cx : (C.width() - 1) / 2.0;
    double cy = V.cy >= 0 ? V.cy : (C.height() - 1) / 2.0;
    double corner = 0;
    for (int sx = 0; sx < 2; ++sx)
        for (int sy = 0; sy < 2; ++sy)
            corner = std::max(corner, std::hypot(sx * (C.width() - 1) - cx, sy * (C.height() - 1) - cy));
    if (corner <= 0) corner = 1;
    for (double r = 0; r <= 1.0001; r += 0.01) {
        double r2 = r * r;
        if (1 + V.a2 * r2 + V.a4 * r2 * r2 + V.a6 * r2 * r2 * r2 <= 0)
            throw InvalidInputError("correct_vignetting: gain is not positive over the image");
    }

    ColorImage out(C.width(), C.height(), Eigen::Vector3f::Zero());
    for (int y = 0; y < C.height(); ++y) {
        for (int x = 0; x < C.width(); ++x) {
            double r2 = (std::pow(x - cx, 2) + std::pow(y - cy, 2)) / (corner * corner);
            double gain = 1 + V.a2 * r2 + V.a4 * r2 * r2 + V.a6 * r2 * r2 * r2;
            Eigen::Vector3f v = C.at(x, y) / static_cast<float>(gain);
            out.at(x, y) = v.cwiseMax(0.0f).cwiseMin(255.0f);
        }
    }
    return out;
}

GrayImage to_intensity01(const ColorImage& C) {
    GrayImage I(C.width(), C.height(), 0.0f);
    for (int y = 0; y < C.height(); ++y)
        for (int x = 0; x < C.width(); ++x) I.at(x, y) = intensity(C.at(x, y)) / 255.0f;
    return I;
}

} // namespace surfelslam
