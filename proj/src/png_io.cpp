#include "surfelslam/png_io.h"

#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

#include <png.h>

namespace surfelslam {

namespace {

constexpr double kDepthScale = 5000.0; // PNG units per meter

struct FileCloser {
    void operator()(FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

struct PngReader {
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngReader() {
        if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    }
};

struct PngWriter {
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngWriter() {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    }
};

void open_read(PngReader& r, FILE* f, const std::string& path) {
    r.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!r.png) throw IoError("png: allocation failed reading " + path);
    r.info = png_create_info_struct(r.png);
    if (!r.info) throw IoError("png: allocation failed reading " + path);
    if (setjmp(png_jmpbuf(r.png))) throw IoError("png: decode failed for " + path);
    png_init_io(r.png, f);
    png_read_info(r.png, r.info);
}

} // namespace

ColorImage read_png_color(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw IoError("cannot open " + path);
    PngReader r;
    open_read(r, f.get(), path);
    if (setjmp(png_jmpbuf(r.png))) throw IoError("png: decode failed for " + path);

    png_set_strip_16(r.png);
    png_set_strip_alpha(r.png);
    png_set_palette_to_rgb(r.png);
    png_set_expand_gray_1_2_4_to_8(r.png);
    png_set_gray_to_rgb(r.png);
    png_read_update_info(r.png, r.info);

    int w = png_get_image_width(r.png, r.info);
    int h = png_get_image_height(r.png, r.info);
    std::vector<uint8_t> row(static_cast<size_t>(w) * 3);
    ColorImage img(w, h, Eigen::Vector3f::Zero());
    for (int y = 0; y < h; ++y) {
        png_read_row(r.png, row.data(), nullptr);
        for (int x = 0; x < w; ++x)
            img.at(x, y) = Eigen::Vector3f(row[3 * x], row[3 * x + 1], row[3 * x + 2]);
    }
    return img;
}

DepthImage read_png_depth(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw IoError("cannot open " + path);
    PngReader r;
    open_read(r, f.get(), path);
    if (setjmp(png_jmpbuf(r.png))) throw IoError("png: decode failed for " + path);

    int depth_bits = png_get_bit_depth(r.png, r.info);
    int color = png_get_color_type(r.png, r.info);
    if (color != PNG_COLOR_TYPE_GRAY || depth_bits != 16)
        throw IoError("depth png must be 16-bit grayscale: " + path);
    png_read_update_info(r.png, r.info);

    int w = png_get_image_width(r.png, r.info);
    int h = png_get_image_height(r.png, r.info);
    std::vector<uint8_t> row(static_cast<size_t>(w) * 2);
    DepthImage img(w, h);
    for (int y = 0; y < h; ++y) {
        png_read_row(r.png, row.data(), nullptr);
        for (int x = 0; x < w; ++x) {
            uint16_t v = static_cast<uint16_t>((row[2 * x] << 8) | row[2 * x + 1]); // PNG is big-endian
            img.at(x, y) = v == 0 ? 0.0f : static_cast<float>(v / kDepthScale);
        }
    }
    return img;
}

void write_png_color(const std::string& path, const ColorImage& img) {
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw IoError("cannot open for write: " + path);
    PngWriter w;
    w.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!w.png) throw IoError("png: allocation failed writing " + path);
    w.info = png_create_info_struct(w.png);
    if (!w.info) throw IoError("png: allocation failed writing " + path);
    if (setjmp(png_jmpbuf(w.png))) throw IoError("png: encode failed for " + path);

    png_init_io(w.png, f.get());
    png_set_IHDR(w.png, w.info, img.width(), img.height(), 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(w.png, w.info);

    std::vector<uint8_t> row(static_cast<size_t>(img.width()) * 3);
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            const Eigen::Vector3f& c = img.at(x, y);
            for (int ch = 0; ch < 3; ++ch)
                row[3 * x + ch] = static_cast<uint8_t>(std::lround(std::clamp(c[ch], 0.0f, 255.0f)));
        }
        png_write_row(w.png, row.data());
    }
    png_write_end(w.png, nullptr);
}

void write_png_depth(const std::string& path, const DepthImage& img) {
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw IoError("cannot open for write: " + path);
    PngWriter w;
    w.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!w.png) throw IoError("png: allocation failed writing " + path);
    w.info = png_create_info_struct(w.png);
    if (!w.info) throw IoError("png: allocation failed writing " + path);
    if (setjmp(png_jmpbuf(w.png))) throw IoError("png: encode failed for " + path);

    png_init_io(w.png, f.get());
    png_set_IHDR(w.png, w.info, img.width(), img.height(), 16, PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(w.png, w.info);

    std::vector<uint8_t> row(static_cast<size_t>(img.width()) * 2);
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            float d = img.at(x, y);
            uint16_t v = 0;
            if (d > 0) {
                double scaled = std::lround(d * kDepthScale);
                v = static_cast<uint16_t>(std::clamp(scaled, 0.0, 65535.0));
            }
            row[2 * x] = static_cast<uint8_t>(v >> 8);
            row[2 * x + 1] = static_cast<uint8_t>(v & 0xFF);
        }
        png_write_row(w.png, row.data());
    }
    png_write_end(w.png, nullptr);
}

} // namespace surfelslam
