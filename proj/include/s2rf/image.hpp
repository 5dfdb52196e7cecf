#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "s2rf/common.hpp"

namespace s2rf {

/// Row-major RGB image, top-left origin, linear floats in [0,1].
struct Image {
    int width = 0;
    int height = 0;
    std::vector<float> rgb;  // height * width * 3

    Image() = default;
    Image(int w, int h, float fill = 0.0f) : width(w), height(h), rgb(size_t(w) * h * 3, fill) {}

    size_t pixel_count() const { return size_t(width) * height; }
    float* at(int row, int col) { return rgb.data() + (size_t(row) * width + col) * 3; }
    const float* at(int row, int col) const { return rgb.data() + (size_t(row) * width + col) * 3; }
    Vec3 pixel(int row, int col) const {
        const float* p = at(row, col);
        return {p[0], p[1], p[2]};
    }
};

/// Binary bitmap (0/1 per pixel), row-major.
struct BinaryMask {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> bits;

    BinaryMask() = default;
    BinaryMask(int w, int h, uint8_t fill = 0) : width(w), height(h), bits(size_t(w) * h, fill) {}

    uint8_t at(int row, int col) const { return bits[size_t(row) * width + col]; }
    uint8_t& at(int row, int col) { return bits[size_t(row) * width + col]; }
    size_t count() const;
    bool empty() const { return count() == 0; }
    friend bool operator==(const BinaryMask&, const BinaryMask&) = default;
};

/// Reads an 8-bit PNG as RGB floats v/255.
Image read_png_rgb(const std::filesystem::path& path);
/// Writes an 8-bit RGB PNG, rounding clamp(v,0,1)*255.
void write_png_rgb(const std::filesystem::path& path, const Image& img);
/// Reads any PNG as 8-bit grayscale and binarizes with pixel >= threshold.
BinaryMask read_png_mask(const std::filesystem::path& path, int threshold = 128);
/// Writes 255 for set pixels, 0 elsewhere.
void write_png_mask(const std::filesystem::path& path, const BinaryMask& mask);

/// Quantizes to the 8-bit grid used at I/O boundaries.
Image quantize_8bit(const Image& img);

/// Box-filter downscale so the longest side is at most `max_side`; smaller images are returned as-is.
Image limit_longest_side(const Image& img, int max_side);

/// 10 log10(1 / MSE) over all channels, capped at 99 dB for identical images.
double psnr(const Image& a, const Image& b);
double mean_abs_difference(const Image& a, const Image& b);

}  // namespace s2rf
