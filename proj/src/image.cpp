#include "s2rf/image.hpp"

#include <png.h>

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace s2rf {

namespace {

std::vector<uint8_t> read_png(const std::filesystem::path& path, uint32_t format, int& w, int& h) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str()))
        throw std::runtime_error("cannot read PNG " + path.string() + ": " + image.message);
    image.format = format;
    std::vector<uint8_t> buf(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
        png_image_free(&image);
        throw std::runtime_error("cannot decode PNG " + path.string() + ": " + image.message);
    }
    w = static_cast<int>(image.width);
    h = static_cast<int>(image.height);
    return buf;
}

void write_png(const std::filesystem::path& path, uint32_t format, int w, int h, const std::vector<uint8_t>& buf) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(w);
    image.height = static_cast<png_uint_32>(h);
    image.format = format;
    if (!png_image_write_to_file(&image, path.c_str(), 0, buf.data(), 0, nullptr))
        throw std::runtime_error("cannot write PNG " + path.string() + ": " + image.message);
}

uint8_t to_byte(float v) { return static_cast<uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)); }

}  // namespace

size_t BinaryMask::count() const { return static_cast<size_t>(std::count(bits.begin(), bits.end(), uint8_t{1})); }

Image read_png_rgb(const std::filesystem::path& path) {
    int w = 0, h = 0;
    const auto buf = read_png(path, PNG_FORMAT_RGB, w, h);
    Image img(w, h);
    for (size_t i = 0; i < buf.size(); ++i) img.rgb[i] = buf[i] / 255.0f;
    return img;
}

void write_png_rgb(const std::filesystem::path& path, const Image& img) {
    std::vector<uint8_t> buf(img.rgb.size());
    std::ranges::transform(img.rgb, buf.begin(), to_byte);
    write_png(path, PNG_FORMAT_RGB, img.width, img.height, buf);
}

BinaryMask read_png_mask(const std::filesystem::path& path, int threshold) {
    int w = 0, h = 0;
    const auto buf = read_png(path, PNG_FORMAT_GRAY, w, h);
    BinaryMask m(w, h);
    for (size_t i = 0; i < buf.size(); ++i) m.bits[i] = buf[i] >= threshold ? 1 : 0;
    return m;
}

void write_png_mask(const std::filesystem::path& path, const BinaryMask& mask) {
    std::vector<uint8_t> buf(mask.bits.size());
    std::ranges::transform(mask.bits, buf.begin(), [](uint8_t b) { return uint8_t(b ? 255 : 0); });
    write_png(path, PNG_FORMAT_GRAY, mask.width, mask.height, buf);
}

Image quantize_8bit(const Image& img) {
    Image out = img;
    for (float& v : out.rgb) v = to_byte(v) / 255.0f;
    return out;
}

Image limit_longest_side(const Image& img, int max_side) {
    const int longest = std::max(img.width, img.height);
    if (longest <= max_side) return img;
    const double scale = double(max_side) / longest;
    const int w = std::max(1, int(std::lround(img.width * scale)));
    const int h = std::max(1, int(std::lround(img.height * scale)));
    Image out(w, h);
    for (int r = 0; r < h; ++r) {
        const int r0 = int(int64_t(r) * img.height / h), r1 = std::max(r0 + 1, int(int64_t(r + 1) * img.height / h));
        for (int c = 0; c < w; ++c) {
            const int c0 = int(int64_t(c) * img.width / w), c1 = std::max(c0 + 1, int(int64_t(c + 1) * img.width / w));
            double acc[3] = {0, 0, 0};
            for (int y = r0; y < r1; ++y)
                for (int x = c0; x < c1; ++x)
                    for (int k = 0; k < 3; ++k) acc[k] += img.at(y, x)[k];
            const double n = double(r1 - r0) * (c1 - c0);
            for (int k = 0; k < 3; ++k) out.at(r, c)[k] = float(acc[k] / n);
        }
    }
    return out;
}

double psnr(const Image& a, const Image& b) {
    require(a.width == b.width && a.height == b.height, "psnr requires equal image sizes");
    double se = 0;
    for (size_t i = 0; i < a.rgb.size(); ++i) {
        const double d = double(a.rgb[i]) - b.rgb[i];
        se += d * d;
    }
    const double mse = se / double(a.rgb.size());
    if (mse <= 0) return 99.0;
    return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

double mean_abs_difference(const Image& a, const Image& b) {
    require(a.width == b.width && a.height == b.height, "image sizes differ");
    double s = 0;
    for (size_t i = 0; i < a.rgb.size(); ++i) s += std::abs(double(a.rgb[i]) - b.rgb[i]);
    return s / double(a.rgb.size());
}

}  // namespace s2rf
