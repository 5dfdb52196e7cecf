#include "s2rf/sh.hpp"

namespace s2rf {
namespace {

constexpr double kShC1 = 0.4886025119029199;
constexpr std::array<double, 5> kShC2 = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
                                         -1.0925484305920792, 0.5462742152960396};

void check_inputs(std::span<const double> coeffs, int degree, const Vec3& dir) {
    require(degree >= 0 && degree <= kMaxShDegree, "sh degree must be in [0, 2]");
    require(coeffs.size() == static_cast<size_t>(3 * sh_coeff_count(degree)), "sh coefficient block has wrong size");
    require(std::abs(norm(dir) - 1.0) <= 1e-6, "sh direction must be unit length");
}

}  // namespace

void sh_basis(int degree, const Vec3& dir, std::span<double> out) {
    const double x = dir.x, y = dir.y, z = dir.z;
    out[0] = kShC0;
    if (degree < 1) return;
    out[1] = -kShC1 * y;
    out[2] = kShC1 * z;
    out[3] = -kShC1 * x;
    if (degree < 2) return;
    out[4] = kShC2[0] * x * y;
    out[5] = kShC2[1] * y * z;
    out[6] = kShC2[2] * (2.0 * z * z - x * x - y * y);
    out[7] = kShC2[3] * x * z;
    out[8] = kShC2[4] * (x * x - y * y);
}

Vec3 eval_sh(std::span<const double> coeffs, int degree, const Vec3& dir) {
    check_inputs(coeffs, degree, dir);
    const int k = sh_coeff_count(degree);
    std::array<double, kMaxShCoeffs> basis{};
    sh_basis(degree, dir, basis);
    Vec3 rgb;
    for (int c = 0; c < 3; ++c) {
        double raw = 0;
        for (int j = 0; j < k; ++j) raw += coeffs[c * k + j] * basis[j];
        rgb[c] = sigmoid(raw);
    }
    return rgb;
}

void eval_sh_backward(std::span<const double> coeffs, int degree, const Vec3& dir, const Vec3& d_color,
                      std::span<double> d_coeffs) {
    check_inputs(coeffs, degree, dir);
    const int k = sh_coeff_count(degree);
    require(d_coeffs.size() == coeffs.size(), "sh gradient block has wrong size");
    std::array<double, kMaxShCoeffs> basis{};
    sh_basis(degree, dir, basis);
    for (int c = 0; c < 3; ++c) {
        double raw = 0;
        for (int j = 0; j < k; ++j) raw += coeffs[c * k + j] * basis[j];
        const double s = sigmoid(raw);
        const double d_raw = d_color[c] * s * (1.0 - s);
        for (int j = 0; j < k; ++j) d_coeffs[c * k + j] = d_raw * basis[j];
    }
}

}  // namespace s2rf
