#pragma once

#include <array>
#include <span>

#include "s2rf/common.hpp"

namespace s2rf {

constexpr int kMaxShDegree = 2;
constexpr int kMaxShCoeffs = 9;  // (kMaxShDegree + 1)^2
constexpr int kMaxShFloats = 3 * kMaxShCoeffs;

constexpr int sh_coeff_count(int degree) { return (degree + 1) * (degree + 1); }

/// Real SH constant band value, 1 / (2 sqrt(pi)).
constexpr double kShC0 = 0.28209479177387814;

/// Real spherical harmonic basis values Y_k(dir) for k < (degree+1)^2.
void sh_basis(int degree, const Vec3& dir, std::span<double> out);

/// Decodes a 3 x K coefficient block (channel-major) into sigmoid(sum c_k Y_k) per channel.
/// Throws ContractViolation when |dir| deviates from 1 by more than 1e-6.
Vec3 eval_sh(std::span<const double> coeffs, int degree, const Vec3& dir);

/// Adjoint of eval_sh for a fixed direction: writes d(loss)/d(coeff) given d(loss)/d(color).
void eval_sh_backward(std::span<const double> coeffs, int degree, const Vec3& dir, const Vec3& d_color,
                      std::span<double> d_coeffs);

}  // namespace s2rf
