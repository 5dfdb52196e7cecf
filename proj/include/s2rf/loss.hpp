#pragma once

#include <span>
#include <string>
#include <vector>

#include "s2rf/grid.hpp"
#include "s2rf/render.hpp"

namespace s2rf {

struct LossWeights {
    double lambda_tv = 1e-3;
    double lambda_beta = 1e-6;
    double lambda_s = 1e-7;
    double style_weight = 1.0;

    void validate() const;
};

/// Scalar loss terms of one step. `total` is the weighted objective actually optimized.
struct LossReport {
    double total = 0;
    double mse = 0;
    double tv = 0;
    double sparsity = 0;
    double beta = 0;
    double style = 0;
};

struct MseResult {
    double value = 0;
    std::vector<Vec3> d_rendered;
};

/// (1/|R|) sum ||C - C_hat||^2 over rays, channels summed.
MseResult mse_loss(std::span<const Vec3> rendered, std::span<const Vec3> target);

constexpr double kTvEpsilon = 1e-8;

/// (1/|V|) sum_v sum_d sqrt(sum_axes (x[v+e_a,d] - x[v,d])^2 + eps) over the whole lattice,
/// with d ranging over density and every SH coefficient. Missing neighbors contribute 0.
/// If `grad` is given, scale * d(tv)/d(param) is added to it. Slices run in parallel.
double tv_loss(const VoxelGrid& grid, GridGradients* grad = nullptr, double scale = 1.0);

namespace reference {
/// Single-threaded scatter-form TV, the oracle for tv_loss.
double tv_loss(const VoxelGrid& grid, GridGradients* grad = nullptr, double scale = 1.0);
}  // namespace reference

/// log(1 + 2 s^2), even in s.
double sparsity_penalty(double sigma);
/// Per-sample term: the penalty of the clamped sigma, and its derivative w.r.t. raw sigma.
double sparsity_term(double raw_sigma);
double sparsity_term_grad(double raw_sigma);

struct SparsityResult {
    double value = 0;
    std::vector<std::vector<double>> d_sigma;  // [ray][sample], w.r.t. raw sigma
};

SparsityResult sparsity_loss(const RaySampleBatch& batches);

constexpr double kBetaEpsilon = 1e-5;

struct BetaResult {
    double value = 0;
    std::vector<double> d_t_fg;
};

/// sum_r log T' + log(1 - T'), T' = clamp(T, eps, 1 - eps); zero gradient where clamped.
BetaResult beta_loss(std::span<const double> t_fg);
double beta_term(double t_fg);
double beta_term_grad(double t_fg);

/// total = mse + l_tv tv + l_beta beta + l_s sparsity.
LossReport rf_loss(double mse, double tv, double sparsity, double beta, const LossWeights& weights);

/// One JSON object per line: {iter, total, mse, tv, sparsity, beta, style, psnr}.
std::string loss_log_line(long iter, const LossReport& report, double psnr);

}  // namespace s2rf
