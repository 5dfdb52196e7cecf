#include "s2rf/loss.hpp"

#include "json.hpp"

#include <algorithm>

namespace s2rf {

void LossWeights::validate() const {
    require(lambda_tv >= 0 && lambda_beta >= 0 && lambda_s >= 0 && style_weight >= 0, "loss weights must be non-negative");
}

MseResult mse_loss(std::span<const Vec3> rendered, std::span<const Vec3> target) {
    require(!rendered.empty(), "mse_loss needs at least one ray");
    require(rendered.size() == target.size(), "mse_loss inputs differ in length");
    MseResult out;
    out.d_rendered.resize(rendered.size());
    const double inv_n = 1.0 / double(rendered.size());
    for (size_t i = 0; i < rendered.size(); ++i) {
        const Vec3 diff = rendered[i] - target[i];
        out.value += dot(diff, diff);
        out.d_rendered[i] = diff * (2.0 * inv_n);
    }
    out.value *= inv_n;
    return out;
}

namespace {

/// Dense view over a grid's parameters with zeros for unoccupied voxels.
struct TvView {
    const VoxelGrid& grid;
    int channels;  // 1 + sh stride
    uint32_t nx, ny, nz;

    explicit TvView(const VoxelGrid& g)
        : grid(g), channels(1 + g.sh_stride()), nx(g.resolution().nx), ny(g.resolution().ny), nz(g.resolution().nz) {}

    double value(int32_t slot, int d) const {
        if (slot == VoxelGrid::kEmptySlot) return 0.0;
        return d == 0 ? grid.density(slot) : grid.sh(slot)[d - 1];
    }
    int32_t slot(uint32_t x, uint32_t y, uint32_t z) const { return grid.slot_of(grid.lattice_index(x, y, z)); }
};

void add_grad(GridGradients& g, int32_t slot, int d, int stride, double v) {
    if (d == 0)
        g.d_density[slot] += v;
    else
        g.d_sh[size_t(slot) * stride + d - 1] += v;
}

}  // namespace

double tv_loss(const VoxelGrid& grid, GridGradients* grad, double scale) {
    if (grad) require(grad->matches(grid), "gradient accumulator does not match the grid");
    const TvView view(grid);
    const int D = view.channels;
    const int stride = grid.sh_stride();
    const size_t n_vox = grid.resolution().count();
    std::vector<double> slice_sum(view.nz, 0.0);
    std::vector<float> inv_r;
    if (grad) inv_r.resize(n_vox * size_t(D));

#pragma omp parallel for schedule(static)
    for (int64_t z = 0; z < int64_t(view.nz); ++z) {
        double acc = 0;
        for (uint32_t y = 0; y < view.ny; ++y)
            for (uint32_t x = 0; x < view.nx; ++x) {
                const int32_t s = view.slot(x, y, uint32_t(z));
                const int32_t sx = x + 1 < view.nx ? view.slot(x + 1, y, uint32_t(z)) : VoxelGrid::kEmptySlot;
                const int32_t sy = y + 1 < view.ny ? view.slot(x, y + 1, uint32_t(z)) : VoxelGrid::kEmptySlot;
                const int32_t sz = z + 1 < view.nz ? view.slot(x, y, uint32_t(z + 1)) : VoxelGrid::kEmptySlot;
                const bool hx = x + 1 < view.nx, hy = y + 1 < view.ny, hz = z + 1 < view.nz;
                const size_t lat = grid.lattice_index(x, y, uint32_t(z));
                for (int d = 0; d < D; ++d) {
                    const double v = view.value(s, d);
                    const double dx = hx ? view.value(sx, d) - v : 0.0;
                    const double dy = hy ? view.value(sy, d) - v : 0.0;
                    const double dz = hz ? view.value(sz, d) - v : 0.0;
                    const double r = std::sqrt(dx * dx + dy * dy + dz * dz + kTvEpsilon);
                    acc += r;
                    if (grad) inv_r[lat * D + d] = float(1.0 / r);
                }
            }
        slice_sum[z] = acc;
    }

    double total = 0;
    for (double s : slice_sum) total += s;
    const double inv_v = 1.0 / double(n_vox);
    if (!grad) return total * inv_v;

    const double k = scale * inv_v;
#pragma omp parallel for schedule(static)
    for (int64_t z = 0; z < int64_t(view.nz); ++z) {
        for (uint32_t y = 0; y < view.ny; ++y)
            for (uint32_t x = 0; x < view.nx; ++x) {
                const int32_t s = view.slot(x, y, uint32_t(z));
                if (s == VoxelGrid::kEmptySlot) continue;
                const size_t lat = grid.lattice_index(x, y, uint32_t(z));
                // Own term pulls against all forward differences; each -1 neighbor's term pushes.
                const int32_t sx = x + 1 < view.nx ? view.slot(x + 1, y, uint32_t(z)) : VoxelGrid::kEmptySlot;
                const int32_t sy = y + 1 < view.ny ? view.slot(x, y + 1, uint32_t(z)) : VoxelGrid::kEmptySlot;
                const int32_t sz = z + 1 < view.nz ? view.slot(x, y, uint32_t(z + 1)) : VoxelGrid::kEmptySlot;
                const bool hx = x + 1 < view.nx, hy = y + 1 < view.ny, hz = z + 1 < view.nz;
                const int32_t px = x > 0 ? view.slot(x - 1, y, uint32_t(z)) : VoxelGrid::kEmptySlot;
                const int32_t py = y > 0 ? view.slot(x, y - 1, uint32_t(z)) : VoxelGrid::kEmptySlot;
                const int32_t pz = z > 0 ? view.slot(x, y, uint32_t(z - 1)) : VoxelGrid::kEmptySlot;
                const size_t lpx = x > 0 ? grid.lattice_index(x - 1, y, uint32_t(z)) : 0;
                const size_t lpy = y > 0 ? grid.lattice_index(x, y - 1, uint32_t(z)) : 0;
                const size_t lpz = z > 0 ? grid.lattice_index(x, y, uint32_t(z - 1)) : 0;
                for (int d = 0; d < D; ++d) {
                    const double v = view.value(s, d);
                    double g = 0;
                    double own = 0;
                    if (hx) own += view.value(sx, d) - v;
                    if (hy) own += view.value(sy, d) - v;
                    if (hz) own += view.value(sz, d) - v;
                    g -= own * inv_r[lat * D + d];
                    if (x > 0) g += (v - view.value(px, d)) * inv_r[lpx * D + d];
                    if (y > 0) g += (v - view.value(py, d)) * inv_r[lpy * D + d];
                    if (z > 0) g += (v - view.value(pz, d)) * inv_r[lpz * D + d];
                    add_grad(*grad, s, d, stride, k * g);
                }
            }
    }
    return total * inv_v;
}

namespace reference {

double tv_loss(const VoxelGrid& grid, GridGradients* grad, double scale) {
    const TvView view(grid);
    const int D = view.channels;
    const int stride = grid.sh_stride();
    const double inv_v = 1.0 / double(grid.resolution().count());
    double total = 0;
    for (uint32_t z = 0; z < view.nz; ++z)
        for (uint32_t y = 0; y < view.ny; ++y)
            for (uint32_t x = 0; x < view.nx; ++x) {
                const int32_t s = view.slot(x, y, z);
                const std::array<bool, 3> has{x + 1 < view.nx, y + 1 < view.ny, z + 1 < view.nz};
                const std::array<int32_t, 3> nb{has[0] ? view.slot(x + 1, y, z) : VoxelGrid::kEmptySlot,
                                                has[1] ? view.slot(x, y + 1, z) : VoxelGrid::kEmptySlot,
                                                has[2] ? view.slot(x, y, z + 1) : VoxelGrid::kEmptySlot};
                for (int d = 0; d < D; ++d) {
                    const double v = view.value(s, d);
                    std::array<double, 3> delta{};
                    double sq = kTvEpsilon;
                    for (int a = 0; a < 3; ++a) {
                        delta[a] = has[a] ? view.value(nb[a], d) - v : 0.0;
                        sq += delta[a] * delta[a];
                    }
                    const double r = std::sqrt(sq);
                    total += r;
                    if (!grad) continue;
                    for (int a = 0; a < 3; ++a) {
                        if (!has[a]) continue;
                        const double g = scale * inv_v * delta[a] / r;
                        if (nb[a] != VoxelGrid::kEmptySlot) add_grad(*grad, nb[a], d, stride, g);
                        if (s != VoxelGrid::kEmptySlot) add_grad(*grad, s, d, stride, -g);
                    }
                }
            }
    return total * inv_v;
}

}  // namespace reference

double sparsity_penalty(double sigma) { return std::log1p(2.0 * sigma * sigma); }

double sparsity_term(double raw_sigma) { return sparsity_penalty(std::max(raw_sigma, 0.0)); }

double sparsity_term_grad(double raw_sigma) {
    if (raw_sigma <= 0.0) return 0.0;
    return 4.0 * raw_sigma / (1.0 + 2.0 * raw_sigma * raw_sigma);
}

SparsityResult sparsity_loss(const RaySampleBatch& batches) {
    SparsityResult out;
    out.d_sigma.resize(batches.size());
    for (size_t r = 0; r < batches.size(); ++r) {
        out.d_sigma[r].resize(batches[r].size());
        for (size_t k = 0; k < batches[r].size(); ++k) {
            const double sigma = batches[r][k].field.sigma;
            out.value += sparsity_term(sigma);
            out.d_sigma[r][k] = sparsity_term_grad(sigma);
        }
    }
    return out;
}

double beta_term(double t_fg) {
    const double t = std::clamp(t_fg, kBetaEpsilon, 1.0 - kBetaEpsilon);
    return std::log(t) + std::log1p(-t);
}

double beta_term_grad(double t_fg) {
    if (t_fg <= kBetaEpsilon || t_fg >= 1.0 - kBetaEpsilon) return 0.0;
    return 1.0 / t_fg - 1.0 / (1.0 - t_fg);
}

BetaResult beta_loss(std::span<const double> t_fg) {
    BetaResult out;
    out.d_t_fg.resize(t_fg.size());
    for (size_t i = 0; i < t_fg.size(); ++i) {
        require(t_fg[i] >= 0.0 && t_fg[i] <= 1.0, "transmittance must lie in [0, 1]");
        out.value += beta_term(t_fg[i]);
        out.d_t_fg[i] = beta_term_grad(t_fg[i]);
    }
    return out;
}

LossReport rf_loss(double mse, double tv, double sparsity, double beta, const LossWeights& weights) {
    LossReport r;
    r.mse = mse;
    r.tv = tv;
    r.sparsity = sparsity;
    r.beta = beta;
    r.total = mse + weights.lambda_tv * tv + weights.lambda_beta * beta + weights.lambda_s * sparsity;
    return r;
}

std::string loss_log_line(long iter, const LossReport& report, double psnr) {
    nlohmann::ordered_json j;
    j["iter"] = iter;
    j["total"] = report.total;
    j["mse"] = report.mse;
    j["tv"] = report.tv;
    j["sparsity"] = report.sparsity;
    j["beta"] = report.beta;
    j["style"] = report.style;
    j["psnr"] = psnr;
    return j.dump();
}

}  // namespace s2rf
