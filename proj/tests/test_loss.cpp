#include <cmath>
#include <random>

#include "doctest.h"
#include "json.hpp"
#include "s2rf/loss.hpp"
#include "support.hpp"

using namespace s2rf;

namespace {

/// Triple loop over lattice voxels and channels with explicit +1 neighbors.
double tv_oracle(const VoxelGrid& g) {
    const Resolution r = g.resolution();
    const int d = 1 + g.sh_stride();
    auto value = [&](uint32_t x, uint32_t y, uint32_t z, int ch) -> double {
        const int32_t s = g.slot_of(g.lattice_index(x, y, z));
        if (s < 0) return 0.0;
        return ch == 0 ? g.density(s) : g.sh(s)[size_t(ch - 1)];
    };
    double sum = 0;
    for (uint32_t z = 0; z < r.nz; ++z)
        for (uint32_t y = 0; y < r.ny; ++y)
            for (uint32_t x = 0; x < r.nx; ++x)
                for (int ch = 0; ch < d; ++ch) {
                    const double v = value(x, y, z, ch);
                    double sq = 0;
                    if (x + 1 < r.nx) sq += std::pow(value(x + 1, y, z, ch) - v, 2);
                    if (y + 1 < r.ny) sq += std::pow(value(x, y + 1, z, ch) - v, 2);
                    if (z + 1 < r.nz) sq += std::pow(value(x, y, z + 1, ch) - v, 2);
                    sum += std::sqrt(sq + 1e-8);
                }
    return sum / double(r.count());
}

}  // namespace

TEST_SUITE("loss") {

TEST_CASE("mse examples and oracle") {
    const std::vector<Vec3> a(4, Vec3{0.2, 0.3, 0.4});
    CHECK(mse_loss(a, a).value == 0.0);
    auto b = a;
    b[2].x += 1.0;
    const MseResult r = mse_loss(b, a);
    CHECK(r.value == doctest::Approx(0.25));
    CHECK(r.d_rendered[2].x == doctest::Approx(0.5));
    CHECK(r.d_rendered[0].x == 0.0);
    CHECK_THROWS_AS(mse_loss(std::span<const Vec3>{}, std::span<const Vec3>{}), ContractViolation);

    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0, 1);
    std::vector<Vec3> x(50), y(50);
    for (size_t i = 0; i < 50; ++i) {
        x[i] = {u(rng), u(rng), u(rng)};
        y[i] = {u(rng), u(rng), u(rng)};
    }
    double s = 0;
    for (size_t i = 0; i < 50; ++i)
        for (int k = 0; k < 3; ++k) s += (x[i][k] - y[i][k]) * (x[i][k] - y[i][k]);
    CHECK(std::abs(mse_loss(x, y).value - s / 50) <= 1e-7);
}

TEST_CASE("tv examples") {
    VoxelGrid two = VoxelGrid::dense({2, 1, 1}, BoundingBox{}, 0, 0.0f);
    two.density(two.slot_of(1)) = 3.0f;
    // Three zero-difference SH channels per voxel each add sqrt(eps).
    CHECK(tv_loss(two) == doctest::Approx(1.5).epsilon(1e-3));
    CHECK(std::abs(tv_loss(two) - 1.5) <= 4 * 1e-4 + 1e-12);

    const VoxelGrid flat = VoxelGrid::dense({5, 5, 5}, BoundingBox{}, 2, 0.7f);
    CHECK(tv_loss(flat) <= 1e-4 * 28 + 1e-12);
}

TEST_CASE("tv matches the brute-force neighbor loop") {
    for (uint64_t seed : {1u, 2u, 3u}) {
        VoxelGrid g = test::random_grid(4, 1, seed);
        CHECK(std::abs(tv_loss(g) - tv_oracle(g)) <= 1e-6);
        VoxelGrid sparse(Resolution{4, 3, 5}, BoundingBox{}, 0);
        std::mt19937_64 rng(seed);
        for (int i = 0; i < 20; ++i) sparse.density(sparse.activate(rng() % 60)) = float(rng() % 100) / 10.0f;
        CHECK(std::abs(tv_loss(sparse) - tv_oracle(sparse)) <= 1e-6);
    }
}

TEST_CASE("parallel tv equals the serial reference including gradients") {
    const VoxelGrid g = test::random_grid(9, 2, 4);
    GridGradients a(g), b(g);
    const double va = tv_loss(g, &a, 0.5), vb = reference::tv_loss(g, &b, 0.5);
    CHECK(va == doctest::Approx(vb).epsilon(1e-12));
    for (size_t i = 0; i < a.d_density.size(); ++i) CHECK(a.d_density[i] == doctest::Approx(b.d_density[i]).epsilon(1e-9));
    for (size_t i = 0; i < a.d_sh.size(); i += 7) CHECK(a.d_sh[i] == doctest::Approx(b.d_sh[i]).epsilon(1e-9));
}

TEST_CASE("tv gradient matches finite differences") {
    VoxelGrid g = test::random_grid(4, 1, 8);
    GridGradients acc(g);
    tv_loss(g, &acc);
    auto check = [&](float& p, double analytic) {
        const float orig = p;
        p = orig + 1e-3f;
        const float hi = p;
        const double fp = tv_loss(g);
        p = orig - 1e-3f;
        const float lo = p;
        const double fm = tv_loss(g);
        p = orig;
        const double fd = (fp - fm) / (double(hi) - double(lo));
        CHECK(std::abs(analytic - fd) <= 1e-3 * std::max(std::abs(fd), 1e-6));
    };
    for (size_t i = 0; i < g.n_active(); ++i) check(g.density_data()[i], acc.d_density[i]);
    for (size_t i = 0; i < g.sh_data().size(); i += 5) check(g.sh_data()[i], acc.d_sh[i]);
}

TEST_CASE("sparsity examples, symmetry and monotonicity") {
    CHECK(sparsity_term(0.0) == 0.0);
    CHECK(sparsity_term(1.0) == doctest::Approx(std::log(3.0)));
    CHECK(sparsity_term(-1.0) == 0.0);
    CHECK(sparsity_term_grad(-1.0) == 0.0);
    double prev = -1;
    for (int i = 0; i <= 100; ++i) {
        const double s = 0.1 * i;
        CHECK(sparsity_penalty(s) == sparsity_penalty(-s));
        CHECK(sparsity_penalty(s) > prev);
        prev = sparsity_penalty(s);
        if (s > 0) {
            const double h = 1e-6;
            CHECK(sparsity_term_grad(s) ==
                  doctest::Approx((sparsity_term(s + h) - sparsity_term(s - h)) / (2 * h)).epsilon(1e-6));
        }
    }
    RaySampleBatch batch(2);
    batch[0].resize(2);
    batch[1].resize(1);
    batch[0][0].field.sigma = 1.0;
    batch[0][1].field.sigma = -3.0;
    batch[1][0].field.sigma = 2.0;
    const SparsityResult r = sparsity_loss(batch);
    CHECK(r.value == doctest::Approx(std::log(3.0) + std::log(9.0)));
    CHECK(r.d_sigma[0][1] == 0.0);
    CHECK(r.d_sigma[1][0] == doctest::Approx(8.0 / 9.0));
}

TEST_CASE("beta examples and clamp") {
    CHECK(beta_term(0.5) == doctest::Approx(-1.3862943611));
    CHECK(beta_term(1.0) == doctest::Approx(-11.5129354649).epsilon(1e-9));
    CHECK(std::isfinite(beta_term(0.0)));
    CHECK(beta_term(0.0) == doctest::Approx(beta_term(1.0)).epsilon(1e-12));
    CHECK(beta_term_grad(0.0) == 0.0);
    CHECK(beta_term_grad(1.0) == 0.0);
    CHECK(beta_term_grad(0.5) == doctest::Approx(0.0));
    const double h = 1e-7;
    CHECK(beta_term_grad(0.2) == doctest::Approx((beta_term(0.2 + h) - beta_term(0.2 - h)) / (2 * h)).epsilon(1e-6));

    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0, 1);
    std::vector<double> t(40);
    for (double& v : t) v = u(rng);
    t[0] = 0.0;
    t[1] = 1.0;
    double s = 0;
    for (double v : t) {
        const double c = std::clamp(v, 1e-5, 1 - 1e-5);
        s += std::log(c) + std::log(1 - c);
    }
    const BetaResult r = beta_loss(t);
    CHECK(std::abs(r.value - s) <= 1e-7);
    CHECK(r.value <= 2 * std::log(1 - 1e-5) * double(t.size()));
}

TEST_CASE("rf_loss is the weighted sum") {
    LossWeights zero{0, 0, 0, 1};
    CHECK(rf_loss(0.3, 5, 6, 7, zero).total == doctest::Approx(0.3));
    LossWeights w{0.1, 0.01, 0.001, 1};
    CHECK(rf_loss(1, 2, 4, 3, w).total == doctest::Approx(1.234));
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-5, 5), l(0, 1);
    for (int i = 0; i < 50; ++i) {
        const LossWeights r{l(rng), l(rng), l(rng), 1};
        const double m = std::abs(u(rng)), tv = std::abs(u(rng)), sp = std::abs(u(rng)), be = u(rng);
        const LossReport rep = rf_loss(m, tv, sp, be, r);
        CHECK(std::abs(rep.total - (m + r.lambda_tv * tv + r.lambda_beta * be + r.lambda_s * sp)) <= 1e-9);
    }
    CHECK_THROWS_AS((LossWeights{-1, 0, 0, 1}.validate()), ContractViolation);
}

TEST_CASE("log lines carry every term") {
    LossReport r;
    r.total = 1;
    r.mse = 0.5;
    const auto j = nlohmann::json::parse(loss_log_line(7, r, 31.5));
    for (const char* k : {"iter", "total", "mse", "tv", "sparsity", "beta", "style", "psnr"}) CHECK(j.contains(k));
    CHECK(j["iter"] == 7);
    CHECK(j["psnr"] == 31.5);
}

}
