#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "s2rf/sh.hpp"

using namespace s2rf;

namespace {

Vec3 random_dir(std::mt19937_64& rng) {
    std::normal_distribution<double> n(0, 1);
    return normalize(Vec3{n(rng), n(rng), n(rng)});
}

}  // namespace

TEST_SUITE("sh") {

TEST_CASE("degree 0 decodes sigmoid of the constant band") {
    const std::vector<double> c{0.7, -1.2, 0.0};
    const Vec3 col = eval_sh(c, 0, {0, 0, 1});
    CHECK(col.x == doctest::Approx(1.0 / (1.0 + std::exp(-0.7 * kShC0))).epsilon(1e-12));
    CHECK(col.y == doctest::Approx(1.0 / (1.0 + std::exp(1.2 * kShC0))).epsilon(1e-12));
    CHECK(col.z == doctest::Approx(0.5));
}

TEST_CASE("basis is orthonormal on the sphere") {
    // Fibonacci-sphere quadrature.
    constexpr int n = 40000;
    std::array<std::array<double, 9>, 9> gram{};
    std::array<double, 9> y{};
    for (int i = 0; i < n; ++i) {
        const double z = 1.0 - (2.0 * i + 1.0) / n;
        const double r = std::sqrt(1.0 - z * z);
        const double phi = i * std::numbers::pi * (3.0 - std::sqrt(5.0));
        sh_basis(2, {r * std::cos(phi), r * std::sin(phi), z}, y);
        for (int a = 0; a < 9; ++a)
            for (int b = 0; b < 9; ++b) gram[a][b] += y[a] * y[b] * 4.0 * std::numbers::pi / n;
    }
    for (int a = 0; a < 9; ++a)
        for (int b = 0; b < 9; ++b) CHECK(gram[a][b] == doctest::Approx(a == b ? 1.0 : 0.0).epsilon(1e-3).scale(1));
}

TEST_CASE("colors stay inside the open unit cube") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-20, 20);
    for (int t = 0; t < 500; ++t) {
        std::array<double, 27> c;
        for (double& v : c) v = u(rng);
        const Vec3 col = eval_sh(c, 2, random_dir(rng));
        for (int k = 0; k < 3; ++k) {
            CHECK(col[k] >= 0.0);
            CHECK(col[k] <= 1.0);
        }
    }
    const std::array<double, 27> moderate{};
    const Vec3 mid = eval_sh(moderate, 2, {1, 0, 0});
    CHECK(mid.x > 0.0);
    CHECK(mid.x < 1.0);
}

TEST_CASE("backward matches central differences") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-1.5, 1.5);
    for (int degree = 0; degree <= 2; ++degree) {
        const int k = 3 * sh_coeff_count(degree);
        std::vector<double> c(static_cast<size_t>(k));
        for (double& v : c) v = u(rng);
        const Vec3 dir = random_dir(rng);
        const Vec3 up{u(rng), u(rng), u(rng)};
        std::vector<double> g(static_cast<size_t>(k));
        eval_sh_backward(c, degree, dir, up, g);
        for (int i = 0; i < k; ++i) {
            const double h = 1e-6;
            auto plus = c, minus = c;
            plus[size_t(i)] += h;
            minus[size_t(i)] -= h;
            const double fd = (dot(eval_sh(plus, degree, dir), up) - dot(eval_sh(minus, degree, dir), up)) / (2 * h);
            CHECK(g[size_t(i)] == doctest::Approx(fd).epsilon(1e-6).scale(1e-6));
        }
    }
}

TEST_CASE("non-unit directions are rejected") {
    const std::vector<double> c(27, 0.0);
    CHECK_THROWS_AS(eval_sh(c, 2, {0, 0, 1.01}), ContractViolation);
    CHECK_NOTHROW(eval_sh(c, 2, {0, 0, 1.0 + 5e-7}));
}

}
