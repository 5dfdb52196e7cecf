#pragma once

#include <atomic>
#include <filesystem>
#include <random>
#include <string>

#include <unistd.h>

#include "s2rf/grid.hpp"
#include "s2rf/synthetic.hpp"

namespace s2rf::test {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("s2rf-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

private:
    std::filesystem::path path_;
};

/// Dense grid with uniform random densities in [d_lo, d_hi] and SH in [-sh_amp, sh_amp].
inline VoxelGrid random_grid(uint32_t n, int degree, uint64_t seed, double d_lo = 0.1, double d_hi = 3.0,
                             double sh_amp = 1.0) {
    VoxelGrid g = VoxelGrid::dense({n, n, n}, BoundingBox{}, degree, 0.0f);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> d(d_lo, d_hi), c(-sh_amp, sh_amp);
    for (float& v : g.density_data()) v = float(d(rng));
    for (float& v : g.sh_data()) v = float(c(rng));
    return g;
}

/// Small version of the two-sphere scene for fast end-to-end tests.
inline SyntheticSpec tiny_spec() {
    SyntheticSpec s;
    s.grid_resolution = 16;
    s.image_size = 32;
    s.n_train = 6;
    s.n_holdout = 1;
    return s;
}

}  // namespace s2rf::test
