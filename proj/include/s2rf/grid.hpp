#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "s2rf/common.hpp"
#include "s2rf/sh.hpp"

namespace s2rf {

struct Resolution {
    uint32_t nx = 1, ny = 1, nz = 1;

    size_t count() const { return size_t(nx) * ny * nz; }
    friend bool operator==(const Resolution&, const Resolution&) = default;
};

struct BoundingBox {
    Vec3 min{-1, -1, -1};
    Vec3 max{1, 1, 1};

    Vec3 extent() const { return max - min; }
    bool contains(const Vec3& p) const {
        return p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y && p.z >= min.z && p.z <= max.z;
    }
    friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

/// One of the eight trilinear corners of a sample. Corners that fall on an
/// unoccupied or out-of-lattice voxel carry slot == VoxelGrid::kEmptySlot.
struct CornerWeight {
    int32_t slot = -1;
    double weight = 0;
};

/// Interpolated field value at a point, with the corner weights that produced it.
/// `sigma` is the raw (unclamped) interpolated density.
struct FieldSample {
    double sigma = 0;
    std::array<double, kMaxShFloats> sh{};
    std::array<CornerWeight, 8> corners{};
    int n_corners = 0;  // 0 when the point lies outside the bbox, else 8
};

/// Sparse voxel radiance field: per occupied voxel one density and a 3 x K block
/// of SH coefficients (channel-major, coefficient-minor). Voxel centers sit at
/// bbox.min + (i + 0.5) * cell_size.
class VoxelGrid {
public:
    static constexpr int32_t kEmptySlot = -1;

    VoxelGrid() = default;
    /// Grid with no occupied voxels.
    VoxelGrid(Resolution res, BoundingBox bbox, int sh_degree);
    /// Every lattice voxel occupied, density = init_density, SH = 0.
    static VoxelGrid dense(Resolution res, BoundingBox bbox, int sh_degree, float init_density);

    const Resolution& resolution() const { return res_; }
    const BoundingBox& bbox() const { return bbox_; }
    int sh_degree() const { return sh_degree_; }
    int coeffs_per_channel() const { return sh_coeff_count(sh_degree_); }
    int sh_stride() const { return 3 * coeffs_per_channel(); }
    Vec3 cell_size() const;

    size_t lattice_index(uint32_t ix, uint32_t iy, uint32_t iz) const { return (size_t(iz) * res_.ny + iy) * res_.nx + ix; }
    Vec3 voxel_center(uint32_t ix, uint32_t iy, uint32_t iz) const;

    size_t n_active() const { return slot_to_lattice_.size(); }
    int32_t slot_of(size_t lattice) const { return lattice_to_slot_[lattice]; }
    /// Occupies a lattice voxel (zero parameters) and returns its slot; no-op if already occupied.
    int32_t activate(size_t lattice);

    float& density(int32_t slot) { return density_[slot]; }
    float density(int32_t slot) const { return density_[slot]; }
    std::span<float> sh(int32_t slot) { return {sh_.data() + size_t(slot) * sh_stride(), size_t(sh_stride())}; }
    std::span<const float> sh(int32_t slot) const {
        return {sh_.data() + size_t(slot) * sh_stride(), size_t(sh_stride())};
    }

    std::vector<float>& density_data() { return density_; }
    const std::vector<float>& density_data() const { return density_; }
    std::vector<float>& sh_data() { return sh_; }
    const std::vector<float>& sh_data() const { return sh_; }
    const std::vector<uint32_t>& slot_lattice() const { return slot_to_lattice_; }

    /// Removes voxels whose clamped interpolated density stays below `threshold`
    /// at every piecewise-linear vertex of their cell. Returns the number removed.
    size_t prune(float threshold = 1e-4f);

    friend bool operator==(const VoxelGrid&, const VoxelGrid&) = default;

private:
    Resolution res_{};
    BoundingBox bbox_{};
    int sh_degree_ = 0;
    std::vector<int32_t> lattice_to_slot_;
    std::vector<uint32_t> slot_to_lattice_;
    std::vector<float> density_;
    std::vector<float> sh_;
};

/// Accumulator for d(loss)/d(parameter), slot-matched to a grid.
struct GridGradients {
    std::vector<double> d_density;
    std::vector<double> d_sh;
    int sh_stride = 0;

    GridGradients() = default;
    explicit GridGradients(const VoxelGrid& grid);
    void zero();
    bool matches(const VoxelGrid& grid) const;
    GridGradients& operator+=(const GridGradients& o);
};

/// Trilinear blend of (sigma, SH) at a world point. Outside the bbox: zeros, no corners.
FieldSample trilinear_sample(const VoxelGrid& grid, const Vec3& x);

/// Adjoint of trilinear_sample: each corner slot receives weight * gradient.
void scatter_gradient(const VoxelGrid& grid, const FieldSample& sample, double d_sigma, std::span<const double> d_sh,
                      GridGradients& acc);

// Binary checkpoint ("S2CK", little-endian).
std::vector<uint8_t> serialize_checkpoint(const VoxelGrid& grid);
VoxelGrid deserialize_checkpoint(std::span<const uint8_t> bytes);
/// Writes via a temporary file and rename.
void save_checkpoint(const VoxelGrid& grid, const std::filesystem::path& path);
VoxelGrid load_checkpoint(const std::filesystem::path& path);

/// Writes bytes to `path` through a sibling temp file and rename.
void write_file_atomic(const std::filesystem::path& path, std::span<const uint8_t> bytes);
std::vector<uint8_t> read_file(const std::filesystem::path& path);

}  // namespace s2rf
