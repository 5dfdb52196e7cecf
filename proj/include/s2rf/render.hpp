#pragma once

#include <limits>
#include <span>
#include <vector>

#include "s2rf/grid.hpp"
#include "s2rf/image.hpp"

namespace s2rf {

/// Pinhole camera. Camera frame: +x right, +y down, +z forward (optical axis).
/// `rotation`/`position` map camera to world.
struct Camera {
    double fx = 1, fy = 1, cx = 0, cy = 0;
    int width = 1, height = 1;
    Mat3 rotation{};
    Vec3 position{};
    double near = 0.05, far = 100.0;

    /// Throws ContractViolation if intrinsics, clip range, or rotation are invalid.
    void validate() const;
};

struct Pixel {
    int row = 0, col = 0;
};

struct Ray {
    Vec3 origin;
    Vec3 direction;  // unit
    Pixel pixel;
    double t_near = 0.0;
    double t_far = std::numeric_limits<double>::infinity();
};

Ray generate_ray(const Camera& camera, Pixel pixel);
std::vector<Ray> generate_rays(const Camera& camera, std::span<const Pixel> pixels);

/// Slab intersection; returns false when the ray misses the box.
bool intersect_bbox(const BoundingBox& box, const Vec3& origin, const Vec3& dir, double& t_enter, double& t_exit);

struct RaySample {
    Vec3 position;
    double t = 0;      // distance of the sample point along the ray
    double delta = 0;  // interval length
    FieldSample field;
    Vec3 color;  // decoded SH color
};

/// Samples of one ray, ordered by distance.
using RaySamples = std::vector<RaySample>;
using RaySampleBatch = std::vector<RaySamples>;

struct MarchOptions {
    double step = 0.01;
    /// Position of the sample inside its interval as a fraction; 0.5 is the midpoint.
    double offset = 0.5;
    /// Drop samples whose clamped density is zero. They add nothing to color,
    /// transmittance, sparsity, or any gradient, so results are unchanged.
    bool skip_empty = false;
};

/// Marches [max(near, entry), min(far, exit)] in intervals of `step` (last one partial).
RaySamples march_ray(const VoxelGrid& grid, const Ray& ray, const MarchOptions& opts);

struct RenderOutput {
    Vec3 color;
    double t_fg = 1.0;             // transmittance after the last sample
    std::vector<double> weights;  // T_i (1 - exp(-sigma_i delta_i))
};

/// Emission-absorption compositing with max(sigma, 0); escaped light picks up `background`.
RenderOutput composite(const RaySamples& samples, const Vec3& background = {});

struct SampleGradient {
    double d_sigma = 0;  // w.r.t. raw sigma (zero where the clamp is active)
    Vec3 d_color;
};

/// Exact partials of (color, t_fg) w.r.t. every sample's raw sigma and color.
std::vector<SampleGradient> composite_backward(const RaySamples& samples, const Vec3& d_color, double d_t_fg,
                                               const Vec3& background = {});

/// Pushes per-sample gradients through SH decoding and trilinear interpolation into `acc`.
void backprop_samples(const VoxelGrid& grid, const Ray& ray, const RaySamples& samples,
                      std::span<const SampleGradient> grads, GridGradients& acc);

struct RenderOptions {
    MarchOptions march;
    Vec3 background;
};

struct RenderedImage {
    Image rgb;
    std::vector<float> t_fg;  // per pixel, row-major
};

/// Renders every pixel; rows are distributed across OpenMP threads.
RenderedImage render_image(const VoxelGrid& grid, const Camera& camera, const RenderOptions& opts);

/// Marching step of half a voxel edge (smallest axis).
double default_step(const VoxelGrid& grid);

namespace reference {
/// Single-threaded, pixel-by-pixel render kept as the oracle for render_image.
RenderedImage render_image(const VoxelGrid& grid, const Camera& camera, const RenderOptions& opts);
}  // namespace reference

}  // namespace s2rf
