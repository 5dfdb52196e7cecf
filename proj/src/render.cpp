#include "s2rf/render.hpp"

#include <algorithm>

namespace s2rf {

void Camera::validate() const {
    require(fx > 0 && fy > 0, "camera focal lengths must be positive");
    require(width > 0 && height > 0, "camera image size must be positive");
    require(near > 0 && near < far, "camera clip range must satisfy 0 < near < far");
    require(orthonormality_error(rotation) <= 1e-6, "camera rotation is not orthonormal");
}

Ray generate_ray(const Camera& camera, Pixel pixel) {
    require(pixel.row >= 0 && pixel.row < camera.height && pixel.col >= 0 && pixel.col < camera.width,
            "pixel outside image bounds");
    const Vec3 local{(pixel.col + 0.5 - camera.cx) / camera.fx, (pixel.row + 0.5 - camera.cy) / camera.fy, 1.0};
    return {camera.position, normalize(camera.rotation * local), pixel, camera.near, camera.far};
}

std::vector<Ray> generate_rays(const Camera& camera, std::span<const Pixel> pixels) {
    std::vector<Ray> rays;
    rays.reserve(pixels.size());
    for (const Pixel& p : pixels) rays.push_back(generate_ray(camera, p));
    return rays;
}

bool intersect_bbox(const BoundingBox& box, const Vec3& origin, const Vec3& dir, double& t_enter, double& t_exit) {
    t_enter = -std::numeric_limits<double>::infinity();
    t_exit = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
        if (dir[a] == 0.0) {
            if (origin[a] < box.min[a] || origin[a] > box.max[a]) return false;
            continue;
        }
        const double inv = 1.0 / dir[a];
        double t0 = (box.min[a] - origin[a]) * inv;
        double t1 = (box.max[a] - origin[a]) * inv;
        if (t0 > t1) std::swap(t0, t1);
        t_enter = std::max(t_enter, t0);
        t_exit = std::min(t_exit, t1);
    }
    return t_exit > t_enter;
}

RaySamples march_ray(const VoxelGrid& grid, const Ray& ray, const MarchOptions& opts) {
    require(opts.step > 0, "march step must be positive");
    RaySamples out;
    double t_enter = 0, t_exit = 0;
    if (!intersect_bbox(grid.bbox(), ray.origin, ray.direction, t_enter, t_exit)) return out;
    const double t0 = std::max(ray.t_near, t_enter);
    const double t1 = std::min(ray.t_far, t_exit);
    if (!(t1 > t0)) return out;

    const double len = t1 - t0;
    // Tolerance keeps exact divisions (len = k * step) from spawning a sliver interval.
    const auto n = static_cast<int64_t>(std::max(1.0, std::ceil(len / opts.step - 1e-6)));
    const int stride = grid.sh_stride();
    out.reserve(opts.skip_empty ? 16 : size_t(n));
    for (int64_t i = 0; i < n; ++i) {
        const double start = t0 + double(i) * opts.step;
        const double end = i + 1 == n ? t1 : start + opts.step;
        RaySample s;
        s.delta = end - start;
        s.t = start + opts.offset * s.delta;
        s.position = ray.origin + ray.direction * s.t;
        s.field = trilinear_sample(grid, s.position);
        if (opts.skip_empty && s.field.sigma <= 0.0) continue;
        s.color = eval_sh(std::span<const double>(s.field.sh.data(), size_t(stride)), grid.sh_degree(), ray.direction);
        out.push_back(s);
    }
    return out;
}

RenderOutput composite(const RaySamples& samples, const Vec3& background) {
    RenderOutput out;
    out.weights.resize(samples.size());
    double log_t = 0.0;
    double transmittance = 1.0;
    for (size_t i = 0; i < samples.size(); ++i) {
        const double a = std::max(samples[i].field.sigma, 0.0) * samples[i].delta;
        const double w = transmittance * -std::expm1(-a);
        out.weights[i] = w;
        out.color += samples[i].color * w;
        log_t -= a;
        transmittance = std::exp(log_t);
    }
    out.t_fg = transmittance;
    out.color += background * transmittance;
    return out;
}

std::vector<SampleGradient> composite_backward(const RaySamples& samples, const Vec3& d_color, double d_t_fg,
                                               const Vec3& background) {
    const size_t n = samples.size();
    std::vector<SampleGradient> grads(n);
    // after[i] = transmittance past sample i; weight[i] = T_i * alpha_i.
    std::vector<double> after(n), weight(n);
    double log_t = 0.0, transmittance = 1.0;
    for (size_t i = 0; i < n; ++i) {
        const double a = std::max(samples[i].field.sigma, 0.0) * samples[i].delta;
        weight[i] = transmittance * -std::expm1(-a);
        log_t -= a;
        transmittance = std::exp(log_t);
        after[i] = transmittance;
    }
    const double t_fg = transmittance;

    // Light arriving from behind sample i.
    Vec3 behind = background * t_fg;
    for (size_t i = n; i-- > 0;) {
        const RaySample& s = samples[i];
        grads[i].d_color = d_color * weight[i];
        if (s.field.sigma > 0.0) {
            const double d_a = dot(d_color, s.color * after[i] - behind) - d_t_fg * t_fg;
            grads[i].d_sigma = d_a * s.delta;
        }
        behind += s.color * weight[i];
    }
    return grads;
}

void backprop_samples(const VoxelGrid& grid, const Ray& ray, const RaySamples& samples,
                      std::span<const SampleGradient> grads, GridGradients& acc) {
    require(grads.size() == samples.size(), "one gradient per sample required");
    const auto stride = size_t(grid.sh_stride());
    std::array<double, kMaxShFloats> d_sh{};
    for (size_t i = 0; i < samples.size(); ++i) {
        const RaySample& s = samples[i];
        const SampleGradient& g = grads[i];
        if (g.d_sigma == 0.0 && g.d_color == Vec3{}) continue;
        const std::span<double> d_sh_span(d_sh.data(), stride);
        eval_sh_backward(std::span<const double>(s.field.sh.data(), stride), grid.sh_degree(), ray.direction, g.d_color,
                         d_sh_span);
        scatter_gradient(grid, s.field, g.d_sigma, d_sh_span, acc);
    }
}

double default_step(const VoxelGrid& grid) {
    const Vec3 c = grid.cell_size();
    return 0.5 * std::min({c.x, c.y, c.z});
}

namespace {

void render_pixel(const VoxelGrid& grid, const Camera& camera, const RenderOptions& opts, int row, int col,
                  RenderedImage& out) {
    const Ray ray = generate_ray(camera, {row, col});
    const RenderOutput r = composite(march_ray(grid, ray, opts.march), opts.background);
    float* px = out.rgb.at(row, col);
    px[0] = float(r.color.x);
    px[1] = float(r.color.y);
    px[2] = float(r.color.z);
    out.t_fg[size_t(row) * camera.width + col] = float(r.t_fg);
}

}  // namespace

RenderedImage render_image(const VoxelGrid& grid, const Camera& camera, const RenderOptions& opts) {
    camera.validate();
    RenderedImage out{Image(camera.width, camera.height), std::vector<float>(size_t(camera.width) * camera.height)};
#pragma omp parallel for schedule(dynamic, 1)
    for (int row = 0; row < camera.height; ++row)
        for (int col = 0; col < camera.width; ++col) render_pixel(grid, camera, opts, row, col, out);
    return out;
}

namespace reference {

RenderedImage render_image(const VoxelGrid& grid, const Camera& camera, const RenderOptions& opts) {
    camera.validate();
    RenderedImage out{Image(camera.width, camera.height), std::vector<float>(size_t(camera.width) * camera.height)};
    for (int row = 0; row < camera.height; ++row)
        for (int col = 0; col < camera.width; ++col) render_pixel(grid, camera, opts, row, col, out);
    return out;
}

}  // namespace reference

}  // namespace s2rf
