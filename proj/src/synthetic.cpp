#include "s2rf/synthetic.hpp"

#include <algorithm>
#include <numbers>

namespace s2rf {

namespace fs = std::filesystem;

namespace {

double logit(double p) { return std::log(p / (1.0 - p)); }

/// Smoothly varying surface color so the scene is not a flat fill.
Vec3 shade(const SphereSpec& s, const Vec3& p) {
    const double t = std::clamp((p.z - s.center.z) / s.radius, -1.0, 1.0);
    Vec3 c = s.color * (0.85 + 0.15 * t);
    for (int k = 0; k < 3; ++k) c[k] = std::clamp(c[k], 0.02, 0.98);
    return c;
}

bool hit_sphere(const Vec3& o, const Vec3& d, const SphereSpec& s, double& t) {
    const Vec3 oc = o - s.center;
    const double b = dot(oc, d);
    const double c = dot(oc, oc) - s.radius * s.radius;
    const double disc = b * b - c;
    if (disc < 0) return false;
    t = -b - std::sqrt(disc);
    return t > 0;
}

}  // namespace

VoxelGrid make_sphere_grid(const SyntheticSpec& spec) {
    const uint32_t n = spec.grid_resolution;
    VoxelGrid g(Resolution{n, n, n}, spec.bbox, 0);
    const Vec3 cell = g.cell_size();
    const double h = std::min({cell.x, cell.y, cell.z});
    for (uint32_t z = 0; z < n; ++z)
        for (uint32_t y = 0; y < n; ++y)
            for (uint32_t x = 0; x < n; ++x) {
                const Vec3 p = g.voxel_center(x, y, z);
                for (const SphereSpec& s : spec.spheres) {
                    const double d = norm(p - s.center);
                    if (d > s.radius + 2.5 * h) continue;
                    const int32_t slot = g.activate(g.lattice_index(x, y, z));
                    const double occ = std::clamp(0.5 + (s.radius - d) / h, 0.0, 1.0);
                    g.density(slot) = float(spec.sigma_max * occ);
                    const Vec3 c = shade(s, p);
                    for (int k = 0; k < 3; ++k) g.sh(slot)[k] = float(logit(c[k]) / kShC0);
                    break;
                }
            }
    return g;
}

Camera look_at_camera(const Vec3& eye, const Vec3& target, int size, double fov_degrees) {
    const Vec3 forward = normalize(target - eye);
    Vec3 up{0, 0, 1};
    if (std::abs(dot(forward, up)) > 0.999) up = {0, 1, 0};
    const Vec3 right = normalize(cross(forward, up));
    const Vec3 down = cross(forward, right);
    Camera cam;
    cam.width = cam.height = size;
    cam.fx = cam.fy = 0.5 * size / std::tan(0.5 * fov_degrees * std::numbers::pi / 180.0);
    cam.cx = cam.cy = 0.5 * size;
    cam.rotation = Mat3::from_columns(right, down, forward);
    cam.position = eye;
    cam.near = 0.1;
    cam.far = 10.0;
    return cam;
}

std::vector<Camera> make_camera_rig(const SyntheticSpec& spec) {
    std::vector<Camera> cams;
    const double deg = std::numbers::pi / 180.0;
    auto place = [&](double azimuth, double elevation) {
        const Vec3 eye{spec.camera_distance * std::cos(elevation) * std::cos(azimuth),
                       spec.camera_distance * std::cos(elevation) * std::sin(azimuth),
                       spec.camera_distance * std::sin(elevation)};
        cams.push_back(look_at_camera(eye, {0, 0, 0}, spec.image_size, spec.fov_degrees));
    };
    for (int i = 0; i < spec.n_train; ++i)
        place(2.0 * std::numbers::pi * i / spec.n_train, (i % 2 == 0 ? 20.0 : 45.0) * deg);
    for (int i = 0; i < spec.n_holdout; ++i)
        place(2.0 * std::numbers::pi * (i + 0.25) / std::max(1, spec.n_holdout) + std::numbers::pi / spec.n_train,
              32.0 * deg);
    return cams;
}

BinaryMask sphere_mask(const Camera& cam, const std::vector<SphereSpec>& spheres, size_t which) {
    BinaryMask m(cam.width, cam.height);
    for (int r = 0; r < cam.height; ++r)
        for (int c = 0; c < cam.width; ++c) {
            const Ray ray = generate_ray(cam, {r, c});
            double best = std::numeric_limits<double>::infinity();
            size_t best_idx = spheres.size();
            for (size_t s = 0; s < spheres.size(); ++s) {
                double t = 0;
                if (hit_sphere(ray.origin, ray.direction, spheres[s], t) && t < best) {
                    best = t;
                    best_idx = s;
                }
            }
            m.at(r, c) = best_idx == which ? 1 : 0;
        }
    return m;
}

SyntheticScene generate_synthetic_scene(const SyntheticSpec& spec) {
    SyntheticScene scene;
    scene.truth = make_sphere_grid(spec);
    const std::vector<Camera> cams = make_camera_rig(spec);
    RenderOptions opts;
    opts.march.step = default_step(scene.truth);
    scene.dataset.bbox = spec.bbox;
    scene.dataset.width = scene.dataset.height = spec.image_size;
    for (size_t i = 0; i < cams.size(); ++i) {
        scene.dataset.frames.push_back({fs::path{}, cams[i], int(i)});
        scene.images.push_back(quantize_8bit(render_image(scene.truth, cams[i], opts).rgb));
    }
    for (int i = 0; i < spec.n_holdout; ++i) scene.dataset.holdout.push_back(spec.n_train + i);
    for (size_t s = 0; s < spec.spheres.size(); ++s) {
        ObjectMaskSet obj;
        obj.object_id = spec.spheres[s].id;
        obj.category = spec.spheres[s].category;
        for (const Camera& cam : cams) {
            BinaryMask m = sphere_mask(cam, spec.spheres, s);
            if (m.empty()) {
                obj.masks.emplace_back();
            } else {
                obj.masks.emplace_back(std::move(m));
                ++obj.presence_count;
            }
        }
        scene.objects.push_back(std::move(obj));
    }
    return scene;
}

void write_synthetic_scene(SyntheticScene& scene, const fs::path& dir) {
    fs::create_directories(dir / "images");
    for (size_t i = 0; i < scene.images.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "%03zu.png", i);
        const fs::path p = dir / "images" / name;
        write_png_rgb(p, scene.images[i]);
        scene.dataset.frames[i].image = p;
    }
    save_scene(scene.dataset, dir / "scene.json");
    save_masks(scene.objects, dir / "masks");
}

Image make_checkerboard(int size, int square, const Vec3& a, const Vec3& b) {
    Image img(size, size);
    for (int r = 0; r < size; ++r)
        for (int c = 0; c < size; ++c) {
            const Vec3& v = ((r / square + c / square) % 2 == 0) ? a : b;
            float* p = img.at(r, c);
            for (int k = 0; k < 3; ++k) p[k] = float(v[k]);
        }
    return img;
}

Image make_stripes(int size, int period, const Vec3& a, const Vec3& b) {
    Image img(size, size);
    for (int r = 0; r < size; ++r)
        for (int c = 0; c < size; ++c) {
            const Vec3& v = ((r + c) / period % 2 == 0) ? a : b;
            float* p = img.at(r, c);
            for (int k = 0; k < 3; ++k) p[k] = float(v[k]);
        }
    return img;
}

}  // namespace s2rf
