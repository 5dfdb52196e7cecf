#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "s2rf/grid.hpp"
#include "s2rf/render.hpp"
#include "s2rf/scene.hpp"

namespace s2rf {

struct SphereSpec {
    std::string id;
    std::string category;
    Vec3 center;
    double radius = 0.3;
    Vec3 color{0.8, 0.5, 0.3};
};

/// Ground-truth scene: opaque spheres in a dense-lattice grid, seen by cameras on two rings.
struct SyntheticSpec {
    uint32_t grid_resolution = 64;
    BoundingBox bbox{{-1, -1, -1}, {1, 1, 1}};
    double sigma_max = 80.0;
    int image_size = 128;
    double fov_degrees = 45.0;
    double camera_distance = 3.2;
    int n_train = 20;
    int n_holdout = 2;
    std::vector<SphereSpec> spheres = {
        {"sphere_a", "sphere", {-0.42, 0.05, 0.0}, 0.32, {0.85, 0.55, 0.25}},
        {"sphere_b", "sphere", {0.42, -0.05, 0.0}, 0.32, {0.85, 0.55, 0.25}},
    };
};

struct SyntheticScene {
    SceneDataset dataset;              // image paths are filled in by write_synthetic_scene
    std::vector<Image> images;         // 8-bit quantized renders of `truth`
    std::vector<ObjectMaskSet> objects;
    VoxelGrid truth;
};

VoxelGrid make_sphere_grid(const SyntheticSpec& spec);
/// Training cameras first, held-out cameras last. World up is +z.
std::vector<Camera> make_camera_rig(const SyntheticSpec& spec);
/// Camera at `eye` looking at `target`.
Camera look_at_camera(const Vec3& eye, const Vec3& target, int size, double fov_degrees);
/// Pixels whose ray hits sphere `which` before any other sphere.
BinaryMask sphere_mask(const Camera& cam, const std::vector<SphereSpec>& spheres, size_t which);

SyntheticScene generate_synthetic_scene(const SyntheticSpec& spec);
/// Writes scene.json, images/NNN.png and masks/ under `dir`; updates dataset image paths.
void write_synthetic_scene(SyntheticScene& scene, const std::filesystem::path& dir);

Image make_checkerboard(int size, int square, const Vec3& a, const Vec3& b);
Image make_stripes(int size, int period, const Vec3& a, const Vec3& b);

}  // namespace s2rf
