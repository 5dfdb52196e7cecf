#pragma once

#include <array>
#include <filesystem>
#include <vector>

#include "s2rf/render.hpp"

namespace s2rf {

/// Unit quaternion (w, x, y, z).
using Quat = std::array<double, 4>;

Quat quat_from_matrix(const Mat3& r);
Mat3 matrix_from_quat(const Quat& q);
/// Shortest-arc spherical interpolation.
Quat slerp(Quat a, Quat b, double t);

/// Camera between two keyframes: linear translation, slerp rotation. Intrinsics come from `a`.
Camera interpolate_camera(const Camera& a, const Camera& b, double t);

/// `steps` cameras evenly spaced along the keyframe path (first and last keys included).
std::vector<Camera> interpolate_path(const std::vector<Camera>& keys, int steps);

/// Pose file (JSON): shared intrinsics ("width", "height", "fx", "fy", "cx", "cy", optional "near"/"far"),
/// "poses": list of 12-number row-major camera-to-world 3x4 matrices, optional "steps" for an
/// interpolated path. Throws SceneError on malformed input.
std::vector<Camera> load_pose_file(const std::filesystem::path& path);

}  // namespace s2rf
