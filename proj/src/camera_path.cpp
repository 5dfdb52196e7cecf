#include "s2rf/camera_path.hpp"

#include <cmath>
#include <fstream>

#include "json.hpp"
#include "s2rf/scene.hpp"

namespace s2rf {

using nlohmann::json;

Quat quat_from_matrix(const Mat3& m) {
    Quat q;
    const double tr = m(0, 0) + m(1, 1) + m(2, 2);
    if (tr > 0) {
        const double s = 2.0 * std::sqrt(1.0 + tr);
        q = {0.25 * s, (m(2, 1) - m(1, 2)) / s, (m(0, 2) - m(2, 0)) / s, (m(1, 0) - m(0, 1)) / s};
    } else if (m(0, 0) > m(1, 1) && m(0, 0) > m(2, 2)) {
        const double s = 2.0 * std::sqrt(1.0 + m(0, 0) - m(1, 1) - m(2, 2));
        q = {(m(2, 1) - m(1, 2)) / s, 0.25 * s, (m(0, 1) + m(1, 0)) / s, (m(0, 2) + m(2, 0)) / s};
    } else if (m(1, 1) > m(2, 2)) {
        const double s = 2.0 * std::sqrt(1.0 + m(1, 1) - m(0, 0) - m(2, 2));
        q = {(m(0, 2) - m(2, 0)) / s, (m(0, 1) + m(1, 0)) / s, 0.25 * s, (m(1, 2) + m(2, 1)) / s};
    } else {
        const double s = 2.0 * std::sqrt(1.0 + m(2, 2) - m(0, 0) - m(1, 1));
        q = {(m(1, 0) - m(0, 1)) / s, (m(0, 2) + m(2, 0)) / s, (m(1, 2) + m(2, 1)) / s, 0.25 * s};
    }
    const double n = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
    for (double& v : q) v /= n;
    return q;
}

Mat3 matrix_from_quat(const Quat& q) {
    const auto [w, x, y, z] = q;
    Mat3 m;
    m(0, 0) = 1 - 2 * (y * y + z * z);
    m(0, 1) = 2 * (x * y - w * z);
    m(0, 2) = 2 * (x * z + w * y);
    m(1, 0) = 2 * (x * y + w * z);
    m(1, 1) = 1 - 2 * (x * x + z * z);
    m(1, 2) = 2 * (y * z - w * x);
    m(2, 0) = 2 * (x * z - w * y);
    m(2, 1) = 2 * (y * z + w * x);
    m(2, 2) = 1 - 2 * (x * x + y * y);
    return m;
}

Quat slerp(Quat a, Quat b, double t) {
    double d = a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3];
    if (d < 0) {
        for (double& v : b) v = -v;
        d = -d;
    }
    Quat q;
    if (d > 0.9995) {
        for (int i = 0; i < 4; ++i) q[i] = a[i] + t * (b[i] - a[i]);
    } else {
        const double theta = std::acos(d);
        const double sa = std::sin((1 - t) * theta) / std::sin(theta), sb = std::sin(t * theta) / std::sin(theta);
        for (int i = 0; i < 4; ++i) q[i] = sa * a[i] + sb * b[i];
    }
    const double n = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
    for (double& v : q) v /= n;
    return q;
}

Camera interpolate_camera(const Camera& a, const Camera& b, double t) {
    Camera c = a;
    c.position = a.position + (b.position - a.position) * t;
    c.rotation = matrix_from_quat(slerp(quat_from_matrix(a.rotation), quat_from_matrix(b.rotation), t));
    return c;
}

std::vector<Camera> interpolate_path(const std::vector<Camera>& keys, int steps) {
    require(!keys.empty(), "camera path needs at least one keyframe");
    require(steps >= 1, "camera path needs at least one step");
    std::vector<Camera> out;
    const auto segments = double(keys.size() - 1);
    for (int i = 0; i < steps; ++i) {
        const double u = steps == 1 ? 0.0 : segments * i / (steps - 1);
        const auto k = std::min(size_t(u), keys.size() - 1);
        out.push_back(k + 1 < keys.size() ? interpolate_camera(keys[k], keys[k + 1], u - double(k)) : keys[k]);
    }
    return out;
}

std::vector<Camera> load_pose_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw SceneError(SceneError::Kind::ManifestNotFound, "pose file not found: " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw SceneError(SceneError::Kind::Schema, "pose file: invalid JSON: " + std::string(e.what()));
    }
    Camera base;
    std::vector<Camera> keys;
    try {
        if (!j.is_object()) throw SceneError(SceneError::Kind::Schema, "pose file: expected a JSON object");
        base.width = j.at("width").get<int>();
        base.height = j.at("height").get<int>();
        base.fx = j.at("fx").get<double>();
        base.fy = j.at("fy").get<double>();
        base.cx = j.at("cx").get<double>();
        base.cy = j.at("cy").get<double>();
        base.near = j.value("near", base.near);
        base.far = j.value("far", base.far);
        const auto& poses = j.at("poses");
        if (!poses.is_array() || poses.empty()) throw SceneError(SceneError::Kind::BadPose, "pose file: \"poses\" must be a non-empty list");
        for (size_t i = 0; i < poses.size(); ++i) {
            const auto p = poses[i].get<std::vector<double>>();
            if (p.size() != 12)
                throw SceneError(SceneError::Kind::BadPose, "pose " + std::to_string(i) + ": needs 12 numbers (3x4 row-major)");
            Camera c = base;
            for (int r = 0; r < 3; ++r) {
                for (int k = 0; k < 3; ++k) c.rotation(r, k) = p[size_t(r * 4 + k)];
                c.position[r] = p[size_t(r * 4 + 3)];
            }
            if (orthonormality_error(c.rotation) > 1e-6)
                throw SceneError(SceneError::Kind::BadPose, "pose " + std::to_string(i) + ": rotation is not orthonormal");
            keys.push_back(c);
        }
    } catch (const json::exception& e) {
        throw SceneError(SceneError::Kind::Schema, "pose file: " + std::string(e.what()));
    }
    try {
        base.validate();
    } catch (const ContractViolation& e) {
        throw SceneError(SceneError::Kind::Schema, std::string("pose file: ") + e.what());
    }
    if (j.contains("steps")) {
        int steps = 0;
        try {
            steps = j["steps"].get<int>();
        } catch (const json::exception&) {
            throw SceneError(SceneError::Kind::Schema, "pose file: \"steps\" must be an integer");
        }
        if (steps < 1) throw SceneError(SceneError::Kind::Schema, "pose file: \"steps\" must be at least 1");
        return interpolate_path(keys, steps);
    }
    return keys;
}

}  // namespace s2rf
