#include "s2rf/scene.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "json.hpp"

namespace s2rf {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json read_json(const fs::path& path, SceneError::Kind missing_kind, const std::string& what) {
    if (!fs::exists(path)) throw SceneError(missing_kind, what + " not found: " + path.string());
    std::ifstream f(path);
    try {
        return json::parse(f);
    } catch (const json::exception& e) {
        throw SceneError(SceneError::Kind::Schema, what + " is not valid JSON (" + path.string() + "): " + e.what());
    }
}

fs::path resolve(const fs::path& base_dir, const fs::path& p) { return p.is_absolute() ? p : base_dir / p; }

template <typename T>
T field(const json& j, const char* key, const std::string& ctx) {
    if (!j.contains(key)) throw SceneError(SceneError::Kind::Schema, ctx + ": missing field \"" + key + "\"");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw SceneError(SceneError::Kind::Schema, ctx + ": field \"" + key + "\" has the wrong type");
    }
}

}  // namespace

std::vector<int> SceneDataset::training_frames() const {
    std::vector<int> out;
    for (const auto& f : frames)
        if (std::ranges::find(holdout, f.index) == holdout.end()) out.push_back(f.index);
    return out;
}

SceneDataset load_scene(const fs::path& manifest) {
    const json j = read_json(manifest, SceneError::Kind::ManifestNotFound, "manifest");
    const fs::path dir = manifest.parent_path();
    SceneDataset ds;
    ds.bbox = BoundingBox{{0, 0, 0}, {1, 1, 1}};
    if (j.contains("bbox")) {
        const auto b = field<std::vector<double>>(j, "bbox", "manifest");
        if (b.size() != 6) throw SceneError(SceneError::Kind::Schema, "manifest: bbox needs 6 numbers");
        ds.bbox = BoundingBox{{b[0], b[1], b[2]}, {b[3], b[4], b[5]}};
        if (!(b[0] < b[3] && b[1] < b[4] && b[2] < b[5]))
            throw SceneError(SceneError::Kind::Schema, "manifest: bbox min must be below max");
    }
    if (!j.contains("frames") || !j["frames"].is_array())
        throw SceneError(SceneError::Kind::Schema, "manifest: missing \"frames\" array");
    const json& frames = j["frames"];
    if (frames.size() < 2) throw SceneError(SceneError::Kind::Schema, "manifest: at least 2 frames required");

    for (size_t i = 0; i < frames.size(); ++i) {
        const json& fj = frames[i];
        const std::string ctx = "manifest frame " + std::to_string(i);
        FrameRecord rec;
        rec.index = int(i);
        rec.image = resolve(dir, field<std::string>(fj, "image", ctx));
        Camera& cam = rec.camera;
        cam.width = field<int>(fj, "width", ctx);
        cam.height = field<int>(fj, "height", ctx);
        cam.fx = field<double>(fj, "fx", ctx);
        cam.fy = field<double>(fj, "fy", ctx);
        cam.cx = field<double>(fj, "cx", ctx);
        cam.cy = field<double>(fj, "cy", ctx);
        cam.near = field<double>(fj, "near", ctx);
        cam.far = field<double>(fj, "far", ctx);
        const auto pose = field<std::vector<double>>(fj, "pose", ctx);
        if (pose.size() != 12) throw SceneError(SceneError::Kind::BadPose, ctx + ": pose needs 12 numbers (3x4 row-major)");
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) cam.rotation(r, c) = pose[r * 4 + c];
            cam.position[r] = pose[r * 4 + 3];
        }
        if (orthonormality_error(cam.rotation) > 1e-6)
            throw SceneError(SceneError::Kind::BadPose, ctx + ": pose rotation is not orthonormal");
        try {
            cam.validate();
        } catch (const ContractViolation& e) {
            throw SceneError(SceneError::Kind::Schema, ctx + ": " + e.what());
        }
        if (i == 0) {
            ds.width = cam.width;
            ds.height = cam.height;
        } else if (cam.width != ds.width || cam.height != ds.height) {
            throw SceneError(SceneError::Kind::DimensionMismatch, ctx + ": image size differs from frame 0");
        }
        if (!fs::exists(rec.image)) throw SceneError(SceneError::Kind::MissingImage, ctx + ": image not found: " + rec.image.string());
        ds.frames.push_back(std::move(rec));
    }
    if (j.contains("holdout")) {
        ds.holdout = field<std::vector<int>>(j, "holdout", "manifest");
        for (int h : ds.holdout)
            if (h < 0 || h >= int(ds.frames.size()))
                throw SceneError(SceneError::Kind::Schema, "manifest: holdout index out of range");
    }
    return ds;
}

void save_scene(const SceneDataset& ds, const fs::path& manifest) {
    const fs::path dir = manifest.parent_path();
    json j;
    j["bbox"] = {ds.bbox.min.x, ds.bbox.min.y, ds.bbox.min.z, ds.bbox.max.x, ds.bbox.max.y, ds.bbox.max.z};
    j["frames"] = json::array();
    for (const FrameRecord& f : ds.frames) {
        const Camera& c = f.camera;
        std::vector<double> pose(12);
        for (int r = 0; r < 3; ++r) {
            for (int k = 0; k < 3; ++k) pose[r * 4 + k] = c.rotation(r, k);
            pose[r * 4 + 3] = c.position[r];
        }
        fs::path img = f.image;
        if (img.is_absolute() && !dir.empty()) {
            const fs::path rel = img.lexically_relative(dir);
            if (!rel.empty() && *rel.begin() != "..") img = rel;
        }
        j["frames"].push_back({{"image", img.generic_string()},
                               {"width", c.width},
                               {"height", c.height},
                               {"fx", c.fx},
                               {"fy", c.fy},
                               {"cx", c.cx},
                               {"cy", c.cy},
                               {"pose", pose},
                               {"near", c.near},
                               {"far", c.far}});
    }
    if (!ds.holdout.empty()) j["holdout"] = ds.holdout;
    const std::string text = j.dump(2) + "\n";
    write_file_atomic(manifest, std::span(reinterpret_cast<const uint8_t*>(text.data()), text.size()));
}

std::vector<Image> load_images(const SceneDataset& ds) {
    std::vector<Image> out;
    out.reserve(ds.frames.size());
    for (const FrameRecord& f : ds.frames) {
        Image img = read_png_rgb(f.image);
        if (img.width != ds.width || img.height != ds.height)
            throw SceneError(SceneError::Kind::DimensionMismatch,
                             "image " + f.image.string() + " does not match the manifest's size");
        out.push_back(std::move(img));
    }
    return out;
}

std::vector<ObjectMaskSet> load_masks(const fs::path& mask_dir, const SceneDataset& ds) {
    if (!fs::is_directory(mask_dir))
        throw SceneError(SceneError::Kind::Schema, "mask directory not found: " + mask_dir.string());
    std::vector<std::string> ids;
    for (const auto& entry : fs::directory_iterator(mask_dir))
        if (entry.is_directory()) ids.push_back(entry.path().filename().string());
    std::ranges::sort(ids);
    const fs::path sidecar = mask_dir / "objects.json";
    if (ids.empty() && !fs::exists(sidecar)) return {};

    const json cats = read_json(sidecar, SceneError::Kind::Schema, "objects.json");
    if (!cats.is_object()) throw SceneError(SceneError::Kind::Schema, "objects.json must map object_id to category");
    for (const auto& [id, cat] : cats.items()) {
        if (!cat.is_string()) throw SceneError(SceneError::Kind::Schema, "objects.json: category of " + id + " must be a string");
        if (std::ranges::find(ids, id) == ids.end())
            throw SceneError(SceneError::Kind::UnknownObject, "objects.json lists \"" + id + "\" but masks/" + id + " does not exist");
    }

    std::vector<ObjectMaskSet> out;
    for (const std::string& id : ids) {
        if (!cats.contains(id))
            throw SceneError(SceneError::Kind::UnknownObject, "mask directory \"" + id + "\" has no entry in objects.json");
        ObjectMaskSet obj;
        obj.object_id = id;
        obj.category = cats[id].get<std::string>();
        obj.masks.resize(ds.frames.size());
        for (const auto& entry : fs::directory_iterator(mask_dir / id)) {
            const fs::path p = entry.path();
            if (p.extension() != ".png") continue;
            int frame = -1;
            try {
                size_t used = 0;
                frame = std::stoi(p.stem().string(), &used);
                if (used != p.stem().string().size()) frame = -1;
            } catch (const std::exception&) {
            }
            if (frame < 0 || frame >= int(ds.frames.size()))
                throw SceneError(SceneError::Kind::Schema, "mask file " + p.string() + " does not name a frame index");
            BinaryMask m = read_png_mask(p);
            if (m.width != ds.width || m.height != ds.height)
                throw SceneError(SceneError::Kind::MaskSizeMismatch, "mask " + p.string() + " does not match the frame size");
            if (!m.empty()) {
                obj.masks[size_t(frame)] = std::move(m);
                ++obj.presence_count;
            }
        }
        out.push_back(std::move(obj));
    }
    return out;
}

void save_masks(const std::vector<ObjectMaskSet>& objects, const fs::path& mask_dir) {
    fs::create_directories(mask_dir);
    json cats = json::object();
    for (const ObjectMaskSet& o : objects) {
        cats[o.object_id] = o.category;
        fs::create_directories(mask_dir / o.object_id);
        for (size_t f = 0; f < o.masks.size(); ++f)
            if (o.masks[f]) write_png_mask(mask_dir / o.object_id / (std::to_string(f) + ".png"), *o.masks[f]);
    }
    const std::string text = cats.dump(2) + "\n";
    write_file_atomic(mask_dir / "objects.json", std::span(reinterpret_cast<const uint8_t*>(text.data()), text.size()));
}

std::vector<ObjectMaskSet> retention_filter(const std::vector<ObjectMaskSet>& objects, int n_frames, double threshold) {
    require(threshold > 0.0 && threshold <= 1.0, "retention threshold must lie in (0, 1]");
    // The slack absorbs the binary representation error of decimal thresholds such as 0.8.
    const double needed = threshold * n_frames - 1e-9 * std::max(1, n_frames);
    std::vector<ObjectMaskSet> kept;
    for (const ObjectMaskSet& o : objects)
        if (double(o.presence_count) >= needed) kept.push_back(o);
    return kept;
}

StyleConfig load_style_config(const fs::path& path) {
    const json j = read_json(path, SceneError::Kind::Schema, "style config");
    const fs::path dir = path.parent_path();
    if (!j.contains("rules") || !j["rules"].is_array())
        throw SceneError(SceneError::Kind::Schema, "style config: missing \"rules\" array");
    StyleConfig cfg;
    for (size_t i = 0; i < j["rules"].size(); ++i) {
        const json& r = j["rules"][i];
        const std::string ctx = "style rule " + std::to_string(i);
        StyleRule rule;
        const bool inst = r.contains("instance"), cat = r.contains("category");
        if (inst == cat) throw SceneError(SceneError::Kind::Schema, ctx + ": give exactly one of \"instance\" or \"category\"");
        rule.selector = inst ? StyleRule::Selector::Instance : StyleRule::Selector::Category;
        rule.key = field<std::string>(r, inst ? "instance" : "category", ctx);
        rule.style_image = resolve(dir, field<std::string>(r, "style", ctx));
        if (!fs::exists(rule.style_image))
            throw SceneError(SceneError::Kind::MissingStyleImage, ctx + ": style image not found: " + rule.style_image.string());
        cfg.rules.push_back(std::move(rule));
    }
    return cfg;
}

std::map<std::string, fs::path> assign_styles(const std::vector<ObjectMaskSet>& retained, const StyleConfig& config,
                                              const std::vector<std::string>& known_ids) {
    std::map<std::string, fs::path> by_category, by_instance;
    for (const StyleRule& r : config.rules) {
        auto& target = r.selector == StyleRule::Selector::Instance ? by_instance : by_category;
        if (!target.emplace(r.key, r.style_image).second)
            throw SceneError(SceneError::Kind::DuplicateRule, "more than one style rule for \"" + r.key + "\"");
    }
    for (const auto& [id, _] : by_instance) {
        const bool present = std::ranges::any_of(retained, [&](const ObjectMaskSet& o) { return o.object_id == id; });
        if (present) continue;
        if (std::ranges::find(known_ids, id) != known_ids.end())
            throw SceneError(SceneError::Kind::DroppedObject,
                             "style rule targets \"" + id + "\", which was dropped by the retention filter");
        throw SceneError(SceneError::Kind::UnknownObject, "style rule targets unknown object \"" + id + "\"");
    }
    std::map<std::string, fs::path> out;
    for (const ObjectMaskSet& o : retained) {
        if (auto it = by_instance.find(o.object_id); it != by_instance.end())
            out[o.object_id] = it->second;
        else if (auto jt = by_category.find(o.category); jt != by_category.end())
            out[o.object_id] = jt->second;
    }
    return out;
}

}  // namespace s2rf
