#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "s2rf/grid.hpp"
#include "s2rf/image.hpp"
#include "s2rf/render.hpp"

namespace s2rf {

/// Input-data problems found while loading scenes, masks, or style configs.
class SceneError : public std::runtime_error {
public:
    enum class Kind {
        ManifestNotFound,
        Schema,
        MissingImage,
        BadPose,
        DimensionMismatch,
        MaskSizeMismatch,
        UnknownObject,
        DroppedObject,
        DuplicateRule,
        MissingStyleImage,
    };
    SceneError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

struct FrameRecord {
    std::filesystem::path image;  // absolute, or relative to the manifest's directory when saved
    Camera camera;
    int index = 0;
};

struct SceneDataset {
    std::vector<FrameRecord> frames;
    BoundingBox bbox;
    int width = 0;
    int height = 0;
    /// Frames excluded from training and used for held-out evaluation.
    std::vector<int> holdout;

    std::vector<int> training_frames() const;
};

/// Parses and validates a scene.json manifest. Image paths resolve against the manifest directory.
SceneDataset load_scene(const std::filesystem::path& manifest);
/// Writes scene.json; image paths are stored relative to the manifest directory when possible.
void save_scene(const SceneDataset& dataset, const std::filesystem::path& manifest);
std::vector<Image> load_images(const SceneDataset& dataset);

struct ObjectMaskSet {
    std::string object_id;
    std::string category;
    std::vector<std::optional<BinaryMask>> masks;  // one per frame; absent = not present
    int presence_count = 0;
};

/// Reads masks/<object_id>/<frame>.png plus objects.json ({object_id: category}).
std::vector<ObjectMaskSet> load_masks(const std::filesystem::path& mask_dir, const SceneDataset& dataset);
void save_masks(const std::vector<ObjectMaskSet>& objects, const std::filesystem::path& mask_dir);

/// Keeps objects with presence_count >= threshold * n_frames, preserving order.
std::vector<ObjectMaskSet> retention_filter(const std::vector<ObjectMaskSet>& objects, int n_frames,
                                            double threshold = 0.8);

struct StyleRule {
    enum class Selector { Instance, Category };
    Selector selector = Selector::Instance;
    std::string key;  // object_id or category label
    std::filesystem::path style_image;
};

struct StyleConfig {
    std::vector<StyleRule> rules;
};

/// styles.json: {"rules": [{"instance": id | "category": label, "style": path}, ...]}.
StyleConfig load_style_config(const std::filesystem::path& path);

/// object_id -> style image. Instance rules override category rules. `known_ids` (all objects
/// before filtering) lets a rule on a filtered-out object be reported as dropped.
std::map<std::string, std::filesystem::path> assign_styles(const std::vector<ObjectMaskSet>& retained,
                                                           const StyleConfig& config,
                                                           const std::vector<std::string>& known_ids = {});

}  // namespace s2rf
