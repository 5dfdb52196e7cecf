#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "s2rf/features.hpp"
#include "s2rf/grid.hpp"
#include "s2rf/loss.hpp"
#include "s2rf/nnfm.hpp"
#include "s2rf/render.hpp"
#include "s2rf/scene.hpp"

namespace s2rf {

struct TrainConfig {
    // Grid created for phase 1.
    uint32_t resolution = 64;
    int sh_degree = 2;
    float init_density = 0.1f;

    // Phase 1 (photoreal reconstruction).
    int iterations = 10000;
    int batch_rays = 4096;
    double lr_density = 0.3;
    double lr_sh = 0.01;

    // Phase 2 (stylization). Learning rates may be 0 here.
    int style_iterations = 1000;
    double style_lr_density = 0.3;
    double style_lr_sh = 0.01;
    int chunk_rows = 16;
    int style_max_side = 512;
    bool normalize_per_object = false;
    /// Non-canonical: restrict the photometric term to styled-object pixels.
    bool masked_content = false;

    std::string optimizer = "rmsprop";
    double rms_decay = 0.95;
    double rms_epsilon = 1e-8;
    LossWeights weights;

    double step = 0.0;  // <= 0 selects half a voxel edge
    bool jitter = false;
    uint64_t seed = 0;
    bool deterministic = true;
    int log_every = 50;

    void validate() const;
};

/// Overlays the keys present in `j` onto `cfg`; unknown keys are rejected.
void apply_config_json(TrainConfig& cfg, const nlohmann::json& j);
nlohmann::json config_to_json(const TrainConfig& cfg);

/// Per-slot second-moment accumulators of the RMSProp-style optimizer.
struct OptimState {
    std::vector<float> acc_density;
    std::vector<float> acc_sh;
    long steps = 0;
};

class RmsProp {
public:
    RmsProp(const VoxelGrid& grid, double decay, double epsilon = 1e-8);
    /// acc = decay acc + (1 - decay) g^2; p -= lr g / (sqrt(acc) + eps).
    void step(VoxelGrid& grid, const GridGradients& grad, double lr_density, double lr_sh);
    const OptimState& state() const { return state_; }

private:
    OptimState state_;
    double decay_;
    double eps_;
};

/// Called every `log_every` iterations and on the last one.
using LogSink = std::function<void(long iter, const LossReport& report, double psnr)>;

struct TrainingRay {
    Ray ray;
    Vec3 target;
};

std::vector<TrainingRay> sample_ray_batch(const SceneDataset& ds, const std::vector<Image>& images,
                                          std::span<const int> frames, int count, std::mt19937_64& rng);

/// MarchOptions used for training and evaluation with `cfg` on `grid`.
MarchOptions training_march(const VoxelGrid& grid, const TrainConfig& cfg);

/// Forward and backward for one ray batch: fills `grad` (zeroed first) with d(L_rf)/d(params), returns the terms.
LossReport photoreal_step(const VoxelGrid& grid, std::span<const TrainingRay> batch, const TrainConfig& cfg,
                          GridGradients& grad);
/// Forward only; same value photoreal_step reports.
LossReport photoreal_loss(const VoxelGrid& grid, std::span<const TrainingRay> batch, const TrainConfig& cfg);

/// Dense grid over the dataset bbox per the config.
VoxelGrid initial_grid(const SceneDataset& ds, const TrainConfig& cfg);

/// Phase 1. Throws NumericError if the loss becomes non-finite.
VoxelGrid train_photoreal(const SceneDataset& ds, const std::vector<Image>& images, const TrainConfig& cfg,
                          const LogSink& log = {});
VoxelGrid train_photoreal(VoxelGrid grid, const SceneDataset& ds, const std::vector<Image>& images,
                          const TrainConfig& cfg, const LogSink& log = {});

/// Style features for one style image.
struct StyleTarget {
    std::string object_id;
    Image image;
    std::vector<FeatureMap> features;  // one per extractor tap
};

StyleTarget make_style_target(const std::string& object_id, const Image& style, const FeatureExtractor& fx,
                              int max_side);

/// Phase 2 inputs: the styled objects (each with its per-frame masks) and their targets.
struct StyleJob {
    std::vector<ObjectMaskSet> objects;  // only objects that carry a style, same order as targets
    std::vector<StyleTarget> targets;
};

/// Builds the job from retained objects and an object_id -> style image map.
StyleJob make_style_job(const std::vector<ObjectMaskSet>& retained,
                        const std::map<std::string, std::filesystem::path>& style_map, const FeatureExtractor& fx,
                        int max_side);

struct StyleStepResult {
    LossReport report;  // style = L_mnnfm; total = L_rf + style_weight * L_mnnfm
    double psnr = 0;
};

/// One full-image step on `frame`: chunked forward, image-space gradient, chunked re-marching backward.
StyleStepResult stylize_step(const VoxelGrid& grid, const SceneDataset& ds, const std::vector<Image>& images,
                             int frame, const StyleJob& job, const FeatureExtractor& fx, const TrainConfig& cfg,
                             GridGradients& grad);

/// Phase 2.
VoxelGrid stylize(VoxelGrid grid, const SceneDataset& ds, const std::vector<Image>& images, const StyleJob& job,
                  const FeatureExtractor& fx, const TrainConfig& cfg, const LogSink& log = {});

/// Masked NNFM objective of a rendered image (mean over taps), as used by stylization.
double masked_style_distance(const Image& rendered, const std::vector<const BinaryMask*>& masks,
                             const std::vector<const StyleTarget*>& targets, const FeatureExtractor& fx,
                             bool normalize_per_object = false);

/// PSNR per frame of full renders against the dataset images.
std::vector<double> evaluate_psnr(const VoxelGrid& grid, const SceneDataset& ds, const std::vector<Image>& images,
                                  std::span<const int> frames, const RenderOptions& opts);

}  // namespace s2rf
