#include "s2rf/train.hpp"

#include <algorithm>
#include <set>

namespace s2rf {

using nlohmann::json;

void TrainConfig::validate() const {
    require(resolution >= 1, "resolution must be at least 1");
    require(sh_degree >= 0 && sh_degree <= kMaxShDegree, "sh_degree must be in [0, 2]");
    require(iterations >= 0 && style_iterations >= 0, "iteration counts must be non-negative");
    require(batch_rays >= 1, "batch_rays must be at least 1");
    require(lr_density > 0 && lr_sh > 0, "phase-1 learning rates must be positive");
    require(style_lr_density >= 0 && style_lr_sh >= 0, "phase-2 learning rates must be non-negative");
    require(chunk_rows >= 1, "chunk_rows must be at least 1");
    require(style_max_side >= 1, "style_max_side must be at least 1");
    require(optimizer == "rmsprop", "unsupported optimizer \"" + optimizer + "\" (only rmsprop)");
    require(rms_decay >= 0 && rms_decay < 1, "rms_decay must lie in [0, 1)");
    require(rms_epsilon > 0, "rms_epsilon must be positive");
    require(log_every >= 1, "log_every must be at least 1");
    weights.validate();
}

namespace {

template <typename T>
void take(const json& j, const char* key, T& out, std::set<std::string>& seen) {
    if (!j.contains(key)) return;
    seen.insert(key);
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ContractViolation(std::string("config key \"") + key + "\" has the wrong type");
    }
}

}  // namespace

void apply_config_json(TrainConfig& c, const json& j) {
    require(j.is_object(), "config must be a JSON object");
    std::set<std::string> seen;
    take(j, "resolution", c.resolution, seen);
    take(j, "sh_degree", c.sh_degree, seen);
    take(j, "init_density", c.init_density, seen);
    take(j, "iterations", c.iterations, seen);
    take(j, "batch_rays", c.batch_rays, seen);
    take(j, "lr_density", c.lr_density, seen);
    take(j, "lr_sh", c.lr_sh, seen);
    take(j, "style_iterations", c.style_iterations, seen);
    take(j, "style_lr_density", c.style_lr_density, seen);
    take(j, "style_lr_sh", c.style_lr_sh, seen);
    take(j, "chunk_rows", c.chunk_rows, seen);
    take(j, "style_max_side", c.style_max_side, seen);
    take(j, "normalize_per_object", c.normalize_per_object, seen);
    take(j, "masked_content", c.masked_content, seen);
    take(j, "optimizer", c.optimizer, seen);
    take(j, "rms_decay", c.rms_decay, seen);
    take(j, "rms_epsilon", c.rms_epsilon, seen);
    take(j, "lambda_tv", c.weights.lambda_tv, seen);
    take(j, "lambda_beta", c.weights.lambda_beta, seen);
    take(j, "lambda_s", c.weights.lambda_s, seen);
    take(j, "style_weight", c.weights.style_weight, seen);
    take(j, "step", c.step, seen);
    take(j, "jitter", c.jitter, seen);
    take(j, "seed", c.seed, seen);
    take(j, "deterministic", c.deterministic, seen);
    take(j, "log_every", c.log_every, seen);
    for (const auto& [k, _] : j.items())
        if (!seen.contains(k)) throw ContractViolation("unknown config key \"" + k + "\"");
}

json config_to_json(const TrainConfig& c) {
    return {{"resolution", c.resolution},
            {"sh_degree", c.sh_degree},
            {"init_density", c.init_density},
            {"iterations", c.iterations},
            {"batch_rays", c.batch_rays},
            {"lr_density", c.lr_density},
            {"lr_sh", c.lr_sh},
            {"style_iterations", c.style_iterations},
            {"style_lr_density", c.style_lr_density},
            {"style_lr_sh", c.style_lr_sh},
            {"chunk_rows", c.chunk_rows},
            {"style_max_side", c.style_max_side},
            {"normalize_per_object", c.normalize_per_object},
            {"masked_content", c.masked_content},
            {"optimizer", c.optimizer},
            {"rms_decay", c.rms_decay},
            {"rms_epsilon", c.rms_epsilon},
            {"lambda_tv", c.weights.lambda_tv},
            {"lambda_beta", c.weights.lambda_beta},
            {"lambda_s", c.weights.lambda_s},
            {"style_weight", c.weights.style_weight},
            {"step", c.step},
            {"jitter", c.jitter},
            {"seed", c.seed},
            {"deterministic", c.deterministic},
            {"log_every", c.log_every}};
}

RmsProp::RmsProp(const VoxelGrid& grid, double decay, double epsilon) : decay_(decay), eps_(epsilon) {
    state_.acc_density.assign(grid.n_active(), 0.0f);
    state_.acc_sh.assign(grid.sh_data().size(), 0.0f);
}

void RmsProp::step(VoxelGrid& grid, const GridGradients& grad, double lr_density, double lr_sh) {
    require(grad.matches(grid) && state_.acc_density.size() == grid.n_active(), "optimizer state does not match grid");
    const double keep = decay_, fresh = 1.0 - decay_, eps = eps_;
    auto update = [=](std::vector<float>& param, std::vector<float>& acc, const std::vector<double>& g, double lr) {
#pragma omp parallel for schedule(static)
        for (int64_t i = 0; i < int64_t(param.size()); ++i) {
            const double gi = g[size_t(i)];
            const double a = keep * acc[size_t(i)] + fresh * gi * gi;
            acc[size_t(i)] = float(a);
            if (gi != 0.0) param[size_t(i)] = float(param[size_t(i)] - lr * gi / (std::sqrt(a) + eps));
        }
    };
    update(grid.density_data(), state_.acc_density, grad.d_density, lr_density);
    update(grid.sh_data(), state_.acc_sh, grad.d_sh, lr_sh);
    ++state_.steps;
}

std::vector<TrainingRay> sample_ray_batch(const SceneDataset& ds, const std::vector<Image>& images,
                                          std::span<const int> frames, int count, std::mt19937_64& rng) {
    require(!frames.empty(), "no training frames to sample from");
    std::uniform_int_distribution<size_t> pick_frame(0, frames.size() - 1);
    std::uniform_int_distribution<int> pick_row(0, ds.height - 1), pick_col(0, ds.width - 1);
    std::vector<TrainingRay> batch(static_cast<size_t>(count));
    for (TrainingRay& tr : batch) {
        const int f = frames[pick_frame(rng)];
        const Pixel px{pick_row(rng), pick_col(rng)};
        tr.ray = generate_ray(ds.frames[size_t(f)].camera, px);
        tr.target = images[size_t(f)].pixel(px.row, px.col);
    }
    return batch;
}

MarchOptions training_march(const VoxelGrid& grid, const TrainConfig& cfg) {
    MarchOptions m;
    m.step = cfg.step > 0 ? cfg.step : default_step(grid);
    m.skip_empty = true;
    return m;
}

namespace {

struct RayWork {
    RaySamples samples;
    std::vector<SampleGradient> grads;
    Vec3 color;
    double t_fg = 1.0;
    double sparsity = 0;
};

/// Forward of one ray; with non-null d_color_fn also the per-sample gradients.
void trace(const VoxelGrid& grid, const Ray& ray, const MarchOptions& march, RayWork& w) {
    w.samples = march_ray(grid, ray, march);
    const RenderOutput out = composite(w.samples);
    w.color = out.color;
    w.t_fg = out.t_fg;
    w.sparsity = 0;
    for (const RaySample& s : w.samples) w.sparsity += sparsity_term(s.field.sigma);
    w.grads.clear();
}

void ray_backward(RayWork& w, const Vec3& d_color, double d_t_fg, double lambda_s) {
    w.grads = composite_backward(w.samples, d_color, d_t_fg);
    if (lambda_s != 0.0)
        for (size_t i = 0; i < w.samples.size(); ++i)
            w.grads[i].d_sigma += lambda_s * sparsity_term_grad(w.samples[i].field.sigma);
}

void scatter_atomic(const VoxelGrid& grid, const Ray& ray, const RayWork& w, GridGradients& acc) {
    const auto stride = size_t(grid.sh_stride());
    std::array<double, kMaxShFloats> d_sh{};
    for (size_t i = 0; i < w.samples.size(); ++i) {
        const RaySample& s = w.samples[i];
        const SampleGradient& g = w.grads[i];
        const std::span<double> d_sh_span(d_sh.data(), stride);
        eval_sh_backward(std::span<const double>(s.field.sh.data(), stride), grid.sh_degree(), ray.direction,
                         g.d_color, d_sh_span);
        for (int c = 0; c < s.field.n_corners; ++c) {
            const auto [slot, wt] = s.field.corners[c];
            if (slot == VoxelGrid::kEmptySlot) continue;
            const double ds = wt * g.d_sigma;
#pragma omp atomic
            acc.d_density[slot] += ds;
            double* dst = acc.d_sh.data() + size_t(slot) * stride;
            for (size_t j = 0; j < stride; ++j) {
                const double v = wt * d_sh[j];
#pragma omp atomic
                dst[j] += v;
            }
        }
    }
}

constexpr size_t kRayChunk = 256;

/// Runs forward (and backward when grad != nullptr) over a ray batch; returns loss terms without TV.
LossReport run_batch(const VoxelGrid& grid, std::span<const TrainingRay> batch, const TrainConfig& cfg,
                     GridGradients* grad) {
    const MarchOptions march = training_march(grid, cfg);
    const double inv_b = 1.0 / double(batch.size());
    const LossWeights& lw = cfg.weights;
    std::vector<double> sq(batch.size()), beta(batch.size()), sparsity(batch.size());

    auto forward_backward = [&](size_t i, RayWork& w) {
        trace(grid, batch[i].ray, march, w);
        const Vec3 diff = w.color - batch[i].target;
        sq[i] = dot(diff, diff);
        beta[i] = beta_term(w.t_fg);
        sparsity[i] = w.sparsity;
        if (grad) ray_backward(w, diff * (2.0 * inv_b), lw.lambda_beta * beta_term_grad(w.t_fg), lw.lambda_s);
    };

    if (!grad || cfg.deterministic) {
        // Parallel per-ray work, then gradients scattered in batch order.
        std::vector<RayWork> work(std::min(kRayChunk, batch.size()));
        for (size_t start = 0; start < batch.size(); start += kRayChunk) {
            const size_t n = std::min(kRayChunk, batch.size() - start);
#pragma omp parallel for schedule(dynamic, 8)
            for (int64_t k = 0; k < int64_t(n); ++k) forward_backward(start + size_t(k), work[size_t(k)]);
            if (grad)
                for (size_t k = 0; k < n; ++k) backprop_samples(grid, batch[start + k].ray, work[k].samples, work[k].grads, *grad);
        }
    } else {
#pragma omp parallel
        {
            RayWork w;
#pragma omp for schedule(dynamic, 8)
            for (int64_t i = 0; i < int64_t(batch.size()); ++i) {
                forward_backward(size_t(i), w);
                scatter_atomic(grid, batch[size_t(i)].ray, w, *grad);
            }
        }
    }

    double mse = 0, beta_sum = 0, sparsity_sum = 0;
    for (size_t i = 0; i < batch.size(); ++i) {
        mse += sq[i];
        beta_sum += beta[i];
        sparsity_sum += sparsity[i];
    }
    return rf_loss(mse * inv_b, 0.0, sparsity_sum, beta_sum, lw);
}

double batch_psnr(double mse_sum_channels) {
    const double per_element = mse_sum_channels / 3.0;
    return per_element <= 0 ? 99.0 : std::min(99.0, 10.0 * std::log10(1.0 / per_element));
}

}  // namespace

LossReport photoreal_step(const VoxelGrid& grid, std::span<const TrainingRay> batch, const TrainConfig& cfg,
                          GridGradients& grad) {
    require(!batch.empty(), "empty ray batch");
    require(grad.matches(grid), "gradient accumulator does not match the grid");
    grad.zero();
    LossReport r = run_batch(grid, batch, cfg, &grad);
    const double tv = tv_loss(grid, &grad, cfg.weights.lambda_tv);
    return rf_loss(r.mse, tv, r.sparsity, r.beta, cfg.weights);
}

LossReport photoreal_loss(const VoxelGrid& grid, std::span<const TrainingRay> batch, const TrainConfig& cfg) {
    require(!batch.empty(), "empty ray batch");
    LossReport r = run_batch(grid, batch, cfg, nullptr);
    return rf_loss(r.mse, tv_loss(grid), r.sparsity, r.beta, cfg.weights);
}

VoxelGrid initial_grid(const SceneDataset& ds, const TrainConfig& cfg) {
    return VoxelGrid::dense({cfg.resolution, cfg.resolution, cfg.resolution}, ds.bbox, cfg.sh_degree, cfg.init_density);
}

VoxelGrid train_photoreal(const SceneDataset& ds, const std::vector<Image>& images, const TrainConfig& cfg,
                          const LogSink& log) {
    cfg.validate();
    return train_photoreal(initial_grid(ds, cfg), ds, images, cfg, log);
}

VoxelGrid train_photoreal(VoxelGrid grid, const SceneDataset& ds, const std::vector<Image>& images,
                          const TrainConfig& cfg, const LogSink& log) {
    cfg.validate();
    require(images.size() == ds.frames.size(), "one image per frame required");
    if (cfg.iterations == 0) return grid;
    const std::vector<int> frames = ds.training_frames();
    std::mt19937_64 rng(cfg.seed);
    RmsProp opt(grid, cfg.rms_decay, cfg.rms_epsilon);
    GridGradients grad(grid);
    for (long it = 0; it < cfg.iterations; ++it) {
        const auto batch = sample_ray_batch(ds, images, frames, cfg.batch_rays, rng);
        const LossReport report = photoreal_step(grid, batch, cfg, grad);
        if (!std::isfinite(report.total))
            throw NumericError("photoreal loss became non-finite at iteration " + std::to_string(it));
        if (log && (it % cfg.log_every == 0 || it + 1 == cfg.iterations)) log(it, report, batch_psnr(report.mse));
        opt.step(grid, grad, cfg.lr_density, cfg.lr_sh);
    }
    return grid;
}

StyleTarget make_style_target(const std::string& object_id, const Image& style, const FeatureExtractor& fx,
                              int max_side) {
    StyleTarget t;
    t.object_id = object_id;
    t.image = limit_longest_side(style, max_side);
    t.features = fx.extract(t.image);
    return t;
}

StyleJob make_style_job(const std::vector<ObjectMaskSet>& retained,
                        const std::map<std::string, std::filesystem::path>& style_map, const FeatureExtractor& fx,
                        int max_side) {
    StyleJob job;
    std::map<std::filesystem::path, Image> cache;
    for (const ObjectMaskSet& o : retained) {
        const auto it = style_map.find(o.object_id);
        if (it == style_map.end()) continue;
        if (!cache.contains(it->second)) cache.emplace(it->second, read_png_rgb(it->second));
        job.objects.push_back(o);
        job.targets.push_back(make_style_target(o.object_id, cache.at(it->second), fx, max_side));
    }
    return job;
}

namespace {

/// Builds the per-tap masked targets for one frame; `storage` owns the downsampled masks.
std::vector<MaskedTarget> frame_targets(const FeatureMap& tap, size_t tap_index, const std::vector<const BinaryMask*>& masks,
                                        const std::vector<const StyleTarget*>& targets, std::vector<BinaryMask>& storage) {
    storage.clear();
    storage.reserve(masks.size());
    for (const BinaryMask* m : masks)
        storage.push_back(m ? downsample_mask(*m, tap.height, tap.width) : BinaryMask(tap.width, tap.height));
    std::vector<MaskedTarget> out;
    for (size_t o = 0; o < targets.size(); ++o) out.push_back({&targets[o]->features[tap_index], &storage[o]});
    return out;
}

}  // namespace

double masked_style_distance(const Image& rendered, const std::vector<const BinaryMask*>& masks,
                             const std::vector<const StyleTarget*>& targets, const FeatureExtractor& fx,
                             bool normalize_per_object) {
    require(masks.size() == targets.size(), "one mask per style target required");
    const std::vector<FeatureMap> taps = fx.extract(rendered);
    double total = 0;
    std::vector<BinaryMask> storage;
    for (size_t t = 0; t < taps.size(); ++t) {
        const auto mt = frame_targets(taps[t], t, masks, targets, storage);
        total += masked_nnfm_loss(taps[t], mt, normalize_per_object).value;
    }
    return total / double(taps.size());
}

StyleStepResult stylize_step(const VoxelGrid& grid, const SceneDataset& ds, const std::vector<Image>& images, int frame,
                             const StyleJob& job, const FeatureExtractor& fx, const TrainConfig& cfg,
                             GridGradients& grad) {
    require(grad.matches(grid), "gradient accumulator does not match the grid");
    require(frame >= 0 && frame < int(ds.frames.size()), "frame index out of range");
    grad.zero();
    const Camera& cam = ds.frames[size_t(frame)].camera;
    const Image& target = images[size_t(frame)];
    const int W = cam.width, H = cam.height;
    const MarchOptions march = training_march(grid, cfg);
    const LossWeights& lw = cfg.weights;

    // Forward, chunk by chunk.
    Image rendered(W, H);
    std::vector<double> t_fg(size_t(W) * H);
    std::vector<double> row_sparsity(size_t(H), 0.0);
    for (int r0 = 0; r0 < H; r0 += cfg.chunk_rows) {
        const int r1 = std::min(H, r0 + cfg.chunk_rows);
#pragma omp parallel for schedule(dynamic, 1)
        for (int r = r0; r < r1; ++r) {
            RayWork w;
            for (int c = 0; c < W; ++c) {
                trace(grid, generate_ray(cam, {r, c}), march, w);
                float* px = rendered.at(r, c);
                for (int k = 0; k < 3; ++k) px[k] = float(w.color[k]);
                t_fg[size_t(r) * W + c] = w.t_fg;
                row_sparsity[size_t(r)] += w.sparsity;
            }
        }
    }

    // Objects' masks in this frame.
    std::vector<const BinaryMask*> masks;
    std::vector<const StyleTarget*> targets;
    for (size_t o = 0; o < job.objects.size(); ++o) {
        const auto& m = job.objects[o].masks;
        masks.push_back(size_t(frame) < m.size() && m[size_t(frame)] ? &*m[size_t(frame)] : nullptr);
        targets.push_back(&job.targets[o]);
    }

    // Photometric term.
    std::vector<uint8_t> content(size_t(W) * H, 1);
    if (cfg.masked_content) {
        std::ranges::fill(content, uint8_t{0});
        for (const BinaryMask* m : masks)
            if (m)
                for (size_t i = 0; i < content.size(); ++i) content[i] |= m->bits[i];
    }
    const auto n_content = size_t(std::ranges::count(content, uint8_t{1}));
    std::vector<Vec3> d_color(size_t(W) * H);
    double mse = 0;
    if (n_content > 0) {
        const double inv_n = 1.0 / double(n_content);
        for (size_t i = 0; i < content.size(); ++i) {
            if (!content[i]) continue;
            const Vec3 diff{double(rendered.rgb[3 * i]) - target.rgb[3 * i],
                            double(rendered.rgb[3 * i + 1]) - target.rgb[3 * i + 1],
                            double(rendered.rgb[3 * i + 2]) - target.rgb[3 * i + 2]};
            mse += dot(diff, diff) * inv_n;
            d_color[i] = diff * (2.0 * inv_n);
        }
    }

    // Style term through the extractor.
    double style = 0;
    if (!job.targets.empty()) {
        ForwardCache cache;
        const std::vector<FeatureMap> taps = fx.extract(rendered, cache);
        const double inv_taps = 1.0 / double(taps.size());
        std::vector<FeatureMap> d_taps;
        std::vector<BinaryMask> storage;
        bool any = false;
        for (size_t t = 0; t < taps.size(); ++t) {
            const auto mt = frame_targets(taps[t], t, masks, targets, storage);
            NnfmResult res = masked_nnfm_loss(taps[t], mt, cfg.normalize_per_object);
            style += res.value * inv_taps;
            for (float& g : res.grad.data) g = float(g * lw.style_weight * inv_taps);
            any = any || res.value != 0.0;
            d_taps.push_back(std::move(res.grad));
        }
        if (any && lw.style_weight != 0.0) {
            const Image d_image = fx.backward(cache, d_taps);
            for (size_t i = 0; i < d_color.size(); ++i)
                for (int k = 0; k < 3; ++k) d_color[i][k] += d_image.rgb[3 * i + size_t(k)];
        }
    }

    // Backward, re-marching each chunk.
    double beta = 0;
    for (double t : t_fg) beta += beta_term(t);
    std::vector<RayWork> work(size_t(W) * std::min(H, cfg.chunk_rows));
    std::vector<Ray> rays(work.size());
    for (int r0 = 0; r0 < H; r0 += cfg.chunk_rows) {
        const int r1 = std::min(H, r0 + cfg.chunk_rows);
        const int n = (r1 - r0) * W;
#pragma omp parallel for schedule(dynamic, 16)
        for (int k = 0; k < n; ++k) {
            const size_t pix = size_t(r0) * W + size_t(k);
            const Vec3 dc = d_color[pix];
            const double dt = lw.lambda_beta * beta_term_grad(t_fg[pix]);
            RayWork& w = work[size_t(k)];
            w.samples.clear();
            w.grads.clear();
            rays[size_t(k)] = generate_ray(cam, {r0 + k / W, k % W});
            if (dc == Vec3{} && dt == 0.0 && lw.lambda_s == 0.0) continue;
            trace(grid, rays[size_t(k)], march, w);
            ray_backward(w, dc, dt, lw.lambda_s);
        }
        for (int k = 0; k < n; ++k) backprop_samples(grid, rays[size_t(k)], work[size_t(k)].samples, work[size_t(k)].grads, grad);
    }

    const double tv = tv_loss(grid, &grad, lw.lambda_tv);
    double sparsity = 0;
    for (double s : row_sparsity) sparsity += s;
    StyleStepResult out;
    out.report = rf_loss(mse, tv, sparsity, beta, lw);
    out.report.style = style;
    out.report.total = total_style_loss(out.report.total, style, lw.style_weight);
    out.psnr = psnr(rendered, target);
    return out;
}

VoxelGrid stylize(VoxelGrid grid, const SceneDataset& ds, const std::vector<Image>& images, const StyleJob& job,
                  const FeatureExtractor& fx, const TrainConfig& cfg, const LogSink& log) {
    cfg.validate();
    require(images.size() == ds.frames.size(), "one image per frame required");
    require(job.objects.size() == job.targets.size(), "style job objects and targets differ in count");
    if (cfg.style_iterations == 0) return grid;
    const std::vector<int> frames = ds.training_frames();
    require(!frames.empty(), "no training frames for stylization");
    std::mt19937_64 rng(cfg.seed ^ 0x5354594c45ULL);
    std::uniform_int_distribution<size_t> pick(0, frames.size() - 1);
    RmsProp opt(grid, cfg.rms_decay, cfg.rms_epsilon);
    GridGradients grad(grid);
    for (long it = 0; it < cfg.style_iterations; ++it) {
        const int frame = frames[pick(rng)];
        const StyleStepResult r = stylize_step(grid, ds, images, frame, job, fx, cfg, grad);
        if (!std::isfinite(r.report.total))
            throw NumericError("stylization loss became non-finite at iteration " + std::to_string(it));
        if (log && (it % cfg.log_every == 0 || it + 1 == cfg.style_iterations)) log(it, r.report, r.psnr);
        opt.step(grid, grad, cfg.style_lr_density, cfg.style_lr_sh);
    }
    return grid;
}

std::vector<double> evaluate_psnr(const VoxelGrid& grid, const SceneDataset& ds, const std::vector<Image>& images,
                                  std::span<const int> frames, const RenderOptions& opts) {
    std::vector<double> out;
    for (int f : frames) {
        require(f >= 0 && f < int(ds.frames.size()), "frame index out of range");
        out.push_back(psnr(render_image(grid, ds.frames[size_t(f)].camera, opts).rgb, images[size_t(f)]));
    }
    return out;
}

}  // namespace s2rf
