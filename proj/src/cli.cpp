#include "s2rf/cli.hpp"

#include <cstdio>
#include <fstream>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"
#include "s2rf/binary_io.hpp"
#include "s2rf/camera_path.hpp"
#include "s2rf/parallel.hpp"
#include "s2rf/synthetic.hpp"
#include "s2rf/train.hpp"

namespace s2rf {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Options {
    std::string scene, masks, styles, config, out, checkpoint, poses, weights, frames = "holdout";
    std::vector<std::string> taps;
    std::optional<uint64_t> seed;
    std::optional<int> iterations, style_iterations;
    bool deterministic = false;
    double threshold = 0.8;
};

fs::path manifest_path(const std::string& scene) {
    const fs::path p(scene);
    return fs::is_directory(p) ? p / "scene.json" : p;
}

TrainConfig read_config(const Options& o) {
    TrainConfig c;
    if (!o.config.empty()) {
        const fs::path p(o.config);
        if (!fs::exists(p)) throw ContractViolation("config file not found: " + o.config);
        if (p.extension() == ".toml")
            throw ContractViolation("TOML configs are not supported by this build; write the config as JSON");
        std::ifstream in(p);
        json j;
        try {
            j = json::parse(in);
        } catch (const json::exception& e) {
            throw ContractViolation("config " + o.config + " is not valid JSON: " + e.what());
        }
        apply_config_json(c, j);
    }
    if (o.seed) c.seed = *o.seed;
    if (o.deterministic) c.deterministic = true;
    if (o.iterations) c.iterations = *o.iterations;
    if (o.style_iterations) c.style_iterations = *o.style_iterations;
    c.validate();
    return c;
}

void require_flag(const std::string& value, const char* flag, const char* cmd) {
    if (value.empty()) throw ContractViolation(std::string(cmd) + ": " + flag + " is required");
}

std::string frame_name(const char* prefix, size_t i) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s_%03zu.png", prefix, i);
    return buf;
}

/// JSON-lines log; the first line records the run's seed and effective config.
class RunLog {
public:
    RunLog(const fs::path& path, const std::string& command, const TrainConfig& cfg, std::ostream& echo)
        : file_(path), echo_(echo) {
        if (!file_) throw std::runtime_error("cannot write log " + path.string());
        const json head = {{"event", "start"}, {"command", command}, {"seed", cfg.seed}, {"config", config_to_json(cfg)},
                           {"threads", thread_count()}};
        file_ << head.dump() << '\n';
    }
    LogSink sink() {
        return [this](long it, const LossReport& r, double psnr) {
            const std::string line = loss_log_line(it, r, psnr);
            file_ << line << '\n';
            file_.flush();
            echo_ << line << '\n';
        };
    }
    void event(const json& j) { file_ << j.dump() << '\n'; }

private:
    std::ofstream file_;
    std::ostream& echo_;
};

std::vector<int> evaluation_frames(const SceneDataset& ds, const std::string& which) {
    if (which == "holdout") {
        if (!ds.holdout.empty()) return ds.holdout;
        return ds.training_frames();
    }
    if (which == "all") {
        std::vector<int> all(ds.frames.size());
        for (size_t i = 0; i < all.size(); ++i) all[i] = int(i);
        return all;
    }
    if (which == "train") return ds.training_frames();
    throw ContractViolation("--frames must be holdout, train or all");
}

json psnr_report(const std::vector<int>& frames, const std::vector<double>& values) {
    double mean = 0;
    for (double v : values) mean += v;
    if (!values.empty()) mean /= double(values.size());
    return {{"frames", frames}, {"psnr", values}, {"mean", mean}};
}

void write_text(const fs::path& path, const std::string& text) {
    write_file_atomic(path, std::vector<uint8_t>(text.begin(), text.end()));
}

int cmd_train(const Options& o, std::ostream& out) {
    require_flag(o.scene, "--scene", "train");
    require_flag(o.out, "--out", "train");
    const SceneDataset ds = load_scene(manifest_path(o.scene));
    const std::vector<Image> images = load_images(ds);
    const TrainConfig cfg = read_config(o);

    const fs::path dir(o.out);
    fs::create_directories(dir);
    RunLog log(dir / "train_log.jsonl", "train", cfg, out);
    const VoxelGrid grid = train_photoreal(ds, images, cfg, log.sink());
    save_checkpoint(grid, dir / "checkpoint.s2ck");

    RenderOptions ro;
    ro.march = training_march(grid, cfg);
    const std::vector<int> frames = evaluation_frames(ds, "holdout");
    const json report = psnr_report(frames, evaluate_psnr(grid, ds, images, frames, ro));
    write_text(dir / "psnr.json", report.dump(2) + "\n");
    out << "held-out PSNR: " << report["mean"].get<double>() << " dB\n";
    return kExitOk;
}

json retention_report(const std::vector<ObjectMaskSet>& all, const std::vector<ObjectMaskSet>& kept, int n_frames,
                      double threshold) {
    json retained = json::array(), dropped = json::array();
    for (const ObjectMaskSet& o : all) {
        const bool keep = std::ranges::any_of(kept, [&](const ObjectMaskSet& k) { return k.object_id == o.object_id; });
        json entry = {{"object_id", o.object_id},
                      {"category", o.category},
                      {"presence_count", o.presence_count},
                      {"presence_fraction", double(o.presence_count) / n_frames}};
        (keep ? retained : dropped).push_back(entry);
    }
    return {{"threshold", threshold}, {"n_frames", n_frames}, {"retained", retained}, {"dropped", dropped}};
}

int cmd_filter_masks(const Options& o, std::ostream& out) {
    require_flag(o.scene, "--scene", "filter-masks");
    require_flag(o.masks, "--masks", "filter-masks");
    require(o.threshold >= 0 && o.threshold <= 1, "--threshold must lie in [0, 1]");
    const SceneDataset ds = load_scene(manifest_path(o.scene));
    const auto objects = load_masks(o.masks, ds);
    const int n = int(ds.frames.size());
    const json report = retention_report(objects, retention_filter(objects, n, o.threshold), n, o.threshold);
    if (!o.out.empty()) {
        fs::create_directories(o.out);
        write_text(fs::path(o.out) / "retention.json", report.dump(2) + "\n");
    }
    out << report.dump(2) << '\n';
    return kExitOk;
}

FeatureExtractor make_extractor(const Options& o, const TrainConfig& cfg) {
    if (o.weights.empty()) return make_seeded_extractor(cfg.seed);
    return load_weights(o.weights, o.taps.empty() ? std::vector<std::string>{"relu3_1", "relu4_1"} : o.taps);
}

std::vector<int> preview_frames(const SceneDataset& ds) {
    const std::vector<int> train = ds.training_frames();
    std::vector<int> out;
    for (size_t k = 0; k < 3 && k < train.size(); ++k) out.push_back(train[k * train.size() / 3]);
    return out;
}

int cmd_stylize(const Options& o, std::ostream& out) {
    require_flag(o.checkpoint, "--checkpoint", "stylize");
    require_flag(o.scene, "--scene", "stylize");
    require_flag(o.masks, "--masks", "stylize");
    require_flag(o.styles, "--styles", "stylize");
    require_flag(o.out, "--out", "stylize");
    require(o.threshold >= 0 && o.threshold <= 1, "--threshold must lie in [0, 1]");
    VoxelGrid grid = load_checkpoint(o.checkpoint);
    const SceneDataset ds = load_scene(manifest_path(o.scene));
    const std::vector<Image> images = load_images(ds);
    const TrainConfig cfg = read_config(o);
    const auto objects = load_masks(o.masks, ds);
    const auto retained = retention_filter(objects, int(ds.frames.size()), o.threshold);
    std::vector<std::string> known;
    for (const ObjectMaskSet& m : objects) known.push_back(m.object_id);
    const auto style_map = assign_styles(retained, load_style_config(o.styles), known);
    const FeatureExtractor fx = make_extractor(o, cfg);
    const StyleJob job = make_style_job(retained, style_map, fx, cfg.style_max_side);

    const fs::path dir(o.out);
    fs::create_directories(dir / "renders");
    RunLog log(dir / "style_log.jsonl", "stylize", cfg, out);
    for (const auto& [id, path] : style_map) log.event({{"event", "style"}, {"object_id", id}, {"style", path.string()}});

    RenderOptions ro;
    ro.march = training_march(grid, cfg);
    const std::vector<int> previews = preview_frames(ds);
    for (size_t i = 0; i < previews.size(); ++i)
        write_png_rgb(dir / "renders" / frame_name("before", i),
                      quantize_8bit(render_image(grid, ds.frames[size_t(previews[i])].camera, ro).rgb));
    grid = stylize(std::move(grid), ds, images, job, fx, cfg, log.sink());
    save_checkpoint(grid, dir / "stylized.s2ck");
    for (size_t i = 0; i < previews.size(); ++i)
        write_png_rgb(dir / "renders" / frame_name("after", i),
                      quantize_8bit(render_image(grid, ds.frames[size_t(previews[i])].camera, ro).rgb));
    out << "styled " << job.objects.size() << " object(s); wrote " << (dir / "stylized.s2ck").string() << '\n';
    return kExitOk;
}

int cmd_render(const Options& o, std::ostream& out) {
    require_flag(o.checkpoint, "--checkpoint", "render");
    require_flag(o.out, "--out", "render");
    if (o.poses.empty() == o.scene.empty()) throw ContractViolation("render: give exactly one of --poses or --scene");
    const VoxelGrid grid = load_checkpoint(o.checkpoint);
    std::vector<Camera> cams;
    if (!o.poses.empty()) {
        cams = load_pose_file(o.poses);
    } else {
        for (const FrameRecord& f : load_scene(manifest_path(o.scene)).frames) cams.push_back(f.camera);
    }
    RenderOptions ro;
    ro.march.step = default_step(grid);
    fs::create_directories(o.out);
    for (size_t i = 0; i < cams.size(); ++i)
        write_png_rgb(fs::path(o.out) / frame_name("frame", i), quantize_8bit(render_image(grid, cams[i], ro).rgb));
    out << "rendered " << cams.size() << " frame(s) to " << o.out << '\n';
    return kExitOk;
}

int cmd_psnr(const Options& o, std::ostream& out) {
    require_flag(o.checkpoint, "--checkpoint", "psnr");
    require_flag(o.scene, "--scene", "psnr");
    const VoxelGrid grid = load_checkpoint(o.checkpoint);
    const SceneDataset ds = load_scene(manifest_path(o.scene));
    const std::vector<Image> images = load_images(ds);
    const std::vector<int> frames = evaluation_frames(ds, o.frames);
    RenderOptions ro;
    ro.march.step = default_step(grid);
    out << psnr_report(frames, evaluate_psnr(grid, ds, images, frames, ro)).dump(2) << '\n';
    return kExitOk;
}

int cmd_synth(const Options& o, std::ostream& out) {
    require_flag(o.out, "--out", "synth");
    SyntheticScene scene = generate_synthetic_scene(SyntheticSpec{});
    const fs::path dir(o.out);
    write_synthetic_scene(scene, dir);
    fs::create_directories(dir / "styles");
    write_png_rgb(dir / "styles" / "checker.png", make_checkerboard(128, 16, {0.05, 0.05, 0.6}, {0.95, 0.95, 0.2}));
    write_png_rgb(dir / "styles" / "stripes.png", make_stripes(128, 12, {0.9, 0.1, 0.1}, {0.95, 0.95, 0.95}));
    const json instance = {{"rules", {{{"instance", "sphere_a"}, {"style", "checker.png"}}}}};
    const json category = {{"rules", {{{"category", "sphere"}, {"style", "checker.png"}}}}};
    const json both = {{"rules",
                        {{{"instance", "sphere_a"}, {"style", "checker.png"}}, {{"instance", "sphere_b"}, {"style", "stripes.png"}}}}};
    write_text(dir / "styles" / "instance.json", instance.dump(2) + "\n");
    write_text(dir / "styles" / "category.json", category.dump(2) + "\n");
    write_text(dir / "styles" / "two_instances.json", both.dump(2) + "\n");
    write_text(dir / "styles" / "none.json", json{{"rules", json::array()}}.dump(2) + "\n");
    out << "wrote synthetic scene to " << dir.string() << '\n';
    return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Sparse-voxel radiance fields with per-object style transfer"};
    app.require_subcommand(1);
    Options o;

    auto add_seed = [&](CLI::App* c) {
        c->add_option("--seed", o.seed, "RNG seed (overrides the config)");
        c->add_flag("--deterministic", o.deterministic, "Fixed reduction order (byte-identical reruns)");
    };
    auto add_iters = [&](CLI::App* c) {
        c->add_option("--iterations", o.iterations, "Phase-1 iterations (overrides the config)");
        c->add_option("--style-iterations", o.style_iterations, "Phase-2 iterations (overrides the config)");
    };

    CLI::App* train = app.add_subcommand("train", "Reconstruct a radiance field from a scene");
    train->add_option("--scene", o.scene, "scene.json or its directory");
    train->add_option("--config", o.config, "JSON training config");
    train->add_option("--out", o.out, "Output directory");
    add_seed(train);
    add_iters(train);

    CLI::App* stylize_cmd = app.add_subcommand("stylize", "Stylize masked objects of a trained field");
    stylize_cmd->add_option("--checkpoint", o.checkpoint, "Phase-1 checkpoint");
    stylize_cmd->add_option("--scene", o.scene, "scene.json or its directory");
    stylize_cmd->add_option("--masks", o.masks, "Mask directory (masks/<object>/<frame>.png + objects.json)");
    stylize_cmd->add_option("--styles", o.styles, "Style rules (JSON)");
    stylize_cmd->add_option("--config", o.config, "JSON training config");
    stylize_cmd->add_option("--out", o.out, "Output directory");
    stylize_cmd->add_option("--threshold", o.threshold, "Retention threshold (fraction of frames)");
    stylize_cmd->add_option("--weights", o.weights, "Extractor weights (S2FW); default is the seeded extractor");
    stylize_cmd->add_option("--taps", o.taps, "Tap layer names for --weights (default relu3_1 relu4_1)");
    add_seed(stylize_cmd);
    add_iters(stylize_cmd);

    CLI::App* render = app.add_subcommand("render", "Render a checkpoint from poses");
    render->add_option("--checkpoint", o.checkpoint, "Checkpoint to render");
    render->add_option("--poses", o.poses, "Pose file (JSON)");
    render->add_option("--scene", o.scene, "Render the cameras of this scene instead");
    render->add_option("--out", o.out, "Output directory");

    CLI::App* filter = app.add_subcommand("filter-masks", "Apply the presence-retention rule to object masks");
    filter->add_option("--masks", o.masks, "Mask directory");
    filter->add_option("--scene", o.scene, "scene.json or its directory");
    filter->add_option("--threshold", o.threshold, "Minimum fraction of frames an object must appear in");
    filter->add_option("--out", o.out, "Directory for retention.json");

    CLI::App* psnr_cmd = app.add_subcommand("psnr", "PSNR of a checkpoint against scene images");
    psnr_cmd->add_option("--checkpoint", o.checkpoint, "Checkpoint");
    psnr_cmd->add_option("--scene", o.scene, "scene.json or its directory");
    psnr_cmd->add_option("--frames", o.frames, "holdout, train or all");

    CLI::App* synth = app.add_subcommand("synth", "Write the synthetic two-sphere scene with masks and styles");
    synth->add_option("--out", o.out, "Output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        configure_threads();
        if (train->parsed()) return cmd_train(o, out);
        if (stylize_cmd->parsed()) return cmd_stylize(o, out);
        if (render->parsed()) return cmd_render(o, out);
        if (filter->parsed()) return cmd_filter_masks(o, out);
        if (psnr_cmd->parsed()) return cmd_psnr(o, out);
        if (synth->parsed()) return cmd_synth(o, out);
    } catch (const SceneError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const ContractViolation& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const FormatError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const NumericError& e) {
        err << "numeric failure: " << e.what() << '\n';
        return kExitRuntime;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitUsage;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    std::vector<const char*> argv{"s2rf"};
    for (const std::string& a : args) argv.push_back(a.c_str());
    return run_cli(int(argv.size()), argv.data(), out, err);
}

}  // namespace s2rf
