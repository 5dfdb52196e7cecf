// End-to-end acceptance suite. Prints one PASS/FAIL line per criterion; exit status 0 iff all pass.
// Usage: s2rf-acceptance [criterion numbers...]
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"
#include "s2rf/cli.hpp"
#include "s2rf/nnfm.hpp"
#include "s2rf/parallel.hpp"
#include "s2rf/synthetic.hpp"
#include "s2rf/train.hpp"
#include "support.hpp"

using namespace s2rf;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances and budgets.
constexpr double kGradRelTol = 1e-3;
constexpr double kGradFdStep = 1e-3;
constexpr double kGradSkip = 1e-8;
constexpr double kGradPassFraction = 0.99;
constexpr double kGradBudgetSec = 60;
constexpr double kCompositeTol = 1e-6;
constexpr double kPartitionTol = 1e-5;
constexpr int kCompositeBatches = 1000;
constexpr int kNnfmCases = 100;
constexpr double kNnfmLossTol = 1e-6;
constexpr double kNnfmBudgetSec = 60;
constexpr double kMnnfmTol = 1e-6;
constexpr double kRetentionThreshold = 0.8;
constexpr double kTvEps = 1e-8;
constexpr double kPhotorealPsnr = 30.0;
constexpr double kPhotorealBudgetSec = 15 * 60;
constexpr double kStyleDrop = 0.40;
constexpr double kOffMaskChange = 0.05;
constexpr double kMaskedChange = 0.05;
constexpr double kRegionDifference = 0.05;
constexpr double kStyleBudgetSec = 20 * 60;

// Run settings for the end-to-end criteria.
constexpr int kPhotorealIterations = 600;
constexpr int kStyleIterations = 100;
constexpr uint64_t kExtractorSeed = 7;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof(buf), f, args...);
    return buf;
}

Vec3 random_unit(std::mt19937_64& rng) {
    std::normal_distribution<double> n(0, 1);
    return normalize(Vec3{n(rng), n(rng), n(rng)});
}

// 1 -------------------------------------------------------------------------
Outcome gradient_fidelity() {
    const auto t0 = Clock::now();
    VoxelGrid g = test::random_grid(8, 2, 101, -0.5, 3.0, 1.0);
    std::mt19937_64 rng(102);
    std::uniform_real_distribution<double> u(0, 1), inside(-0.8, 0.8);
    std::vector<TrainingRay> batch;
    for (int i = 0; i < 16; ++i) {
        TrainingRay tr;
        tr.ray.origin = random_unit(rng) * 3.0;
        tr.ray.direction = normalize(Vec3{inside(rng), inside(rng), inside(rng)} - tr.ray.origin);
        tr.target = {u(rng), u(rng), u(rng)};
        batch.push_back(tr);
    }
    TrainConfig cfg;
    cfg.weights = LossWeights{1e-2, 1e-3, 1e-3, 1.0};
    cfg.deterministic = true;

    GridGradients grad(g);
    photoreal_step(g, batch, cfg, grad);
    size_t tested = 0, good = 0;
    double worst = 0;
    auto probe = [&](float& p, double analytic) {
        if (std::abs(analytic) < kGradSkip) return;
        const float orig = p;
        p = float(orig + kGradFdStep);
        const float hi = p;
        const double fp = photoreal_loss(g, batch, cfg).total;
        p = float(orig - kGradFdStep);
        const float lo = p;
        const double fm = photoreal_loss(g, batch, cfg).total;
        p = orig;
        const double fd = (fp - fm) / (double(hi) - double(lo));
        const double rel = std::abs(analytic - fd) / std::max(std::abs(analytic), std::abs(fd));
        ++tested;
        if (rel <= kGradRelTol) ++good;
        worst = std::max(worst, rel);
    };
    for (size_t i = 0; i < g.n_active(); ++i) probe(g.density_data()[i], grad.d_density[i]);
    for (size_t i = 0; i < g.sh_data().size(); ++i) probe(g.sh_data()[i], grad.d_sh[i]);
    const double frac = tested ? double(good) / double(tested) : 0.0;
    const double secs = seconds_since(t0);
    return {tested > 1000 && frac >= kGradPassFraction && secs <= kGradBudgetSec,
            fmt("%zu params tested, %.4f%% within rel %.0e (worst %.2e), %.1f s", tested, 100 * frac, kGradRelTol, worst,
                secs)};
}

// 2 -------------------------------------------------------------------------
Outcome compositing_oracle() {
    std::mt19937_64 rng(202);
    std::uniform_real_distribution<double> u(0, 1);
    std::uniform_int_distribution<int> len(0, 64);
    const VoxelGrid g = test::random_grid(10, 1, 203, -1.0, 6.0);
    MarchOptions m;
    m.step = default_step(g);
    double worst_color = 0, worst_sum = 0;
    for (int b = 0; b < kCompositeBatches; ++b) {
        RaySampleBatch batch;
        for (int r = 0; r < 8; ++r) {
            if (b % 2 == 0) {
                RaySamples s(size_t(len(rng)));
                double t = 0;
                for (RaySample& x : s) {
                    x.delta = 1e-3 + 0.5 * u(rng);
                    t += x.delta;
                    x.t = t;
                    x.field.sigma = u(rng) < 0.1 ? -u(rng) : 50.0 * u(rng) * u(rng);
                    x.color = {u(rng), u(rng), u(rng)};
                }
                batch.push_back(std::move(s));
            } else {
                Ray ray;
                ray.origin = random_unit(rng) * 2.5;
                ray.direction = normalize(Vec3{u(rng) - 0.5, u(rng) - 0.5, u(rng) - 0.5} - ray.origin);
                batch.push_back(march_ray(g, ray, m));
            }
        }
        const Vec3 bg{u(rng), u(rng), u(rng)};
        for (const RaySamples& s : batch) {
            // T_i = exp(-sum_{j<i} sigma_j delta_j); C = sum T_i (1 - exp(-sigma_i delta_i)) c_i + T_N bg.
            double optical = 0;
            Vec3 c;
            double wsum = 0;
            for (const RaySample& x : s) {
                const double sig = std::max(0.0, x.field.sigma);
                const double w = std::exp(-optical) * (1.0 - std::exp(-sig * x.delta));
                c += x.color * w;
                wsum += w;
                optical += sig * x.delta;
            }
            const double t_fg = std::exp(-optical);
            c += bg * t_fg;
            const RenderOutput out = composite(s, bg);
            for (int k = 0; k < 3; ++k) worst_color = std::max(worst_color, std::abs(out.color[k] - c[k]));
            worst_color = std::max(worst_color, std::abs(out.t_fg - t_fg));
            double w_out = out.t_fg;
            for (double w : out.weights) w_out += w;
            worst_sum = std::max(worst_sum, std::abs(w_out - 1.0));
            worst_sum = std::max(worst_sum, std::abs(wsum + t_fg - 1.0));
        }
    }
    return {worst_color <= kCompositeTol && worst_sum <= kPartitionTol,
            fmt("%d batches x 8 rays: max |composite - loop| %.2e, max |sum w + T_fg - 1| %.2e", kCompositeBatches,
                worst_color, worst_sum)};
}

// 3 -------------------------------------------------------------------------
FeatureMap random_map(int h, int w, int c, std::mt19937_64& rng, bool coarse) {
    FeatureMap f(h, w, c);
    std::uniform_real_distribution<float> u(-1, 1);
    std::uniform_int_distribution<int> q(-1, 2);
    for (float& v : f.data) v = coarse ? float(q(rng)) : u(rng);
    return f;
}

Outcome nnfm_oracle() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(303);
    std::uniform_int_distribution<int> rs(1, 32), ss(1, 40), cs(1, 16);
    int mismatched = 0;
    double worst = 0;
    for (int t = 0; t < kNnfmCases; ++t) {
        const int c = t % 4 == 0 ? 16 : cs(rng);
        const bool coarse = t % 3 == 0;  // small integer values force exact ties
        const FeatureMap a = random_map(rs(rng), rs(rng), c, rng, coarse);
        const FeatureMap b = random_map(ss(rng), ss(rng), c, rng, coarse);
        std::vector<double> nb(b.positions());
        for (size_t q = 0; q < b.positions(); ++q) nb[q] = feature_norm(b.at(q));
        double sum = 0;
        const NnMatch fast = nearest_neighbors(a, b);
        for (size_t p = 0; p < a.positions(); ++p) {
            const double na = feature_norm(a.at(p));
            double best = std::numeric_limits<double>::infinity();
            int arg = -1;
            for (size_t q = 0; q < b.positions(); ++q) {
                const double d = cosine_distance(a.at(p), na, b.at(q), nb[q]);
                if (d < best) {
                    best = d;
                    arg = int(q);
                }
            }
            if (fast.index[p] != arg) ++mismatched;
            sum += best;
        }
        worst = std::max(worst, std::abs(nnfm_loss(a, b).value - sum / double(a.positions())));
    }
    const double secs = seconds_since(t0);
    return {mismatched == 0 && worst <= kNnfmLossTol && secs <= kNnfmBudgetSec,
            fmt("%d cases: %d argmin mismatches, max loss error %.2e, %.1f s", kNnfmCases, mismatched, worst, secs)};
}

// 4 -------------------------------------------------------------------------
Outcome mnnfm_reductions() {
    std::mt19937_64 rng(404);
    bool full_exact = true, empty_zero = true;
    double worst = 0;
    for (int t = 0; t < 20; ++t) {
        const FeatureMap f = random_map(3 + int(rng() % 12), 3 + int(rng() % 12), 8, rng, false);
        const FeatureMap s1 = random_map(4 + int(rng() % 8), 4 + int(rng() % 8), 8, rng, false);
        const FeatureMap s2 = random_map(4 + int(rng() % 8), 4 + int(rng() % 8), 8, rng, false);

        const BinaryMask ones(f.width, f.height, 1), zeros(f.width, f.height, 0);
        const MaskedTarget single[] = {{&s1, &ones}};
        const NnMatch nn = nearest_neighbors(f, s1);
        double unnormalized = 0;
        for (double d : nn.distance) unnormalized += d;
        full_exact = full_exact && masked_nnfm_loss(f, single).value == unnormalized;

        const MaskedTarget none[] = {{&s1, &zeros}, {&s2, &zeros}};
        const NnfmResult e = masked_nnfm_loss(f, none);
        empty_zero = empty_zero && e.value == 0.0 &&
                     std::ranges::all_of(e.grad.data, [](float v) { return v == 0.0f; });

        BinaryMask m1(f.width, f.height), m2(f.width, f.height);
        for (uint8_t& b : m1.bits) b = uint8_t(rng() % 2);
        for (uint8_t& b : m2.bits) b = uint8_t(rng() % 2);
        const MaskedTarget two[] = {{&s1, &m1}, {&s2, &m2}};
        double rho = 0;
        for (const auto& [style, mask] : {std::pair{&s1, &m1}, std::pair{&s2, &m2}})
            for (size_t p = 0; p < f.positions(); ++p) {
                if (!mask->bits[p]) continue;
                double best = std::numeric_limits<double>::infinity();
                for (size_t q = 0; q < style->positions(); ++q)
                    best = std::min(best, cosine_distance(f.at(p), feature_norm(f.at(p)), style->at(q), feature_norm(style->at(q))));
                rho += best;
            }
        worst = std::max(worst, std::abs(masked_nnfm_loss(f, two).value - rho / 2.0));
    }
    return {full_exact && empty_zero && worst <= kMnnfmTol,
            fmt("full mask == unnormalized sum: %s; empty masks zero: %s; two-object max error %.2e",
                full_exact ? "yes" : "no", empty_zero ? "yes" : "no", worst)};
}

// 5 -------------------------------------------------------------------------
ObjectMaskSet object_from_pattern(const std::string& id, const std::vector<bool>& present) {
    ObjectMaskSet o;
    o.object_id = id;
    o.category = "thing";
    for (bool p : present) {
        if (p) {
            o.masks.emplace_back(BinaryMask(2, 2, 1));
            ++o.presence_count;
        } else {
            o.masks.emplace_back();
        }
    }
    return o;
}

bool kept(const std::vector<ObjectMaskSet>& v, const std::string& id) {
    return std::ranges::any_of(v, [&](const ObjectMaskSet& o) { return o.object_id == id; });
}

Outcome retention_boundary() {
    std::vector<bool> eight(10, false), seven(10, false);
    for (int i = 0; i < 8; ++i) eight[size_t(i * 7 % 10)] = true;
    for (int i = 0; i < 7; ++i) seven[size_t(i * 3 % 10)] = true;
    const auto r = retention_filter({object_from_pattern("eight", eight), object_from_pattern("seven", seven)}, 10,
                                    kRetentionThreshold);
    const bool boundary = kept(r, "eight") && !kept(r, "seven");

    std::mt19937_64 rng(505);
    int violations = 0;
    for (int t = 0; t < 2000; ++t) {
        const int n = 1 + int(rng() % 40);
        std::vector<bool> base(static_cast<size_t>(n));
        for (size_t f = 0; f < base.size(); ++f) base[f] = rng() % 3 != 0;
        std::vector<bool> more = base;
        more[rng() % size_t(n)] = true;
        const double th = double(1 + rng() % 1000) / 1000.0, th_hi = std::min(1.0, th + double(rng() % 200) / 1000.0);
        const std::vector<ObjectMaskSet> objs = {object_from_pattern("base", base), object_from_pattern("more", more)};
        const auto lo = retention_filter(objs, n, th), hi = retention_filter(objs, n, th_hi);
        if (kept(lo, "base") && !kept(lo, "more")) ++violations;  // more presence never drops
        for (const auto& o : hi)
            if (!kept(lo, o.object_id)) ++violations;  // higher threshold never adds
    }
    return {boundary && violations == 0,
            fmt("10 frames @ %.1f: presence 8 %s, presence 7 %s; %d monotonicity violations in 2000 trials",
                kRetentionThreshold, kept(r, "eight") ? "retained" : "dropped", kept(r, "seven") ? "retained" : "dropped",
                violations)};
}

// 6 -------------------------------------------------------------------------
Outcome regularizers() {
    double worst_tv = 0;
    for (int degree = 0; degree <= 2; ++degree)
        for (float v : {0.0f, 1.0f, -3.5f, 17.0f}) {
            VoxelGrid g = VoxelGrid::dense({6, 5, 4}, BoundingBox{}, degree, v);
            for (float& s : g.sh_data()) s = v * 0.5f;
            const double channels = 1 + g.sh_stride();
            worst_tv = std::max(worst_tv, tv_loss(g) / channels);
        }
    const bool tv_ok = worst_tv <= std::sqrt(kTvEps) * (1 + 1e-9);

    bool beta_ok = true;
    for (double t : {0.0, 1.0}) beta_ok = beta_ok && std::isfinite(beta_term(t)) && beta_term_grad(t) == 0.0;
    const std::vector<double> ends{0.0, 1.0};
    beta_ok = beta_ok && std::isfinite(beta_loss(ends).value);

    bool even = true, increasing = true;
    double prev = -1;
    for (int i = 0; i <= 200; ++i) {
        const double s = 0.05 * i;
        even = even && sparsity_penalty(s) == sparsity_penalty(-s);
        increasing = increasing && sparsity_penalty(s) > prev && sparsity_term(s) == sparsity_penalty(s);
        prev = sparsity_penalty(s);
    }
    return {tv_ok && beta_ok && even && increasing,
            fmt("constant-grid TV per channel max %.2e (<= sqrt(eps) %.0e); beta finite at T in {0,1}: %s; sparsity even: "
                "%s, increasing: %s",
                worst_tv, std::sqrt(kTvEps), beta_ok ? "yes" : "no", even ? "yes" : "no", increasing ? "yes" : "no")};
}

// 7 -------------------------------------------------------------------------
struct PhotorealRun {
    SyntheticScene scene;
    VoxelGrid grid;
    TrainConfig cfg;
    double seconds = 0;
};

PhotorealRun run_photoreal() {
    const auto t0 = Clock::now();
    PhotorealRun run;
    run.scene = generate_synthetic_scene(SyntheticSpec{});
    run.cfg.iterations = kPhotorealIterations;
    run.cfg.style_iterations = kStyleIterations;
    run.cfg.seed = 1;
    run.cfg.log_every = 100;
    run.grid = train_photoreal(run.scene.dataset, run.scene.images, run.cfg, [&](long it, const LossReport& r, double p) {
        std::printf("    phase 1 iter %4ld  total %+.5f  mse %.5f  batch psnr %.2f  (%.0f s)\n", it, r.total, r.mse, p,
                    seconds_since(t0));
        std::fflush(stdout);
    });
    run.seconds = seconds_since(t0);
    return run;
}

Outcome photoreal(const PhotorealRun& run) {
    RenderOptions ro;
    ro.march = training_march(run.grid, run.cfg);
    const auto p = evaluate_psnr(run.grid, run.scene.dataset, run.scene.images, run.scene.dataset.holdout, ro);
    const double worst = *std::ranges::min_element(p);
    return {worst >= kPhotorealPsnr && run.seconds <= kPhotorealBudgetSec,
            fmt("held-out PSNR %.2f / %.2f dB (min %.2f >= %.0f), scene + training %.0f s (<= %.0f s)", p[0], p[1], worst,
                kPhotorealPsnr, run.seconds, kPhotorealBudgetSec)};
}

// 8 -------------------------------------------------------------------------
struct TestView {
    Camera camera;
    std::vector<BinaryMask> masks;  // per sphere
};

std::vector<TestView> style_test_views(const PhotorealRun& run) {
    const SyntheticSpec spec;
    std::vector<Camera> cams;
    for (int f : run.scene.dataset.holdout) cams.push_back(run.scene.dataset.frames[size_t(f)].camera);
    const double a = 1.1, e = 0.5;
    cams.push_back(look_at_camera({spec.camera_distance * std::cos(e) * std::cos(a), spec.camera_distance * std::cos(e) * std::sin(a),
                                   spec.camera_distance * std::sin(e)},
                                  {0, 0, 0}, spec.image_size, spec.fov_degrees));
    std::vector<TestView> views;
    for (const Camera& c : cams) {
        TestView v{c, {}};
        for (size_t s = 0; s < spec.spheres.size(); ++s) v.masks.push_back(sphere_mask(c, spec.spheres, s));
        views.push_back(std::move(v));
    }
    return views;
}

std::vector<Image> render_views(const VoxelGrid& g, const std::vector<TestView>& views, const TrainConfig& cfg) {
    RenderOptions ro;
    ro.march = training_march(g, cfg);
    std::vector<Image> out;
    for (const TestView& v : views) out.push_back(render_image(g, v.camera, ro).rgb);
    return out;
}

/// Mean abs per-channel change over pixels selected by `pick`.
double region_change(const Image& a, const Image& b, const std::function<bool(size_t)>& pick) {
    double s = 0;
    size_t n = 0;
    for (size_t p = 0; p < a.pixel_count(); ++p) {
        if (!pick(p)) continue;
        for (int k = 0; k < 3; ++k) s += std::abs(double(a.rgb[3 * p + size_t(k)]) - b.rgb[3 * p + size_t(k)]);
        n += 3;
    }
    return n ? s / double(n) : 0.0;
}

Vec3 region_mean(const Image& img, const BinaryMask& m) {
    Vec3 s;
    size_t n = 0;
    for (size_t p = 0; p < img.pixel_count(); ++p)
        if (m.bits[p]) {
            s += Vec3{img.rgb[3 * p], img.rgb[3 * p + 1], img.rgb[3 * p + 2]};
            ++n;
        }
    return n ? s * (1.0 / double(n)) : s;
}

struct StyleScenario {
    VoxelGrid grid;
    StyleJob job;
    double seconds = 0;
};

StyleScenario run_scenario(const PhotorealRun& run, const FeatureExtractor& fx, const fs::path& styles_json,
                           const char* label) {
    const auto t0 = Clock::now();
    const auto& objects = run.scene.objects;
    const auto retained = retention_filter(objects, int(run.scene.dataset.frames.size()), kRetentionThreshold);
    std::vector<std::string> known;
    for (const auto& o : objects) known.push_back(o.object_id);
    const auto style_map = assign_styles(retained, load_style_config(styles_json), known);
    StyleScenario sc;
    sc.job = make_style_job(retained, style_map, fx, run.cfg.style_max_side);
    sc.grid = stylize(run.grid, run.scene.dataset, run.scene.images, sc.job, fx, run.cfg,
                      [&](long it, const LossReport& r, double p) {
                          std::printf("    %s iter %3ld  style %.4f  mse %.5f  view psnr %.2f  (%.0f s)\n", label, it, r.style,
                                      r.mse, p, seconds_since(t0));
                          std::fflush(stdout);
                      });
    sc.seconds = seconds_since(t0);
    return sc;
}

Outcome stylization(const PhotorealRun& run) {
    test::TempDir dir("acceptance-styles");
    write_png_rgb(dir / "checker.png", make_checkerboard(128, 16, {0.05, 0.05, 0.6}, {0.95, 0.95, 0.2}));
    write_png_rgb(dir / "stripes.png", make_stripes(128, 12, {0.9, 0.1, 0.1}, {0.95, 0.95, 0.95}));
    using nlohmann::json;
    std::ofstream(dir / "instance.json") << json{{"rules", {{{"instance", "sphere_a"}, {"style", "checker.png"}}}}}.dump();
    std::ofstream(dir / "category.json") << json{{"rules", {{{"category", "sphere"}, {"style", "checker.png"}}}}}.dump();
    std::ofstream(dir / "two.json") << json{{"rules", {{{"instance", "sphere_a"}, {"style", "checker.png"}},
                                                        {{"instance", "sphere_b"}, {"style", "stripes.png"}}}}}.dump();

    const FeatureExtractor fx = make_seeded_extractor(kExtractorSeed);
    const std::vector<TestView> views = style_test_views(run);
    const std::vector<Image> before = render_views(run.grid, views, run.cfg);
    double style_seconds = 0;

    // (a) instance rule on sphere A.
    const StyleScenario a = run_scenario(run, fx, dir / "instance.json", "8a");
    style_seconds += a.seconds;
    const std::vector<Image> after_a = render_views(a.grid, views, run.cfg);
    double d_before = 0, d_after = 0, off = 0;
    for (size_t v = 0; v < views.size(); ++v) {
        const BinaryMask* m = &views[v].masks[0];
        const StyleTarget* t = &a.job.targets[0];
        d_before += masked_style_distance(before[v], {m}, {t}, fx, true) / double(views.size());
        d_after += masked_style_distance(after_a[v], {m}, {t}, fx, true) / double(views.size());
        off += region_change(before[v], after_a[v], [&](size_t p) {
                   return !views[v].masks[0].bits[p] && !views[v].masks[1].bits[p];
               }) / double(views.size());
    }
    const double drop = d_before > 0 ? 1.0 - d_after / d_before : 0.0;
    const bool ok_a = a.job.objects.size() == 1 && drop >= kStyleDrop && off <= kOffMaskChange;

    // (b) category rule on both spheres.
    const StyleScenario b = run_scenario(run, fx, dir / "category.json", "8b");
    style_seconds += b.seconds;
    const std::vector<Image> after_b = render_views(b.grid, views, run.cfg);
    std::array<double, 2> change{0, 0};
    for (size_t v = 0; v < views.size(); ++v)
        for (size_t s = 0; s < 2; ++s)
            change[s] += region_change(before[v], after_b[v], [&](size_t p) { return views[v].masks[s].bits[p] != 0; }) /
                         double(views.size());
    const bool ok_b = b.job.objects.size() == 2 && change[0] > kMaskedChange && change[1] > kMaskedChange;

    // (c) two instance rules with different styles.
    const StyleScenario c = run_scenario(run, fx, dir / "two.json", "8c");
    style_seconds += c.seconds;
    const std::vector<Image> after_c = render_views(c.grid, views, run.cfg);
    double diff_before = 0, diff_after = 0;
    for (size_t v = 0; v < views.size(); ++v) {
        auto diff = [&](const Image& img) {
            const Vec3 d = region_mean(img, views[v].masks[0]) - region_mean(img, views[v].masks[1]);
            return (std::abs(d.x) + std::abs(d.y) + std::abs(d.z)) / 3.0 / double(views.size());
        };
        diff_before += diff(before[v]);
        diff_after += diff(after_c[v]);
    }
    const bool ok_c = c.job.objects.size() == 2 && diff_after > kRegionDifference;

    for (size_t v = 0; v < views.size(); ++v) {
        const fs::path out = fs::path("acceptance_renders");
        fs::create_directories(out);
        write_png_rgb(out / fmt("view%zu_before.png", v), quantize_8bit(before[v]));
        write_png_rgb(out / fmt("view%zu_a_instance.png", v), quantize_8bit(after_a[v]));
        write_png_rgb(out / fmt("view%zu_b_category.png", v), quantize_8bit(after_b[v]));
        write_png_rgb(out / fmt("view%zu_c_two_styles.png", v), quantize_8bit(after_c[v]));
    }

    const double total = run.seconds + style_seconds;
    return {ok_a && ok_b && ok_c && total <= kStyleBudgetSec,
            fmt("(a) masked NNFM %.5f -> %.5f, drop %.1f%% (>= %.0f%%), off-mask change %.4f (<= %.2f) %s; "
                "(b) change A %.3f, B %.3f (> %.2f) %s; (c) region difference %.3f -> %.3f (> %.2f) %s; "
                "%.0f s phase 1 + %.0f s stylization (<= %.0f s)",
                d_before, d_after, 100 * drop, 100 * kStyleDrop, off, kOffMaskChange, ok_a ? "ok" : "FAIL", change[0],
                change[1], kMaskedChange, ok_b ? "ok" : "FAIL", diff_before, diff_after, kRegionDifference,
                ok_c ? "ok" : "FAIL", run.seconds, style_seconds, kStyleBudgetSec)};
}

// 9 -------------------------------------------------------------------------
Outcome determinism() {
    test::TempDir dir("acceptance-det");
    SyntheticSpec spec;
    spec.grid_resolution = 32;
    spec.image_size = 48;
    spec.n_train = 8;
    SyntheticScene scene = generate_synthetic_scene(spec);
    write_synthetic_scene(scene, dir / "scene");
    std::ofstream(dir / "cfg.json") << nlohmann::json{{"resolution", 32}, {"iterations", 40}, {"batch_rays", 1024}}.dump();
    std::vector<std::vector<uint8_t>> bytes;
    for (const char* name : {"run1", "run2"}) {
        std::ostringstream out, err;
        const int code = run_cli({"train", "--scene", (dir / "scene").string(), "--config", (dir / "cfg.json").string(),
                                  "--seed", "42", "--deterministic", "--out", (dir / name).string()},
                                 out, err);
        if (code != 0) return {false, "cmd_train failed: " + err.str()};
        bytes.push_back(read_file(dir / name / "checkpoint.s2ck"));
    }
    const bool same = bytes[0] == bytes[1] && !bytes[0].empty();
    return {same, fmt("two seeded --deterministic train runs: %zu-byte checkpoints %s", bytes[0].size(),
                      same ? "byte-identical" : "DIFFER")};
}

}  // namespace

int main(int argc, char** argv) {
    configure_threads();
    std::set<int> wanted;
    for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
    auto want = [&](int c) { return wanted.empty() || wanted.contains(c); };
    std::printf("acceptance suite (%d thread%s)\n", thread_count(), thread_count() == 1 ? "" : "s");

    int failures = 0;
    auto report = [&](int id, const char* name, const std::function<Outcome()>& fn) {
        if (!want(id)) return;
        const auto t0 = Clock::now();
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        if (!o.pass) ++failures;
        std::printf("%s  %d %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str(), seconds_since(t0));
        std::fflush(stdout);
    };

    report(1, "gradient fidelity", gradient_fidelity);
    report(2, "compositing oracle", compositing_oracle);
    report(3, "NNFM oracle", nnfm_oracle);
    report(4, "mNNFM reductions", mnnfm_reductions);
    report(5, "retention boundary", retention_boundary);
    report(6, "regularizer properties", regularizers);

    std::optional<PhotorealRun> run;
    auto ensure_run = [&]() -> const PhotorealRun& {
        if (!run) run = run_photoreal();
        return *run;
    };
    report(7, "end-to-end photoreal", [&] { return photoreal(ensure_run()); });
    report(8, "end-to-end stylization", [&] { return stylization(ensure_run()); });
    report(9, "determinism", determinism);

    std::printf("%s\n", failures == 0 ? "all criteria passed" : fmt("%d criterion(s) failed", failures).c_str());
    return failures == 0 ? 0 : 1;
}
