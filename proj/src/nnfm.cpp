#include "s2rf/nnfm.hpp"

#include <limits>

namespace s2rf {

double feature_norm(std::span<const float> v) {
    double s = 0;
    for (float x : v) s += double(x) * x;
    return std::sqrt(s);
}

double cosine_distance(std::span<const float> a, double norm_a, std::span<const float> b, double norm_b) {
    if (norm_a == 0.0 || norm_b == 0.0) return 1.0;
    double d = 0;
    for (size_t i = 0; i < a.size(); ++i) d += double(a[i]) * b[i];
    return 1.0 - d / (norm_a * norm_b);
}

void cosine_distance_grad(std::span<const float> a, double norm_a, std::span<const float> b, double norm_b, double scale,
                          std::span<float> out) {
    if (norm_a == 0.0 || norm_b == 0.0) return;
    double d = 0;
    for (size_t i = 0; i < a.size(); ++i) d += double(a[i]) * b[i];
    const double inv_ab = 1.0 / (norm_a * norm_b);
    const double k = d * inv_ab / (norm_a * norm_a);
    for (size_t i = 0; i < a.size(); ++i) out[i] += float(scale * (k * a[i] - b[i] * inv_ab));
}

namespace {

void check_pair(const FeatureMap& q, const FeatureMap& s, std::span<const uint8_t> active) {
    require(q.channels == s.channels, "feature maps differ in channel count");
    require(q.positions() > 0 && s.positions() > 0, "feature maps must be non-empty");
    require(active.empty() || active.size() == q.positions(), "active mask does not match the query map");
}

std::vector<double> norms_of(const FeatureMap& f) {
    std::vector<double> n(f.positions());
    for (size_t p = 0; p < n.size(); ++p) n[p] = feature_norm(f.at(p));
    return n;
}

}  // namespace

NnMatch nearest_neighbors(const FeatureMap& query, const FeatureMap& style, std::span<const uint8_t> active) {
    check_pair(query, style, active);
    const size_t n = query.positions(), m = style.positions();
    const auto c = size_t(query.channels);
    NnMatch out{std::vector<int32_t>(n, -1), std::vector<double>(n, 0.0)};

    const std::vector<double> style_norm = norms_of(style);

#pragma omp parallel for schedule(dynamic, 16)
    for (int64_t p = 0; p < int64_t(n); ++p) {
        if (!active.empty() && !active[size_t(p)]) continue;
        const std::span<const float> a = query.at(size_t(p));
        const double na = feature_norm(a);
        double best = std::numeric_limits<double>::infinity();
        int32_t best_idx = -1;
        if (na == 0.0) {
            best = 1.0;
            best_idx = 0;
        } else {
            for (size_t q = 0; q < m; ++q) {
                double dist = 1.0;
                if (style_norm[q] != 0.0) {
                    const float* b = style.data.data() + q * c;
                    double d = 0;
                    for (size_t i = 0; i < c; ++i) d += double(a[i]) * double(b[i]);
                    dist = 1.0 - d / (na * style_norm[q]);
                }
                if (dist < best) {
                    best = dist;
                    best_idx = int32_t(q);
                }
            }
        }
        out.index[size_t(p)] = best_idx;
        out.distance[size_t(p)] = best;
    }
    return out;
}

namespace reference {

NnMatch nearest_neighbors(const FeatureMap& query, const FeatureMap& style, std::span<const uint8_t> active) {
    check_pair(query, style, active);
    NnMatch out{std::vector<int32_t>(query.positions(), -1), std::vector<double>(query.positions(), 0.0)};
    for (size_t p = 0; p < query.positions(); ++p) {
        if (!active.empty() && !active[p]) continue;
        const double na = feature_norm(query.at(p));
        double best = std::numeric_limits<double>::infinity();
        for (size_t q = 0; q < style.positions(); ++q) {
            const double d = cosine_distance(query.at(p), na, style.at(q), feature_norm(style.at(q)));
            if (d < best) {
                best = d;
                out.index[p] = int32_t(q);
            }
        }
        out.distance[p] = best;
    }
    return out;
}

}  // namespace reference

NnfmResult nnfm_loss(const FeatureMap& f_r, const FeatureMap& f_s) {
    const NnMatch match = nearest_neighbors(f_r, f_s);
    NnfmResult out{0.0, FeatureMap(f_r.height, f_r.width, f_r.channels)};
    const double inv_n = 1.0 / double(f_r.positions());
    for (size_t p = 0; p < f_r.positions(); ++p) {
        out.value += match.distance[p];
        const auto q = size_t(match.index[p]);
        cosine_distance_grad(f_r.at(p), feature_norm(f_r.at(p)), f_s.at(q), feature_norm(f_s.at(q)), inv_n,
                             out.grad.at(p));
    }
    out.value *= inv_n;
    return out;
}

NnfmResult masked_nnfm_loss(const FeatureMap& f_r, std::span<const MaskedTarget> targets, bool normalize_per_object) {
    NnfmResult out{0.0, FeatureMap(f_r.height, f_r.width, f_r.channels)};
    if (targets.empty()) return out;
    const double inv_obj = 1.0 / double(targets.size());
    for (const MaskedTarget& t : targets) {
        require(t.style && t.mask, "masked target is missing its style features or mask");
        require(t.mask->height == f_r.height && t.mask->width == f_r.width,
                "mask shape does not match the rendered feature map");
        const size_t count = t.mask->count();
        if (count == 0) continue;
        const NnMatch match = nearest_neighbors(f_r, *t.style, t.mask->bits);
        const double k = inv_obj / (normalize_per_object ? double(count) : 1.0);
        double rho = 0;
        for (size_t p = 0; p < f_r.positions(); ++p) {
            if (!t.mask->bits[p]) continue;
            rho += match.distance[p];
            const auto q = size_t(match.index[p]);
            cosine_distance_grad(f_r.at(p), feature_norm(f_r.at(p)), t.style->at(q), feature_norm(t.style->at(q)), k,
                                 out.grad.at(p));
        }
        out.value += k * rho;
    }
    return out;
}

BinaryMask downsample_mask(const BinaryMask& mask, int height, int width) {
    require(height >= 1 && width >= 1 && height <= mask.height && width <= mask.width,
            "mask target size must lie within the source size");
    BinaryMask out(width, height);
    for (int r = 0; r < height; ++r) {
        const int r0 = int(int64_t(r) * mask.height / height), r1 = int(int64_t(r + 1) * mask.height / height);
        for (int c = 0; c < width; ++c) {
            const int c0 = int(int64_t(c) * mask.width / width), c1 = int(int64_t(c + 1) * mask.width / width);
            int64_t set = 0;
            for (int y = r0; y < r1; ++y)
                for (int x = c0; x < c1; ++x) set += mask.at(y, x);
            const int64_t area = int64_t(r1 - r0) * (c1 - c0);
            out.at(r, c) = 2 * set >= area ? 1 : 0;
        }
    }
    return out;
}

double total_style_loss(double rf_total, double mnnfm, double style_weight) { return rf_total + style_weight * mnnfm; }

}  // namespace s2rf
