#pragma once

#include <span>
#include <string>
#include <vector>

#include "s2rf/features.hpp"
#include "s2rf/image.hpp"

namespace s2rf {

/// sqrt of the sum of squares in channel order; every distance computation uses this.
double feature_norm(std::span<const float> v);

/// 1 - a.b / (|a||b|), accumulated in double in channel order. Zero-norm vectors are at distance 1.
double cosine_distance(std::span<const float> a, double norm_a, std::span<const float> b, double norm_b);

struct NnMatch {
    std::vector<int32_t> index;     // argmin style position per query position, -1 if skipped
    std::vector<double> distance;  // the minimum cosine distance
};

/// For every query position (optionally only those with active[pos] != 0), the style position at
/// minimum cosine distance; ties go to the smallest linear index. Parallel over query positions.
NnMatch nearest_neighbors(const FeatureMap& query, const FeatureMap& style, std::span<const uint8_t> active = {});

namespace reference {
/// O(N*M) brute force, the oracle for nearest_neighbors.
NnMatch nearest_neighbors(const FeatureMap& query, const FeatureMap& style, std::span<const uint8_t> active = {});
}  // namespace reference

/// d(cosine distance)/d(a) for fixed b; zero when a or b has zero norm.
void cosine_distance_grad(std::span<const float> a, double norm_a, std::span<const float> b, double norm_b, double scale,
                          std::span<float> out);

struct NnfmResult {
    double value = 0;
    FeatureMap grad;  // d(value)/d(f_r), same shape as f_r
};

/// Mean over f_r positions of the nearest-neighbor cosine distance into f_s.
/// The match is held fixed for the gradient.
NnfmResult nnfm_loss(const FeatureMap& f_r, const FeatureMap& f_s);

/// One styled object at one tap: its style features and its feature-resolution mask.
struct MaskedTarget {
    const FeatureMap* style = nullptr;
    const BinaryMask* mask = nullptr;
};

/// (1/N_obj) sum_o sum_{masked p} min_q dist(f_r[p], style_o[q]). With `normalize_per_object`,
/// each object's sum is divided by its masked count (non-default).
NnfmResult masked_nnfm_loss(const FeatureMap& f_r, std::span<const MaskedTarget> targets,
                            bool normalize_per_object = false);

/// Block coverage downsample: a target cell is set iff at least half its source pixels are.
BinaryMask downsample_mask(const BinaryMask& mask, int height, int width);

/// L_rf + style_weight * L_mnnfm.
double total_style_loss(double rf_total, double mnnfm, double style_weight);

}  // namespace s2rf
