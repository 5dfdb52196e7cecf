#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "s2rf/image.hpp"

namespace s2rf {

/// Dense H x W x C activations, row-major with channels innermost.
struct FeatureMap {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<float> data;
    std::string extractor_id;
    std::string layer;

    FeatureMap() = default;
    FeatureMap(int h, int w, int c) : height(h), width(w), channels(c), data(size_t(h) * w * c, 0.0f) {}

    size_t positions() const { return size_t(height) * width; }
    std::span<float> at(size_t pos) { return {data.data() + pos * channels, size_t(channels)}; }
    std::span<const float> at(size_t pos) const { return {data.data() + pos * channels, size_t(channels)}; }
    std::span<const float> at(int row, int col) const { return at(size_t(row) * width + col); }
};

FeatureMap image_to_tensor(const Image& img);
Image tensor_to_image(const FeatureMap& t);

enum class LayerKind : uint8_t { Conv = 0, Relu = 1, AvgPool = 2 };

struct Layer {
    LayerKind kind = LayerKind::Relu;
    std::string name;
    // Conv only. Weights are stored [out][kh][kw][in].
    int kernel_h = 0, kernel_w = 0, in_channels = 0, out_channels = 0, stride = 1, pad = 0;
    std::vector<float> weights;
    std::vector<float> bias;
};

/// Cached activations of one forward pass, needed by backward().
struct ForwardCache {
    std::vector<FeatureMap> activations;  // input of layer i is activations[i]; the last entry is the output
};

/// Feed-forward conv/relu/avgpool stack with named tap points.
class FeatureExtractor {
public:
    FeatureExtractor() = default;
    /// Names layers VGG-style (conv{block}_{k}, relu{block}_{k}, pool{block}) and checks that shapes chain.
    FeatureExtractor(std::vector<Layer> layers, std::vector<std::string> taps, std::string id);

    const std::vector<Layer>& layers() const { return layers_; }
    const std::vector<std::string>& taps() const { return taps_; }
    const std::string& id() const { return id_; }
    void set_taps(std::vector<std::string> taps);
    /// Index of the layer whose output is the tap, or throws.
    size_t layer_index(const std::string& name) const;

    /// Activations at every tap, in tap order.
    std::vector<FeatureMap> extract(const Image& image) const;
    std::vector<FeatureMap> extract(const Image& image, ForwardCache& cache) const;
    /// Maps tap gradients (same order/shapes as extract's output) to d(image), exact adjoint.
    Image backward(const ForwardCache& cache, std::span<const FeatureMap> d_taps) const;

private:
    std::vector<Layer> layers_;
    std::vector<std::string> taps_;
    std::vector<size_t> tap_layers_;
    std::string id_;
};

/// Tiny deterministic extractor for tests and the built-in stylization path:
/// conv3x3(3->c1) relu avgpool conv3x3(c1->c2) relu, He-initialised from `seed`.
/// Taps relu1_1 and relu2_1.
FeatureExtractor make_seeded_extractor(uint64_t seed, int c1 = 16, int c2 = 16);

/// Single-layer kernels used by unit tests and parity checks.
FeatureMap conv_forward(const Layer& conv, const FeatureMap& in);
FeatureMap conv_backward(const Layer& conv, const FeatureMap& d_out, int in_h, int in_w);
FeatureMap avgpool_forward(const FeatureMap& in);
FeatureMap avgpool_backward(const FeatureMap& d_out, int in_h, int in_w);

namespace reference {
/// Direct seven-loop convolution, the oracle for conv_forward.
FeatureMap conv_forward(const Layer& conv, const FeatureMap& in);
}  // namespace reference

// "S2FW" weight file. Conv weights on disk are [out][in][kh][kw].
std::vector<uint8_t> serialize_weights(const FeatureExtractor& fx);
FeatureExtractor deserialize_weights(std::span<const uint8_t> bytes, std::vector<std::string> taps, std::string id);
void save_weights(const FeatureExtractor& fx, const std::filesystem::path& path);
FeatureExtractor load_weights(const std::filesystem::path& path, std::vector<std::string> taps);

// "S2FM" feature file.
std::vector<uint8_t> serialize_feature_map(const FeatureMap& f);
FeatureMap deserialize_feature_map(std::span<const uint8_t> bytes);
void save_feature_map(const FeatureMap& f, const std::filesystem::path& path);
FeatureMap load_feature_map(const std::filesystem::path& path);

}  // namespace s2rf
