#include "s2rf/features.hpp"

#include <algorithm>
#include <random>

#include "s2rf/binary_io.hpp"
#include "s2rf/grid.hpp"

namespace s2rf {

namespace {
constexpr char kWeightsMagic[] = "S2FW";
constexpr char kFeaturesMagic[] = "S2FM";
constexpr uint32_t kFormatVersion = 1;

int conv_out_size(int in, int k, int stride, int pad) { return (in + 2 * pad - k) / stride + 1; }

void check_conv(const Layer& conv, const FeatureMap& in) {
    require(conv.kind == LayerKind::Conv, "layer is not a convolution");
    require(in.channels == conv.in_channels, "conv input channel mismatch in " + conv.name);
    require(in.height + 2 * conv.pad >= conv.kernel_h && in.width + 2 * conv.pad >= conv.kernel_w,
            "input smaller than kernel in " + conv.name);
}

/// One output pixel of a convolution; shared by the parallel and reference paths.
void conv_pixel(const Layer& conv, const FeatureMap& in, int oy, int ox, float* out) {
    const int cin = conv.in_channels;
    for (int o = 0; o < conv.out_channels; ++o) {
        double acc = conv.bias[o];
        const float* w_o = conv.weights.data() + size_t(o) * conv.kernel_h * conv.kernel_w * cin;
        for (int ky = 0; ky < conv.kernel_h; ++ky) {
            const int iy = oy * conv.stride - conv.pad + ky;
            if (iy < 0 || iy >= in.height) continue;
            for (int kx = 0; kx < conv.kernel_w; ++kx) {
                const int ix = ox * conv.stride - conv.pad + kx;
                if (ix < 0 || ix >= in.width) continue;
                const float* w = w_o + (size_t(ky) * conv.kernel_w + kx) * cin;
                const float* x = in.data.data() + (size_t(iy) * in.width + ix) * cin;
                for (int i = 0; i < cin; ++i) acc += double(w[i]) * x[i];
            }
        }
        out[o] = float(acc);
    }
}

}  // namespace

FeatureMap image_to_tensor(const Image& img) {
    FeatureMap t(img.height, img.width, 3);
    t.data = img.rgb;
    return t;
}

Image tensor_to_image(const FeatureMap& t) {
    require(t.channels == 3, "tensor must have 3 channels to become an image");
    Image img(t.width, t.height);
    img.rgb = t.data;
    return img;
}

FeatureMap conv_forward(const Layer& conv, const FeatureMap& in) {
    check_conv(conv, in);
    FeatureMap out(conv_out_size(in.height, conv.kernel_h, conv.stride, conv.pad),
                   conv_out_size(in.width, conv.kernel_w, conv.stride, conv.pad), conv.out_channels);
#pragma omp parallel for schedule(static)
    for (int oy = 0; oy < out.height; ++oy)
        for (int ox = 0; ox < out.width; ++ox)
            conv_pixel(conv, in, oy, ox, out.data.data() + (size_t(oy) * out.width + ox) * out.channels);
    return out;
}

FeatureMap conv_backward(const Layer& conv, const FeatureMap& d_out, int in_h, int in_w) {
    require(d_out.channels == conv.out_channels, "conv gradient channel mismatch in " + conv.name);
    FeatureMap d_in(in_h, in_w, conv.in_channels);
    const int cin = conv.in_channels;
    std::vector<double> acc;
#pragma omp parallel for schedule(static) private(acc)
    for (int iy = 0; iy < in_h; ++iy) {
        acc.assign(size_t(cin), 0.0);
        for (int ix = 0; ix < in_w; ++ix) {
            std::fill(acc.begin(), acc.end(), 0.0);
            for (int ky = 0; ky < conv.kernel_h; ++ky) {
                const int ny = iy + conv.pad - ky;
                if (ny < 0 || ny % conv.stride != 0) continue;
                const int oy = ny / conv.stride;
                if (oy >= d_out.height) continue;
                for (int kx = 0; kx < conv.kernel_w; ++kx) {
                    const int nx = ix + conv.pad - kx;
                    if (nx < 0 || nx % conv.stride != 0) continue;
                    const int ox = nx / conv.stride;
                    if (ox >= d_out.width) continue;
                    const float* g = d_out.data.data() + (size_t(oy) * d_out.width + ox) * d_out.channels;
                    for (int o = 0; o < conv.out_channels; ++o) {
                        if (g[o] == 0.0f) continue;
                        const float* w =
                            conv.weights.data() + ((size_t(o) * conv.kernel_h + ky) * conv.kernel_w + kx) * cin;
                        for (int i = 0; i < cin; ++i) acc[i] += double(w[i]) * g[o];
                    }
                }
            }
            float* dst = d_in.data.data() + (size_t(iy) * in_w + ix) * cin;
            for (int i = 0; i < cin; ++i) dst[i] = float(acc[i]);
        }
    }
    return d_in;
}

FeatureMap avgpool_forward(const FeatureMap& in) {
    require(in.height >= 2 && in.width >= 2, "avgpool needs at least a 2x2 input");
    FeatureMap out(in.height / 2, in.width / 2, in.channels);
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x)
            for (int c = 0; c < in.channels; ++c) {
                const double s = double(in.at(2 * y, 2 * x)[c]) + in.at(2 * y, 2 * x + 1)[c] +
                                 in.at(2 * y + 1, 2 * x)[c] + in.at(2 * y + 1, 2 * x + 1)[c];
                out.data[(size_t(y) * out.width + x) * in.channels + c] = float(0.25 * s);
            }
    return out;
}

FeatureMap avgpool_backward(const FeatureMap& d_out, int in_h, int in_w) {
    FeatureMap d_in(in_h, in_w, d_out.channels);
    for (int y = 0; y < d_out.height; ++y)
        for (int x = 0; x < d_out.width; ++x)
            for (int c = 0; c < d_out.channels; ++c) {
                const float g = 0.25f * d_out.at(y, x)[c];
                for (int k = 0; k < 4; ++k) d_in.at(size_t(2 * y + k / 2) * in_w + 2 * x + k % 2)[c] = g;
            }
    return d_in;
}

namespace reference {

FeatureMap conv_forward(const Layer& conv, const FeatureMap& in) {
    check_conv(conv, in);
    FeatureMap out(conv_out_size(in.height, conv.kernel_h, conv.stride, conv.pad),
                   conv_out_size(in.width, conv.kernel_w, conv.stride, conv.pad), conv.out_channels);
    for (int oy = 0; oy < out.height; ++oy)
        for (int ox = 0; ox < out.width; ++ox)
            conv_pixel(conv, in, oy, ox, out.data.data() + (size_t(oy) * out.width + ox) * out.channels);
    return out;
}

}  // namespace reference

FeatureExtractor::FeatureExtractor(std::vector<Layer> layers, std::vector<std::string> taps, std::string id)
    : layers_(std::move(layers)), id_(std::move(id)) {
    require(!layers_.empty(), "feature extractor needs at least one layer");
    int block = 1, k = 0;
    int channels = 3;
    for (Layer& l : layers_) {
        switch (l.kind) {
            case LayerKind::Conv:
                require(l.in_channels == channels, "conv layer input channels do not chain");
                require(l.kernel_h > 0 && l.kernel_w > 0 && l.out_channels > 0 && l.stride > 0 && l.pad >= 0,
                        "conv layer has an invalid shape");
                require(l.weights.size() == size_t(l.out_channels) * l.kernel_h * l.kernel_w * l.in_channels,
                        "conv weight count does not match its shape");
                require(l.bias.size() == size_t(l.out_channels), "conv bias count does not match its shape");
                channels = l.out_channels;
                l.name = "conv" + std::to_string(block) + "_" + std::to_string(++k);
                break;
            case LayerKind::Relu:
                l.name = "relu" + std::to_string(block) + "_" + std::to_string(k);
                break;
            case LayerKind::AvgPool:
                l.name = "pool" + std::to_string(block);
                ++block;
                k = 0;
                break;
        }
    }
    set_taps(std::move(taps));
}

void FeatureExtractor::set_taps(std::vector<std::string> taps) {
    require(!taps.empty(), "feature extractor needs at least one tap");
    std::vector<size_t> idx;
    for (const auto& t : taps) idx.push_back(layer_index(t));
    taps_ = std::move(taps);
    tap_layers_ = std::move(idx);
}

size_t FeatureExtractor::layer_index(const std::string& name) const {
    for (size_t i = 0; i < layers_.size(); ++i)
        if (layers_[i].name == name) return i;
    throw ContractViolation("unknown feature layer \"" + name + "\"");
}

std::vector<FeatureMap> FeatureExtractor::extract(const Image& image) const {
    ForwardCache cache;
    return extract(image, cache);
}

std::vector<FeatureMap> FeatureExtractor::extract(const Image& image, ForwardCache& cache) const {
    const size_t last = *std::ranges::max_element(tap_layers_);
    cache.activations.clear();
    cache.activations.push_back(image_to_tensor(image));
    for (size_t i = 0; i <= last; ++i) {
        const Layer& l = layers_[i];
        const FeatureMap& in = cache.activations.back();
        FeatureMap out;
        switch (l.kind) {
            case LayerKind::Conv: out = conv_forward(l, in); break;
            case LayerKind::Relu:
                out = in;
                for (float& v : out.data) v = std::max(v, 0.0f);
                break;
            case LayerKind::AvgPool: out = avgpool_forward(in); break;
        }
        out.extractor_id = id_;
        out.layer = l.name;
        cache.activations.push_back(std::move(out));
    }
    std::vector<FeatureMap> taps;
    for (size_t t : tap_layers_) taps.push_back(cache.activations[t + 1]);
    return taps;
}

Image FeatureExtractor::backward(const ForwardCache& cache, std::span<const FeatureMap> d_taps) const {
    require(d_taps.size() == tap_layers_.size(), "one gradient per tap required");
    const size_t last = *std::ranges::max_element(tap_layers_);
    require(cache.activations.size() == last + 2, "forward cache does not match this extractor");
    const FeatureMap& top = cache.activations[last + 1];
    FeatureMap d(top.height, top.width, top.channels);
    for (size_t i = last + 1; i-- > 0;) {
        for (size_t t = 0; t < tap_layers_.size(); ++t) {
            if (tap_layers_[t] != i) continue;
            require(d_taps[t].data.size() == d.data.size(), "tap gradient shape mismatch");
            for (size_t j = 0; j < d.data.size(); ++j) d.data[j] += d_taps[t].data[j];
        }
        const Layer& l = layers_[i];
        const FeatureMap& in = cache.activations[i];
        switch (l.kind) {
            case LayerKind::Conv: d = conv_backward(l, d, in.height, in.width); break;
            case LayerKind::Relu:
                for (size_t j = 0; j < d.data.size(); ++j)
                    if (in.data[j] <= 0.0f) d.data[j] = 0.0f;
                break;
            case LayerKind::AvgPool: d = avgpool_backward(d, in.height, in.width); break;
        }
    }
    return tensor_to_image(d);
}

FeatureExtractor make_seeded_extractor(uint64_t seed, int c1, int c2) {
    std::mt19937_64 rng(seed);
    auto conv = [&rng](int in, int out) {
        Layer l;
        l.kind = LayerKind::Conv;
        l.kernel_h = l.kernel_w = 3;
        l.in_channels = in;
        l.out_channels = out;
        l.pad = 1;
        std::normal_distribution<double> w(0.0, std::sqrt(2.0 / (9.0 * in)));
        std::uniform_real_distribution<double> b(0.01, 0.1);
        l.weights.resize(size_t(out) * 9 * in);
        for (float& v : l.weights) v = float(w(rng));
        l.bias.resize(size_t(out));
        for (float& v : l.bias) v = float(b(rng));
        return l;
    };
    auto plain = [](LayerKind k) {
        Layer l;
        l.kind = k;
        return l;
    };
    std::vector<Layer> layers;
    layers.push_back(conv(3, c1));
    layers.push_back(plain(LayerKind::Relu));
    layers.push_back(plain(LayerKind::AvgPool));
    layers.push_back(conv(c1, c2));
    layers.push_back(plain(LayerKind::Relu));
    return FeatureExtractor(std::move(layers), {"relu1_1", "relu2_1"}, "seeded-" + std::to_string(seed));
}

std::vector<uint8_t> serialize_weights(const FeatureExtractor& fx) {
    ByteWriter w;
    w.magic(std::string_view(kWeightsMagic, 4));
    w.u32(kFormatVersion);
    w.u32(static_cast<uint32_t>(fx.layers().size()));
    for (const Layer& l : fx.layers()) {
        w.u8(static_cast<uint8_t>(l.kind));
        if (l.kind != LayerKind::Conv) continue;
        for (int v : {l.kernel_h, l.kernel_w, l.in_channels, l.out_channels, l.stride, l.pad})
            w.u32(static_cast<uint32_t>(v));
        for (int o = 0; o < l.out_channels; ++o)
            for (int i = 0; i < l.in_channels; ++i)
                for (int ky = 0; ky < l.kernel_h; ++ky)
                    for (int kx = 0; kx < l.kernel_w; ++kx)
                        w.f32(l.weights[((size_t(o) * l.kernel_h + ky) * l.kernel_w + kx) * l.in_channels + i]);
        for (float b : l.bias) w.f32(b);
    }
    return w.take();
}

FeatureExtractor deserialize_weights(std::span<const uint8_t> bytes, std::vector<std::string> taps, std::string id) {
    ByteReader r(bytes);
    r.expect_magic(std::string_view(kWeightsMagic, 4));
    if (const uint32_t v = r.u32(); v != kFormatVersion) throw FormatError("unsupported S2FW version " + std::to_string(v));
    const uint32_t n = r.u32();
    std::vector<Layer> layers;
    for (uint32_t li = 0; li < n; ++li) {
        Layer l;
        const uint8_t kind = r.u8();
        if (kind > 2) throw FormatError("unknown layer kind " + std::to_string(kind));
        l.kind = static_cast<LayerKind>(kind);
        if (l.kind == LayerKind::Conv) {
            l.kernel_h = int(r.u32());
            l.kernel_w = int(r.u32());
            l.in_channels = int(r.u32());
            l.out_channels = int(r.u32());
            l.stride = int(r.u32());
            l.pad = int(r.u32());
            const size_t count = size_t(l.out_channels) * l.in_channels * l.kernel_h * l.kernel_w;
            r.need(4 * (count + size_t(l.out_channels)));
            l.weights.resize(count);
            for (int o = 0; o < l.out_channels; ++o)
                for (int i = 0; i < l.in_channels; ++i)
                    for (int ky = 0; ky < l.kernel_h; ++ky)
                        for (int kx = 0; kx < l.kernel_w; ++kx)
                            l.weights[((size_t(o) * l.kernel_h + ky) * l.kernel_w + kx) * l.in_channels + i] = r.f32();
            l.bias.resize(size_t(l.out_channels));
            for (float& b : l.bias) b = r.f32();
        }
        layers.push_back(std::move(l));
    }
    if (r.remaining() != 0) throw FormatError("trailing bytes after S2FW payload");
    return FeatureExtractor(std::move(layers), std::move(taps), std::move(id));
}

void save_weights(const FeatureExtractor& fx, const std::filesystem::path& path) {
    write_file_atomic(path, serialize_weights(fx));
}

FeatureExtractor load_weights(const std::filesystem::path& path, std::vector<std::string> taps) {
    return deserialize_weights(read_file(path), std::move(taps), path.filename().string());
}

std::vector<uint8_t> serialize_feature_map(const FeatureMap& f) {
    ByteWriter w;
    w.magic(std::string_view(kFeaturesMagic, 4));
    w.u32(kFormatVersion);
    w.u32(static_cast<uint32_t>(f.height));
    w.u32(static_cast<uint32_t>(f.width));
    w.u32(static_cast<uint32_t>(f.channels));
    for (float v : f.data) w.f32(v);
    return w.take();
}

FeatureMap deserialize_feature_map(std::span<const uint8_t> bytes) {
    ByteReader r(bytes);
    r.expect_magic(std::string_view(kFeaturesMagic, 4));
    if (const uint32_t v = r.u32(); v != kFormatVersion) throw FormatError("unsupported S2FM version " + std::to_string(v));
    const auto h = int(r.u32()), w = int(r.u32()), c = int(r.u32());
    if (h < 1 || w < 1 || c < 1) throw FormatError("S2FM dimensions must be positive");
    FeatureMap f(h, w, c);
    r.need(4 * f.data.size());
    for (float& v : f.data) v = r.f32();
    if (r.remaining() != 0) throw FormatError("trailing bytes after S2FM payload");
    return f;
}

void save_feature_map(const FeatureMap& f, const std::filesystem::path& path) {
    write_file_atomic(path, serialize_feature_map(f));
}

FeatureMap load_feature_map(const std::filesystem::path& path) { return deserialize_feature_map(read_file(path)); }

}  // namespace s2rf
