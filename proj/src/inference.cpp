// SPDX-License-Identifier: Apache-2.0

#include "mixprec/inference.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

#include "mixprec/quant.hpp"

namespace mixprec {

namespace {

using nlohmann::json;

std::string_view to_string(Activation a) {
    return a == Activation::Relu ? "relu" : "none";
}

Activation activation_from_string(std::string_view s) {
    if (s == "relu") return Activation::Relu;
    if (s == "none") return Activation::None;
    throw std::runtime_error("unknown activation: " + std::string(s));
}

std::string_view to_string(LayerKind k) {
    return k == LayerKind::Conv2d ? "conv2d" : "dense";
}

LayerKind kind_from_string(std::string_view s) {
    if (s == "conv2d") return LayerKind::Conv2d;
    if (s == "dense") return LayerKind::Dense;
    throw std::runtime_error("unknown layer kind: " + std::string(s));
}

const Tensor& weights_of(const ModelWeights& weights, const NetLayerSpec& layer) {
    const LayerRecord* rec = weights.find(layer.weights_name);
    if (rec == nullptr) {
        throw std::runtime_error("network references unknown layer " + layer.weights_name);
    }
    return rec->weights;
}

// One batch row through the conv stack, global average pool, dense stack.
// Loop order is fixed so results are independent of how rows are scheduled.
void forward_row(const NetworkSpec& spec, const std::vector<const Tensor*>& layer_weights,
                 const float* row_in, float* logits_out) {
    const int h = spec.input.height;
    const int w = spec.input.width;

    std::vector<float> cur(row_in, row_in + static_cast<std::size_t>(spec.input.channels) * h * w);
    std::vector<float> next;

    std::size_t li = 0;
    for (; li < spec.layers.size() && spec.layers[li].kind == LayerKind::Conv2d; ++li) {
        const NetLayerSpec& layer = spec.layers[li];
        const float* wt = layer_weights[li]->values.data();
        const int k = layer.kernel;
        const int pad = k / 2;
        next.assign(static_cast<std::size_t>(layer.out_channels) * h * w, 0.0f);
        for (int o = 0; o < layer.out_channels; ++o) {
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) {
                    float acc = 0.0f;
                    for (int i = 0; i < layer.in_channels; ++i) {
                        for (int ky = 0; ky < k; ++ky) {
                            const int iy = y + ky - pad;
                            if (iy < 0 || iy >= h) continue;
                            for (int kx = 0; kx < k; ++kx) {
                                const int ix = x + kx - pad;
                                if (ix < 0 || ix >= w) continue;
                                acc += cur[(static_cast<std::size_t>(i) * h + iy) * w + ix] *
                                       wt[((static_cast<std::size_t>(o) * layer.in_channels + i) * k + ky) * k + kx];
                            }
                        }
                    }
                    if (layer.activation == Activation::Relu && acc < 0.0f) {
                        acc = 0.0f;
                    }
                    next[(static_cast<std::size_t>(o) * h + y) * w + x] = acc;
                }
            }
        }
        cur.swap(next);
    }

    // Global average pool over the spatial dims.
    const int pooled_channels = static_cast<int>(cur.size()) / (h * w);
    std::vector<float> vec(static_cast<std::size_t>(pooled_channels));
    const float inv_area = 1.0f / static_cast<float>(h * w);
    for (int c = 0; c < pooled_channels; ++c) {
        float acc = 0.0f;
        for (int p = 0; p < h * w; ++p) {
            acc += cur[static_cast<std::size_t>(c) * h * w + p];
        }
        vec[static_cast<std::size_t>(c)] = acc * inv_area;
    }

    for (; li < spec.layers.size(); ++li) {
        const NetLayerSpec& layer = spec.layers[li];
        const float* wt = layer_weights[li]->values.data();
        std::vector<float> out(static_cast<std::size_t>(layer.out_channels));
        for (int o = 0; o < layer.out_channels; ++o) {
            float acc = 0.0f;
            for (int i = 0; i < layer.in_channels; ++i) {
                acc += wt[static_cast<std::size_t>(o) * layer.in_channels + i] *
                       vec[static_cast<std::size_t>(i)];
            }
            if (layer.activation == Activation::Relu && acc < 0.0f) {
                acc = 0.0f;
            }
            out[static_cast<std::size_t>(o)] = acc;
        }
        vec.swap(out);
    }

    std::copy(vec.begin(), vec.end(), logits_out);
}

int argmax_lowest(const float* v, int n) {
    int best = 0;
    for (int i = 1; i < n; ++i) {
        if (v[i] > v[best]) {
            best = i;
        }
    }
    return best;
}

// Rank of `label` in descending value order with ties broken by lower
// index; membership in the top-k means rank < k.
int desc_rank(const float* v, int n, int label) {
    int rank = 0;
    for (int j = 0; j < n; ++j) {
        if (v[j] > v[label] || (v[j] == v[label] && j < label)) {
            ++rank;
        }
    }
    return rank;
}

}  // namespace

void NetworkSpec::validate_against(const ModelWeights& weights) const {
    if (layers.empty()) {
        throw std::runtime_error("network has no layers");
    }
    if (input.channels <= 0 || input.height <= 0 || input.width <= 0) {
        throw std::runtime_error("invalid input dimensions");
    }

    bool dense_seen = false;
    int feature_width = input.channels;
    for (const NetLayerSpec& layer : layers) {
        if (layer.kind == LayerKind::Conv2d) {
            if (dense_seen) {
                throw std::runtime_error("conv layer after dense stage: " + layer.weights_name);
            }
            if (layer.kernel != 1 && layer.kernel != 3) {
                throw std::runtime_error("unsupported kernel in layer " + layer.weights_name);
            }
        } else {
            dense_seen = true;
        }
        if (layer.in_channels != feature_width) {
            throw std::runtime_error("channel mismatch at layer " + layer.weights_name);
        }
        feature_width = layer.out_channels;

        const Tensor& wt = weights_of(weights, layer);
        std::vector<std::int64_t> expected;
        if (layer.kind == LayerKind::Conv2d) {
            expected = {layer.out_channels, layer.in_channels, layer.kernel, layer.kernel};
        } else {
            expected = {layer.out_channels, layer.in_channels};
        }
        if (wt.shape != expected) {
            throw std::runtime_error("shape mismatch in layer " + layer.weights_name);
        }
    }
    if (feature_width != classes) {
        throw std::runtime_error("classifier width mismatch");
    }
}

json NetworkSpec::to_json() const {
    json jl = json::array();
    for (const NetLayerSpec& layer : layers) {
        jl.push_back({{"kind", std::string(to_string(layer.kind))},
                      {"weights", layer.weights_name},
                      {"kernel", layer.kernel},
                      {"in_channels", layer.in_channels},
                      {"out_channels", layer.out_channels},
                      {"activation", std::string(to_string(layer.activation))}});
    }
    return {{"name", name},
            {"input",
             {{"channels", input.channels}, {"height", input.height}, {"width", input.width}}},
            {"classes", classes},
            {"layers", jl}};
}

NetworkSpec NetworkSpec::from_json(const json& j) {
    NetworkSpec spec;
    spec.name = j.at("name").get<std::string>();
    const json& in = j.at("input");
    spec.input = {in.at("channels").get<int>(), in.at("height").get<int>(),
                  in.at("width").get<int>()};
    spec.classes = j.at("classes").get<int>();
    for (const json& jl : j.at("layers")) {
        spec.layers.push_back({kind_from_string(jl.at("kind").get<std::string>()),
                               jl.at("weights").get<std::string>(),
                               jl.value("kernel", 1),
                               jl.at("in_channels").get<int>(),
                               jl.at("out_channels").get<int>(),
                               activation_from_string(jl.at("activation").get<std::string>())});
    }
    return spec;
}

NetworkSpec load_network_spec(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("network spec not found: " + path.string());
    }
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw std::runtime_error("invalid network spec " + path.string() + ": " + e.what());
    }
    return NetworkSpec::from_json(j);
}

void save_network_spec(const NetworkSpec& spec, const std::filesystem::path& path) {
    if (!path.parent_path().empty()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot open for writing: " + path.string());
    }
    out << spec.to_json().dump(2) << '\n';
}

Tensor forward(const NetworkSpec& spec, const ModelWeights& weights, const Tensor& batch) {
    spec.validate_against(weights);

    const std::int64_t row_size =
        static_cast<std::int64_t>(spec.input.channels) * spec.input.height * spec.input.width;
    std::int64_t n = 0;
    if (batch.shape.size() == 4 && batch.shape[1] == spec.input.channels &&
        batch.shape[2] == spec.input.height && batch.shape[3] == spec.input.width) {
        n = batch.shape[0];
    } else if (batch.shape.size() == 2 && spec.input.height == 1 && spec.input.width == 1 &&
               batch.shape[1] == spec.input.channels) {
        n = batch.shape[0];
    } else {
        throw std::runtime_error("batch shape mismatch");
    }
    if (batch.size() != n * row_size) {
        throw std::runtime_error("batch shape mismatch");
    }

    std::vector<const Tensor*> layer_weights;
    layer_weights.reserve(spec.layers.size());
    for (const NetLayerSpec& layer : spec.layers) {
        layer_weights.push_back(&weights_of(weights, layer));
    }

    Tensor logits;
    logits.shape = {n, spec.classes};
    logits.values.resize(static_cast<std::size_t>(n) * spec.classes);
    for (std::int64_t row = 0; row < n; ++row) {
        forward_row(spec, layer_weights, batch.values.data() + row * row_size,
                    logits.values.data() + row * spec.classes);
    }
    return logits;
}

EvalReport evaluate_agreement(const NetworkSpec& spec, const ModelWeights& f32_weights,
                              const ModelWeights& q_weights, const Tensor& batch, int k) {
    if (k < 1) {
        throw std::invalid_argument("k must be >= 1");
    }
    if (f32_weights.layers.size() != q_weights.layers.size()) {
        throw std::runtime_error("mismatched layer sets");
    }
    for (const LayerRecord& layer : f32_weights.layers) {
        const LayerRecord* other = q_weights.find(layer.name);
        if (other == nullptr || other->weights.shape != layer.weights.shape) {
            throw std::runtime_error("mismatched layer sets");
        }
    }

    const Tensor logits_f = forward(spec, f32_weights, batch);
    const Tensor logits_q = forward(spec, q_weights, batch);
    const std::int64_t n = logits_f.shape[0];
    const int c = spec.classes;

    std::int64_t top1_hits = 0;
    std::int64_t topk_hits = 0;
    double loss_acc = 0.0;
    for (std::int64_t row = 0; row < n; ++row) {
        const float* lf = logits_f.values.data() + row * c;
        const float* lq = logits_q.values.data() + row * c;
        const int label = argmax_lowest(lf, c);
        if (argmax_lowest(lq, c) == label) {
            ++top1_hits;
        }
        if (desc_rank(lq, c, label) < k) {
            ++topk_hits;
        }
        // Stable cross-entropy of the quantized logits against the label.
        double m = lq[0];
        for (int i = 1; i < c; ++i) m = std::max(m, static_cast<double>(lq[i]));
        double sum = 0.0;
        for (int i = 0; i < c; ++i) sum += std::exp(static_cast<double>(lq[i]) - m);
        loss_acc += m + std::log(sum) - static_cast<double>(lq[label]);
    }

    double qmse_acc = 0.0;
    for (const LayerRecord& layer : f32_weights.layers) {
        qmse_acc += quantization_mse(layer.weights, q_weights.find(layer.name)->weights);
    }

    EvalReport report;
    report.top1_agreement = static_cast<float>(static_cast<double>(top1_hits) / n);
    report.topk_agreement = static_cast<float>(static_cast<double>(topk_hits) / n);
    report.avg_loss = static_cast<float>(loss_acc / static_cast<double>(n));
    report.model_qmse =
        static_cast<float>(qmse_acc / static_cast<double>(f32_weights.layers.size()));
    return report;
}

SpearmanResult spearman_rank_correlation(std::span<const float> x, std::span<const float> y) {
    if (x.size() != y.size() || x.size() < 2) {
        throw std::invalid_argument("rank correlation needs two equal-length sequences");
    }
    const std::size_t n = x.size();

    auto ranks = [n](std::span<const float> v) {
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        std::stable_sort(idx.begin(), idx.end(),
                         [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
        std::vector<double> r(n);
        std::size_t i = 0;
        while (i < n) {
            std::size_t j = i;
            while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
            const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
            for (std::size_t t = i; t <= j; ++t) r[idx[t]] = avg;
            i = j + 1;
        }
        return r;
    };

    const std::vector<double> rx = ranks(x);
    const std::vector<double> ry = ranks(y);

    const double mean = (static_cast<double>(n) + 1.0) / 2.0;
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = rx[i] - mean;
        const double dy = ry[i] - mean;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (sxx == 0.0 || syy == 0.0) {
        return {0.0, true};
    }
    return {sxy / std::sqrt(sxx * syy), false};
}

CorrelationResult run_qe_accuracy_experiment(const NetworkSpec& spec,
                                             const ModelWeights& f32_weights,
                                             const Tensor& batch,
                                             std::span<const BitWidth> bits, int k) {
    if (bits.size() < 3) {
        throw std::invalid_argument("at least 3 bit-widths required");
    }

    CorrelationResult result;
    std::vector<float> qmse;
    std::vector<float> top1;
    for (BitWidth b : bits) {
        ModelWeights quantized;
        quantized.model_name = f32_weights.model_name;
        for (const LayerRecord& layer : f32_weights.layers) {
            quantized.layers.push_back({layer.name, layer.position, layer.layer_type,
                                        quantize_roundtrip(layer.weights, b)});
        }
        const EvalReport report = evaluate_agreement(spec, f32_weights, quantized, batch, k);
        result.points.push_back(
            {b.bits(), report.model_qmse, report.top1_agreement, report.avg_loss});
        qmse.push_back(report.model_qmse);
        top1.push_back(report.top1_agreement);
    }

    const SpearmanResult rho = spearman_rank_correlation(qmse, top1);
    result.rank_correlation = static_cast<float>(rho.rho);
    result.low_variance = rho.degenerate;
    return result;
}

float qe_accuracy_correlation(const NetworkSpec& spec, const ModelWeights& f32_weights,
                              const Tensor& batch, std::span<const BitWidth> bits) {
    return run_qe_accuracy_experiment(spec, f32_weights, batch, bits, 1).rank_correlation;
}

Tensor random_batch(int n, const InputSpec& input, std::uint64_t seed) {
    if (n < 1) {
        throw std::invalid_argument("batch size must be >= 1");
    }
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> dist(0.0f, 1.0f);

    Tensor batch;
    batch.shape = {n, input.channels, input.height, input.width};
    const std::int64_t total = element_count(batch.shape);
    batch.values.reserve(static_cast<std::size_t>(total));
    for (std::int64_t i = 0; i < total; ++i) {
        batch.values.push_back(dist(rng));
    }
    return batch;
}

ConvStack make_conv_stack(const ConvStackConfig& config) {
    if (config.conv_layers < 1) {
        throw std::invalid_argument("conv stack needs at least one conv layer");
    }

    ConvStack stack;
    stack.model_spec.model_name = config.name;
    stack.model_spec.seed = config.seed;
    stack.model_spec.stddev = config.stddev;
    stack.network.name = config.name;
    stack.network.input = {config.input_channels, config.height, config.width};
    stack.network.classes = config.classes;

    for (int i = 0; i < config.conv_layers; ++i) {
        const std::string name = "conv" + std::to_string(i);
        LayerType type;
        int kernel;
        int in_ch = (i == 0) ? config.input_channels : config.channels;
        if (i == 0) {
            type = LayerType::FirstConv;
            kernel = 3;
        } else if (i % 2 == 1) {
            type = LayerType::Conv3x3;
            kernel = 3;
        } else {
            type = LayerType::Conv1x1;
            kernel = 1;
        }
        stack.model_spec.layers.push_back(
            {name, type, {config.channels, in_ch, kernel, kernel}});
        stack.network.layers.push_back(
            {LayerKind::Conv2d, name, kernel, in_ch, config.channels, Activation::Relu});
    }

    stack.model_spec.layers.push_back(
        {"fc", LayerType::FullyConnected, {config.classes, config.channels}});
    stack.network.layers.push_back(
        {LayerKind::Dense, "fc", 1, config.channels, config.classes, Activation::None});
    return stack;
}

}  // namespace mixprec
