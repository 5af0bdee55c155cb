// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mixprec/model.hpp"
#include "mixprec/model_io.hpp"

namespace mixprec {

// Minimal f32 forward-pass engine: a stack of 2-D convolutions (1x1 or
// 3x3, stride 1, same padding, no bias), ReLU where requested, global
// average pooling, then dense layers ending at the classifier width.
// Weights arrive already dequantized; all arithmetic is f32.

enum class Activation { None, Relu };
enum class LayerKind { Dense, Conv2d };

struct NetLayerSpec {
    LayerKind kind;
    std::string weights_name;
    int kernel;  // 1 or 3; ignored for dense layers
    int in_channels;
    int out_channels;
    Activation activation;
};

struct InputSpec {
    int channels;
    int height;
    int width;
};

struct NetworkSpec {
    std::string name;
    InputSpec input;
    int classes;
    std::vector<NetLayerSpec> layers;

    /// Checks layer composition and that every referenced weight tensor
    /// exists with the right shape. Errors name the offending layer.
    void validate_against(const ModelWeights& weights) const;

    nlohmann::json to_json() const;
    static NetworkSpec from_json(const nlohmann::json& j);
};

NetworkSpec load_network_spec(const std::filesystem::path& path);
void save_network_spec(const NetworkSpec& spec, const std::filesystem::path& path);

/// Runs the batch through the network. Batch shape is {N, c, h, w} (or
/// {N, d} when h == w == 1); output is {N, classes}.
Tensor forward(const NetworkSpec& spec, const ModelWeights& weights, const Tensor& batch);

struct EvalReport {
    float top1_agreement;
    float topk_agreement;
    float avg_loss;
    float model_qmse;
};

/// Compares a quantized weight set against the f32 reference on the same
/// batch. Labels are the f32 model's argmax (ties to the lowest class), so
/// no dataset is needed.
EvalReport evaluate_agreement(const NetworkSpec& spec, const ModelWeights& f32_weights,
                              const ModelWeights& q_weights, const Tensor& batch, int k);

struct CorrelationPoint {
    int bits;
    float model_qmse;
    float top1_agreement;
    float avg_loss;
};

struct CorrelationResult {
    std::vector<CorrelationPoint> points;
    float rank_correlation;
    bool low_variance;  // a rank sequence had no spread; correlation forced to 0
};

/// Quantizes the whole model uniformly at each bit-width, evaluates
/// agreement, and rank-correlates model QMSE with top-1 agreement.
/// Requires at least 3 bit-widths.
CorrelationResult run_qe_accuracy_experiment(const NetworkSpec& spec,
                                             const ModelWeights& f32_weights,
                                             const Tensor& batch,
                                             std::span<const BitWidth> bits, int k);

float qe_accuracy_correlation(const NetworkSpec& spec, const ModelWeights& f32_weights,
                              const Tensor& batch, std::span<const BitWidth> bits);

struct SpearmanResult {
    double rho;
    bool degenerate;  // zero variance in a rank sequence
};

/// Spearman rank correlation with average ranks for ties.
SpearmanResult spearman_rank_correlation(std::span<const float> x, std::span<const float> y);

/// Seeded standard-normal batch of `n` inputs matching the spec's input
/// dimensions.
Tensor random_batch(int n, const InputSpec& input, std::uint64_t seed);

/// Convenience factory: a conv stack (first conv, then alternating 3x3 and
/// 1x1 convs, then one fully connected classifier) together with matching
/// synthetic weights. Total layer count is conv_layers + 1.
struct ConvStackConfig {
    std::string name = "convstack";
    int conv_layers = 3;
    int channels = 8;
    int input_channels = 3;
    int height = 8;
    int width = 8;
    int classes = 10;
    std::uint64_t seed = 0;
    float stddev = 0.25f;
};

struct ConvStack {
    SyntheticModelSpec model_spec;
    NetworkSpec network;
};

ConvStack make_conv_stack(const ConvStackConfig& config);

}  // namespace mixprec
