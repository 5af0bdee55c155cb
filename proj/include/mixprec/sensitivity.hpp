// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <ostream>
#include <span>
#include <vector>

#include "mixprec/model.hpp"
#include "mixprec/quant.hpp"

namespace mixprec {

struct SweepMetrics {
    float top1_agreement;
    float avg_loss;
    float model_qmse;
};

struct TypeSweepResult {
    LayerType layer_type;
    BitWidth bit_width;
    SweepMetrics metrics;
};

/// Maps a dequantized weight set to quality metrics. The callback decides
/// what "quality" means (typically the inference agreement proxy).
using SweepEvalFn = std::function<SweepMetrics(const ModelWeights& dequantized)>;

/// Quantizes layers of the swept type at `b` and every other layer at 8
/// bits, from the original f32 weights.
std::vector<QuantizedTensor> quantize_type_at(const ModelWeights& model, LayerType swept,
                                              BitWidth b);

/// Rebuilds a ModelWeights with the same metadata but dequantized values.
ModelWeights dequantize_layers(const ModelWeights& reference,
                               const std::vector<QuantizedTensor>& quantized);

/// For each layer type present and each bit-width, quantizes that type at
/// the bit-width (others stay at 8) and evaluates the result. The f32
/// weights are never mutated.
std::vector<TypeSweepResult> layer_type_sweep(const ModelWeights& model,
                                              const SweepEvalFn& eval,
                                              std::span<const BitWidth> bits);

/// Per-position relative quantization error across bit-widths, plus the
/// most sensitive position per bit-width (argmax of |RQE|, ties to the
/// lowest position).
struct PositionRqeTable {
    std::vector<BitWidth> bit_widths;
    std::vector<std::vector<float>> rqe;     // [position][bit index]
    std::vector<std::int64_t> most_sensitive;  // [bit index] -> position
};

PositionRqeTable layer_position_rqe(const ModelWeights& model, std::span<const BitWidth> bits);

void write_type_sweep_csv(std::ostream& out, const std::vector<TypeSweepResult>& results);
void write_rqe_csv(std::ostream& out, const PositionRqeTable& table);
void write_most_sensitive_csv(std::ostream& out, const PositionRqeTable& table);

}  // namespace mixprec
