// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "mixprec/tensor.hpp"

namespace mixprec {

enum class LayerType {
    FirstConv,
    Conv3x3,
    Conv1x1,
    FullyConnected,
    Other,
};

std::string_view to_string(LayerType t);
LayerType layer_type_from_string(std::string_view s);

struct LayerRecord {
    std::string name;
    std::int64_t position;
    LayerType layer_type;
    Tensor weights;
};

/// Ordered layer list; layer order equals position order (0..n-1).
struct ModelWeights {
    std::string model_name;
    std::vector<LayerRecord> layers;

    const LayerRecord* find(std::string_view name) const;

    /// Total f32 payload in bytes.
    std::int64_t f32_bytes() const;
};

/// Throws std::runtime_error when a ModelWeights invariant is violated:
/// no layers, duplicate names, or non-contiguous positions.
void validate_model(const ModelWeights& model);

/// Names of layers whose weights are constant (max == min), where the
/// degenerate scale substitute applies.
std::vector<std::string> degenerate_layers(const ModelWeights& model);

}  // namespace mixprec
