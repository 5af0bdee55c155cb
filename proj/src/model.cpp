// SPDX-License-Identifier: Apache-2.0

#include "mixprec/model.hpp"

#include <algorithm>
#include <stdexcept>
#include <unordered_set>

namespace mixprec {

std::string_view to_string(LayerType t) {
    switch (t) {
        case LayerType::FirstConv: return "first_conv";
        case LayerType::Conv3x3: return "conv3x3";
        case LayerType::Conv1x1: return "conv1x1";
        case LayerType::FullyConnected: return "fully_connected";
        case LayerType::Other: return "other";
    }
    return "other";
}

LayerType layer_type_from_string(std::string_view s) {
    if (s == "first_conv") return LayerType::FirstConv;
    if (s == "conv3x3") return LayerType::Conv3x3;
    if (s == "conv1x1") return LayerType::Conv1x1;
    if (s == "fully_connected") return LayerType::FullyConnected;
    if (s == "other") return LayerType::Other;
    throw std::runtime_error("unknown layer_type: " + std::string(s));
}

const LayerRecord* ModelWeights::find(std::string_view name) const {
    for (const LayerRecord& layer : layers) {
        if (layer.name == name) {
            return &layer;
        }
    }
    return nullptr;
}

std::int64_t ModelWeights::f32_bytes() const {
    std::int64_t total = 0;
    for (const LayerRecord& layer : layers) {
        total += layer.weights.size() * 4;
    }
    return total;
}

void validate_model(const ModelWeights& model) {
    if (model.layers.empty()) {
        throw std::runtime_error("model has no layers");
    }
    std::unordered_set<std::string> names;
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        const LayerRecord& layer = model.layers[i];
        if (!names.insert(layer.name).second) {
            throw std::runtime_error("duplicate layer: " + layer.name);
        }
        if (layer.position != static_cast<std::int64_t>(i)) {
            throw std::runtime_error("non-contiguous positions");
        }
        validate_tensor(layer.weights);
    }
}

std::vector<std::string> degenerate_layers(const ModelWeights& model) {
    std::vector<std::string> out;
    for (const LayerRecord& layer : model.layers) {
        if (layer.weights.values.empty()) {
            continue;
        }
        const auto [lo, hi] = std::minmax_element(layer.weights.values.begin(),
                                                  layer.weights.values.end());
        if (*lo == *hi) {
            out.push_back(layer.name);
        }
    }
    return out;
}

}  // namespace mixprec
