// SPDX-License-Identifier: Apache-2.0

#include "mixprec/sensitivity.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace mixprec {

namespace {

constexpr std::array<LayerType, 5> all_types = {
    LayerType::FirstConv, LayerType::Conv3x3, LayerType::Conv1x1,
    LayerType::FullyConnected, LayerType::Other};

std::string fmt_float(float v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(v));
    return buf;
}

}  // namespace

std::vector<QuantizedTensor> quantize_type_at(const ModelWeights& model, LayerType swept,
                                              BitWidth b) {
    std::vector<QuantizedTensor> out;
    out.reserve(model.layers.size());
    for (const LayerRecord& layer : model.layers) {
        out.push_back(quantize(layer.weights, layer.layer_type == swept ? b : BitWidth(8)));
    }
    return out;
}

ModelWeights dequantize_layers(const ModelWeights& reference,
                               const std::vector<QuantizedTensor>& quantized) {
    if (quantized.size() != reference.layers.size()) {
        throw std::invalid_argument("quantized layer count mismatch");
    }
    ModelWeights out;
    out.model_name = reference.model_name;
    out.layers.reserve(reference.layers.size());
    for (std::size_t i = 0; i < reference.layers.size(); ++i) {
        const LayerRecord& ref = reference.layers[i];
        out.layers.push_back(
            {ref.name, ref.position, ref.layer_type, dequantize(quantized[i])});
    }
    return out;
}

std::vector<TypeSweepResult> layer_type_sweep(const ModelWeights& model,
                                              const SweepEvalFn& eval,
                                              std::span<const BitWidth> bits) {
    validate_model(model);
    if (!eval) {
        throw std::invalid_argument("evaluation callback required");
    }

    std::vector<TypeSweepResult> results;
    for (LayerType type : all_types) {
        bool present = false;
        for (const LayerRecord& layer : model.layers) {
            present = present || layer.layer_type == type;
        }
        if (!present) {
            continue;
        }
        for (BitWidth b : bits) {
            const ModelWeights deq = dequantize_layers(model, quantize_type_at(model, type, b));
            results.push_back({type, b, eval(deq)});
        }
    }
    return results;
}

PositionRqeTable layer_position_rqe(const ModelWeights& model, std::span<const BitWidth> bits) {
    validate_model(model);

    PositionRqeTable table;
    table.bit_widths.assign(bits.begin(), bits.end());
    for (const LayerRecord& layer : model.layers) {
        std::vector<float> row;
        row.reserve(bits.size());
        for (BitWidth b : bits) {
            row.push_back(relative_qe(layer.weights, quantize_roundtrip(layer.weights, b)));
        }
        table.rqe.push_back(std::move(row));
    }

    for (std::size_t bi = 0; bi < table.bit_widths.size(); ++bi) {
        std::int64_t best = 0;
        for (std::size_t pos = 1; pos < table.rqe.size(); ++pos) {
            if (std::abs(table.rqe[pos][bi]) >
                std::abs(table.rqe[static_cast<std::size_t>(best)][bi])) {
                best = static_cast<std::int64_t>(pos);
            }
        }
        table.most_sensitive.push_back(best);
    }
    return table;
}

void write_type_sweep_csv(std::ostream& out, const std::vector<TypeSweepResult>& results) {
    out << "layer_type,bits,top1_agreement,avg_loss,model_qmse\n";
    for (const TypeSweepResult& r : results) {
        out << to_string(r.layer_type) << ',' << r.bit_width.bits() << ','
            << fmt_float(r.metrics.top1_agreement) << ',' << fmt_float(r.metrics.avg_loss)
            << ',' << fmt_float(r.metrics.model_qmse) << '\n';
    }
}

void write_rqe_csv(std::ostream& out, const PositionRqeTable& table) {
    out << "position,bits,rqe\n";
    for (std::size_t pos = 0; pos < table.rqe.size(); ++pos) {
        for (std::size_t bi = 0; bi < table.bit_widths.size(); ++bi) {
            out << pos << ',' << table.bit_widths[bi].bits() << ','
                << fmt_float(table.rqe[pos][bi]) << '\n';
        }
    }
}

void write_most_sensitive_csv(std::ostream& out, const PositionRqeTable& table) {
    out << "bits,most_sensitive_position\n";
    for (std::size_t bi = 0; bi < table.bit_widths.size(); ++bi) {
        out << table.bit_widths[bi].bits() << ',' << table.most_sensitive[bi] << '\n';
    }
}

}  // namespace mixprec
