// SPDX-License-Identifier: Apache-2.0

#include "mixprec/search.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace mixprec {

std::vector<BitWidth> default_bit_widths() {
    std::vector<BitWidth> bits;
    for (int b = BitWidth::max_bits; b >= BitWidth::min_bits; --b) {
        bits.emplace_back(b);
    }
    return bits;
}

std::size_t ErrorTable::bit_index(BitWidth b) const {
    for (std::size_t i = 0; i < bit_widths.size(); ++i) {
        if (bit_widths[i] == b) {
            return i;
        }
    }
    throw std::invalid_argument("bit-width not in table");
}

BitWidth BitAllocation::bits_for(std::string_view layer) const {
    for (std::size_t i = 0; i < layer_names.size(); ++i) {
        if (layer_names[i] == layer) {
            return bits[i];
        }
    }
    throw std::invalid_argument("allocation does not cover layer " + std::string(layer));
}

std::vector<int> BitAllocation::bit_set() const {
    std::set<int> distinct;
    for (BitWidth b : bits) {
        distinct.insert(b.bits());
    }
    return {distinct.begin(), distinct.end()};
}

std::vector<std::string> BitAllocation::fallback_layers() const {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < layer_names.size(); ++i) {
        if (fallback[i]) {
            out.push_back(layer_names[i]);
        }
    }
    return out;
}

ErrorTable build_error_table(const ModelWeights& model, std::span<const BitWidth> bits) {
    validate_model(model);
    if (bits.empty() ||
        std::none_of(bits.begin(), bits.end(), [](BitWidth b) { return b.bits() == 8; })) {
        throw std::invalid_argument("baseline bit-width 8 required");
    }

    ErrorTable table;
    table.bit_widths.assign(bits.begin(), bits.end());
    const std::size_t baseline_index = table.bit_index(BitWidth(8));

    for (const LayerRecord& layer : model.layers) {
        table.layer_names.push_back(layer.name);
        std::vector<float> row;
        row.reserve(bits.size());
        for (BitWidth b : bits) {
            row.push_back(quantization_mse(layer.weights, quantize_roundtrip(layer.weights, b)));
        }
        table.baseline_qe.push_back(row[baseline_index]);
        table.qe.push_back(std::move(row));
    }
    return table;
}

namespace {

void check_qem(float qem) {
    if (!(qem > 0.0f) || !std::isfinite(qem)) {
        throw std::invalid_argument("qem must be > 0");
    }
}

}  // namespace

BitAllocation select_bit_widths(const ErrorTable& table, float qem) {
    check_qem(qem);

    BitAllocation alloc{table.layer_names, {}, {}, qem};
    alloc.bits.reserve(table.layer_names.size());
    alloc.fallback.reserve(table.layer_names.size());

    // Candidate order: ascending bit-width, so the first feasible hit is
    // the smallest. Output does not depend on this order.
    std::vector<std::size_t> ascending(table.bit_widths.size());
    for (std::size_t i = 0; i < ascending.size(); ++i) ascending[i] = i;
    std::sort(ascending.begin(), ascending.end(), [&](std::size_t a, std::size_t b) {
        return table.bit_widths[a] < table.bit_widths[b];
    });

    for (std::size_t l = 0; l < table.layer_names.size(); ++l) {
        const double threshold =
            static_cast<double>(table.baseline_qe[l]) * static_cast<double>(qem);
        bool found = false;
        for (std::size_t i : ascending) {
            if (static_cast<double>(table.qe[l][i]) <= threshold) {
                alloc.bits.push_back(table.bit_widths[i]);
                alloc.fallback.push_back(false);
                found = true;
                break;
            }
        }
        if (!found) {
            // Unsatisfiable threshold (qem < 1); keep the baseline width.
            alloc.bits.push_back(BitWidth(8));
            alloc.fallback.push_back(true);
        }
    }
    return alloc;
}

std::vector<BitAllocation> sweep_qems(const ErrorTable& table, std::span<const float> qems) {
    if (qems.empty()) {
        throw std::invalid_argument("empty qem list");
    }
    std::vector<BitAllocation> out;
    out.reserve(qems.size());
    for (float qem : qems) {
        out.push_back(select_bit_widths(table, qem));
    }
    return out;
}

BitAllocation oracle_select(const ErrorTable& table, float qem) {
    check_qem(qem);

    BitAllocation alloc{table.layer_names, {}, {}, qem};
    for (std::size_t l = 0; l < table.layer_names.size(); ++l) {
        std::vector<BitWidth> feasible;
        for (std::size_t i = 0; i < table.bit_widths.size(); ++i) {
            const double err = table.qe[l][i];
            const double limit =
                static_cast<double>(table.baseline_qe[l]) * static_cast<double>(qem);
            if (err <= limit) {
                feasible.push_back(table.bit_widths[i]);
            }
        }
        if (feasible.empty()) {
            alloc.bits.push_back(BitWidth(8));
            alloc.fallback.push_back(true);
        } else {
            alloc.bits.push_back(*std::min_element(feasible.begin(), feasible.end()));
            alloc.fallback.push_back(false);
        }
    }
    return alloc;
}

nlohmann::json error_table_to_json(const ErrorTable& table) {
    nlohmann::json bits = nlohmann::json::array();
    for (BitWidth b : table.bit_widths) {
        bits.push_back(b.bits());
    }
    nlohmann::json qe = nlohmann::json::array();
    for (const auto& row : table.qe) {
        qe.push_back(row);
    }
    return {{"layers", table.layer_names}, {"bits", bits}, {"qe", qe}};
}

nlohmann::json allocation_to_json(const BitAllocation& alloc) {
    nlohmann::json bits = nlohmann::json::object();
    for (std::size_t i = 0; i < alloc.layer_names.size(); ++i) {
        bits[alloc.layer_names[i]] = alloc.bits[i].bits();
    }
    return {{"qem", alloc.qem},
            {"bits", bits},
            {"bit_set", alloc.bit_set()},
            {"fallback_layers", alloc.fallback_layers()}};
}

BitAllocation allocation_from_json(const nlohmann::json& j) {
    BitAllocation alloc{{}, {}, {}, j.at("qem").get<float>()};
    const auto& bits = j.at("bits");
    for (auto it = bits.begin(); it != bits.end(); ++it) {
        alloc.layer_names.push_back(it.key());
        alloc.bits.emplace_back(it.value().get<int>());
        alloc.fallback.push_back(false);
    }
    for (const auto& name : j.at("fallback_layers")) {
        for (std::size_t i = 0; i < alloc.layer_names.size(); ++i) {
            if (alloc.layer_names[i] == name.get<std::string>()) {
                alloc.fallback[i] = true;
            }
        }
    }
    return alloc;
}

}  // namespace mixprec
