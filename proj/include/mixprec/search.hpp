// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "mixprec/model.hpp"
#include "mixprec/quant.hpp"

namespace mixprec {

/// Candidate bit-widths in evaluation order: 8, 7, 6, 5, 4, 3, 2.
std::vector<BitWidth> default_bit_widths();

/// Per-layer, per-bit-width quantization MSE, with the int8 column kept as
/// the selection baseline.
struct ErrorTable {
    std::vector<std::string> layer_names;
    std::vector<BitWidth> bit_widths;
    std::vector<std::vector<float>> qe;  // [layer][bit index]
    std::vector<float> baseline_qe;      // int8 column

    std::size_t bit_index(BitWidth b) const;
};

/// One bit-width per layer, chosen under a given quantization-error
/// multiplier. A layer is flagged as fallback when no candidate satisfied
/// the threshold (possible only for qem < 1); it is then kept at 8 bits.
struct BitAllocation {
    std::vector<std::string> layer_names;
    std::vector<BitWidth> bits;      // aligned with layer_names
    std::vector<bool> fallback;      // aligned with layer_names
    float qem;

    BitWidth bits_for(std::string_view layer) const;
    /// Sorted distinct bit-widths in use, e.g. {6, 7}.
    std::vector<int> bit_set() const;
    std::vector<std::string> fallback_layers() const;
};

/// Fills the L x B error table: qe[l][b] = MSE between layer l and its
/// quantize/dequantize roundtrip at bit-width b. Exactly one quantize call
/// per (layer, bit) cell. `bits` must contain 8.
ErrorTable build_error_table(const ModelWeights& model, std::span<const BitWidth> bits);

/// Picks, per layer, the smallest bit-width whose QE is at most
/// baseline_qe * qem. Requires qem > 0.
BitAllocation select_bit_widths(const ErrorTable& table, float qem);

/// One allocation per multiplier, all computed from the same table.
std::vector<BitAllocation> sweep_qems(const ErrorTable& table, std::span<const float> qems);

/// Independent reference selection: enumerates every candidate per layer
/// with no early exit, then takes the minimum feasible bit-width. Exists to
/// cross-check select_bit_widths in tests.
BitAllocation oracle_select(const ErrorTable& table, float qem);

nlohmann::json error_table_to_json(const ErrorTable& table);
nlohmann::json allocation_to_json(const BitAllocation& alloc);
BitAllocation allocation_from_json(const nlohmann::json& j);

}  // namespace mixprec
