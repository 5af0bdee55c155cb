// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mixprec/model.hpp"
#include "mixprec/search.hpp"

namespace mixprec {

// Weight container: a UTF-8 JSON manifest next to raw binary blobs.
//
// Manifest:
//   {"model_name": str,
//    "layers": [{"name": str, "position": int, "layer_type": str,
//                "shape": [int...], "dtype": "f32", "blob": str}]}
//
// Blob: raw little-endian IEEE-754 binary32, row-major, no header. Blob
// paths are relative to the manifest's directory.

ModelWeights load_model(const std::filesystem::path& manifest_path);

/// Writes the manifest plus one blob per layer into the manifest's
/// directory (created if missing).
void save_model(const ModelWeights& model, const std::filesystem::path& manifest_path);

/// Quantized container: per layer the codes (one per byte, two's
/// complement), the scale/zero-point/bit-width, and the allocation echo.
struct QuantizedLayerRecord {
    std::string name;
    std::int64_t position;
    LayerType layer_type;
    QuantizedTensor tensor;
};

struct QuantizedModel {
    std::string model_name;
    float qem;
    std::vector<QuantizedLayerRecord> layers;
};

/// Quantizes every layer at its allocated bit-width and persists the
/// result. The allocation must cover the model's layers exactly.
void save_quantized(const ModelWeights& model, const BitAllocation& allocation,
                    const std::filesystem::path& manifest_path);

QuantizedModel load_quantized(const std::filesystem::path& manifest_path);

struct SyntheticLayerSpec {
    std::string name;
    LayerType type;
    std::vector<std::int64_t> shape;
};

struct SyntheticModelSpec {
    std::string model_name = "synthetic";
    std::uint64_t seed = 0;
    float stddev = 0.05f;
    std::vector<SyntheticLayerSpec> layers;
};

/// Gaussian-initialized weights; the same seed reproduces the model
/// byte-for-byte.
ModelWeights generate_synthetic_model(const SyntheticModelSpec& spec);

}  // namespace mixprec
