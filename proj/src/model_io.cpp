// SPDX-License-Identifier: Apache-2.0

#include "mixprec/model_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <stdexcept>
#include <unordered_set>

#include <json.hpp>

#include "mixprec/quant.hpp"

static_assert(std::endian::native == std::endian::little,
              "blob I/O assumes a little-endian host");

namespace mixprec {

namespace {

using nlohmann::json;

json read_json_file(const std::filesystem::path& path, const char* missing_message) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error(std::string(missing_message) + ": " + path.string());
    }
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw std::runtime_error("invalid manifest " + path.string() + ": " + e.what());
    }
    return j;
}

std::vector<char> read_blob(const std::filesystem::path& path, const std::string& blob_name) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("blob not found: " + blob_name);
    }
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                            std::istreambuf_iterator<char>());
    return bytes;
}

void write_file(const std::filesystem::path& path, const void* data, std::size_t size) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot open for writing: " + path.string());
    }
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
    if (!out) {
        throw std::runtime_error("write failed: " + path.string());
    }
}

std::string blob_filename(std::int64_t position, const std::string& layer_name,
                          const char* suffix) {
    std::string sanitized = layer_name;
    for (char& c : sanitized) {
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-' && c != '.') {
            c = '_';
        }
    }
    return std::to_string(position) + "_" + sanitized + suffix;
}

}  // namespace

ModelWeights load_model(const std::filesystem::path& manifest_path) {
    const json manifest = read_json_file(manifest_path, "manifest not found");
    const std::filesystem::path dir = manifest_path.parent_path();

    ModelWeights model;
    try {
        model.model_name = manifest.at("model_name").get<std::string>();
    } catch (const json::exception&) {
        throw std::runtime_error("invalid manifest: missing model_name");
    }

    if (!manifest.contains("layers") || !manifest["layers"].is_array()) {
        throw std::runtime_error("invalid manifest: missing layers");
    }

    for (const json& entry : manifest["layers"]) {
        LayerRecord layer;
        layer.name = entry.at("name").get<std::string>();
        layer.position = entry.at("position").get<std::int64_t>();
        layer.layer_type = layer_type_from_string(entry.at("layer_type").get<std::string>());
        if (entry.at("dtype").get<std::string>() != "f32") {
            throw std::runtime_error("unsupported dtype in " + layer.name);
        }
        layer.weights.shape = entry.at("shape").get<std::vector<std::int64_t>>();
        for (std::int64_t d : layer.weights.shape) {
            if (d <= 0) {
                throw std::runtime_error("invalid shape in " + layer.name);
            }
        }

        const std::string blob_name = entry.at("blob").get<std::string>();
        const std::vector<char> bytes = read_blob(dir / blob_name, blob_name);
        const std::int64_t expected = element_count(layer.weights.shape) * 4;
        if (static_cast<std::int64_t>(bytes.size()) != expected) {
            throw std::runtime_error("shape/blob mismatch");
        }

        layer.weights.values.resize(bytes.size() / 4);
        std::memcpy(layer.weights.values.data(), bytes.data(), bytes.size());
        for (float v : layer.weights.values) {
            if (!std::isfinite(v)) {
                throw std::runtime_error("non-finite weight in " + layer.name);
            }
        }
        model.layers.push_back(std::move(layer));
    }

    std::sort(model.layers.begin(), model.layers.end(),
              [](const LayerRecord& a, const LayerRecord& b) { return a.position < b.position; });
    validate_model(model);
    return model;
}

void save_model(const ModelWeights& model, const std::filesystem::path& manifest_path) {
    validate_model(model);
    const std::filesystem::path dir = manifest_path.parent_path();
    if (!dir.empty()) {
        std::filesystem::create_directories(dir);
    }

    json layers = json::array();
    for (const LayerRecord& layer : model.layers) {
        const std::string blob = blob_filename(layer.position, layer.name, ".bin");
        write_file(dir / blob, layer.weights.values.data(), layer.weights.values.size() * 4);
        layers.push_back({{"name", layer.name},
                          {"position", layer.position},
                          {"layer_type", std::string(to_string(layer.layer_type))},
                          {"shape", layer.weights.shape},
                          {"dtype", "f32"},
                          {"blob", blob}});
    }
    const json manifest = {{"model_name", model.model_name}, {"layers", layers}};
    const std::string text = manifest.dump(2);
    write_file(manifest_path, text.data(), text.size());
}

void save_quantized(const ModelWeights& model, const BitAllocation& allocation,
                    const std::filesystem::path& manifest_path) {
    validate_model(model);
    if (allocation.layer_names.size() != model.layers.size()) {
        throw std::runtime_error("allocation does not match model layer set");
    }
    for (const LayerRecord& layer : model.layers) {
        if (std::find(allocation.layer_names.begin(), allocation.layer_names.end(),
                      layer.name) == allocation.layer_names.end()) {
            throw std::runtime_error("allocation does not cover layer " + layer.name);
        }
    }

    const std::filesystem::path dir = manifest_path.parent_path();
    if (!dir.empty()) {
        std::filesystem::create_directories(dir);
    }

    json layers = json::array();
    for (const LayerRecord& layer : model.layers) {
        const BitWidth bits = allocation.bits_for(layer.name);
        const QuantizedTensor q = quantize(layer.weights, bits);

        std::vector<std::int8_t> packed(q.codes.size());
        for (std::size_t i = 0; i < q.codes.size(); ++i) {
            packed[i] = static_cast<std::int8_t>(q.codes[i]);
        }
        const std::string blob = blob_filename(layer.position, layer.name, ".q.bin");
        write_file(dir / blob, packed.data(), packed.size());

        layers.push_back({{"name", layer.name},
                          {"position", layer.position},
                          {"layer_type", std::string(to_string(layer.layer_type))},
                          {"shape", q.shape},
                          {"bits", bits.bits()},
                          {"scale", q.params.scale},
                          {"zero_point", q.params.zero_point},
                          {"codes_blob", blob}});
    }
    const json manifest = {
        {"model_name", model.model_name}, {"qem", allocation.qem}, {"layers", layers}};
    const std::string text = manifest.dump(2);
    write_file(manifest_path, text.data(), text.size());
}

QuantizedModel load_quantized(const std::filesystem::path& manifest_path) {
    const json manifest = read_json_file(manifest_path, "manifest not found");
    const std::filesystem::path dir = manifest_path.parent_path();

    QuantizedModel model;
    model.model_name = manifest.at("model_name").get<std::string>();
    model.qem = manifest.at("qem").get<float>();

    for (const json& entry : manifest.at("layers")) {
        QuantizedLayerRecord layer{
            entry.at("name").get<std::string>(),
            entry.at("position").get<std::int64_t>(),
            layer_type_from_string(entry.at("layer_type").get<std::string>()),
            QuantizedTensor{{},
                            {entry.at("scale").get<float>(),
                             entry.at("zero_point").get<std::int64_t>(),
                             BitWidth(entry.at("bits").get<int>())},
                            entry.at("shape").get<std::vector<std::int64_t>>()}};

        const std::string blob_name = entry.at("codes_blob").get<std::string>();
        const std::vector<char> bytes = read_blob(dir / blob_name, blob_name);
        if (static_cast<std::int64_t>(bytes.size()) != element_count(layer.tensor.shape)) {
            throw std::runtime_error("shape/blob mismatch");
        }
        const BitWidth bits = layer.tensor.params.bit_width;
        layer.tensor.codes.reserve(bytes.size());
        for (char c : bytes) {
            const std::int32_t code = static_cast<std::int8_t>(c);
            if (code < bits.qmin() || code > bits.qmax()) {
                throw std::runtime_error("code out of range in " + layer.name);
            }
            layer.tensor.codes.push_back(code);
        }
        model.layers.push_back(std::move(layer));
    }

    std::sort(model.layers.begin(), model.layers.end(),
              [](const QuantizedLayerRecord& a, const QuantizedLayerRecord& b) {
                  return a.position < b.position;
              });
    return model;
}

ModelWeights generate_synthetic_model(const SyntheticModelSpec& spec) {
    if (spec.layers.empty()) {
        throw std::invalid_argument("zero layers");
    }
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<float> dist(0.0f, spec.stddev);

    ModelWeights model;
    model.model_name = spec.model_name;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const SyntheticLayerSpec& ls = spec.layers[i];
        LayerRecord layer;
        layer.name = ls.name.empty() ? "layer" + std::to_string(i) : ls.name;
        layer.position = static_cast<std::int64_t>(i);
        layer.layer_type = ls.type;
        layer.weights.shape = ls.shape;
        const std::int64_t n = element_count(ls.shape);
        layer.weights.values.reserve(static_cast<std::size_t>(n));
        for (std::int64_t k = 0; k < n; ++k) {
            layer.weights.values.push_back(dist(rng));
        }
        model.layers.push_back(std::move(layer));
    }
    validate_model(model);
    return model;
}

}  // namespace mixprec
