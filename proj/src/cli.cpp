// SPDX-License-Identifier: Apache-2.0

#include "mixprec/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "mixprec/inference.hpp"
#include "mixprec/model_io.hpp"
#include "mixprec/search.hpp"
#include "mixprec/sensitivity.hpp"

namespace mixprec {

namespace {

using nlohmann::json;
using steady_clock = std::chrono::steady_clock;

double seconds_since(steady_clock::time_point start) {
    return std::chrono::duration<double>(steady_clock::now() - start).count();
}

std::string fmt_float(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

std::string fmt_qem(float q) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", static_cast<double>(q));
    return buf;
}

std::string bit_set_string(const std::vector<int>& bits) {
    std::string out;
    for (std::size_t i = 0; i < bits.size(); ++i) {
        if (i > 0) out += ", ";
        out += std::to_string(bits[i]);
    }
    return out;
}

std::vector<BitWidth> parse_bits(const std::vector<int>& bits) {
    if (bits.empty()) {
        throw std::invalid_argument("bits list required");
    }
    std::vector<BitWidth> out;
    bool has_baseline = false;
    for (int b : bits) {
        out.emplace_back(b);  // range-checked by BitWidth
        has_baseline = has_baseline || b == 8;
    }
    if (!has_baseline) {
        throw std::invalid_argument("bits list must contain 8");
    }
    return out;
}

void check_qems(const std::vector<float>& qems) {
    if (qems.empty()) {
        throw std::invalid_argument("qem list required");
    }
    for (float q : qems) {
        if (!(q > 0.0f)) {
            throw std::invalid_argument("qem must be > 0");
        }
    }
}

ModelWeights load_model_with_warnings(const RunConfig& config) {
    ModelWeights model = load_model(config.model_manifest);
    for (const std::string& name : degenerate_layers(model)) {
        std::cerr << "warning: layer " << name
                  << " has constant weights; scale degenerates to 1.0 and codes collapse to "
                     "the zero point\n";
    }
    return model;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot open for writing: " + path.string());
    }
    out << text;
}

std::filesystem::path ensure_out_dir(const RunConfig& config) {
    if (!config.out_dir.empty()) {
        std::filesystem::create_directories(config.out_dir);
    }
    return config.out_dir;
}

// Tabular emission: rows carry typed cells so CSV and JSON renderings hold
// identical values (CSV prints floats with %.9g, which round-trips f32).
struct Table {
    std::vector<std::string> columns;
    std::vector<json> rows;

    std::string to_csv() const {
        std::ostringstream out;
        for (std::size_t i = 0; i < columns.size(); ++i) {
            if (i > 0) out << ',';
            out << columns[i];
        }
        out << '\n';
        for (const json& row : rows) {
            for (std::size_t i = 0; i < columns.size(); ++i) {
                if (i > 0) out << ',';
                const json& cell = row.at(columns[i]);
                if (cell.is_string()) {
                    const std::string s = cell.get<std::string>();
                    if (s.find(',') != std::string::npos) {
                        out << '"' << s << '"';
                    } else {
                        out << s;
                    }
                } else if (cell.is_number_float()) {
                    out << fmt_float(cell.get<double>());
                } else {
                    out << cell.dump();
                }
            }
            out << '\n';
        }
        return out.str();
    }

    std::string to_json_text() const {
        return json(rows).dump(2) + "\n";
    }
};

void emit_table(const Table& table, const RunConfig& config, const std::string& stem) {
    const std::filesystem::path dir = ensure_out_dir(config);
    if (config.format == "json") {
        write_text(dir / (stem + ".json"), table.to_json_text());
    } else if (config.format == "csv") {
        write_text(dir / (stem + ".csv"), table.to_csv());
    } else {
        throw std::invalid_argument("unknown format: " + config.format);
    }
}

double theoretical_quantized_bytes(const ModelWeights& model, const BitAllocation& alloc) {
    double bits_total = 0.0;
    for (const LayerRecord& layer : model.layers) {
        bits_total += static_cast<double>(layer.weights.size()) *
                      alloc.bits_for(layer.name).bits();
    }
    return bits_total / 8.0;
}

float allocation_qmse(const ErrorTable& table, const BitAllocation& alloc) {
    double acc = 0.0;
    for (std::size_t l = 0; l < table.layer_names.size(); ++l) {
        acc += table.qe[l][table.bit_index(alloc.bits[l])];
    }
    return static_cast<float>(acc / static_cast<double>(table.layer_names.size()));
}

void write_allocations(const std::vector<BitAllocation>& allocations,
                       const ModelWeights& model, const RunConfig& config) {
    const std::filesystem::path dir = ensure_out_dir(config);
    for (const BitAllocation& alloc : allocations) {
        const std::string name =
            "allocation_" + model.model_name + "_qem" + fmt_qem(alloc.qem) + ".json";
        write_text(dir / name, allocation_to_json(alloc).dump(2) + "\n");
    }
}

struct RuntimeReport {
    double search_seconds;
    double search_plus_quantization_seconds;
    std::int64_t layer_count;
    std::int64_t qem_count;
};

// search phase = error table + selection; quantization phase additionally
// materializes the quantized tensors for the first allocation.
RuntimeReport timed_search(const ModelWeights& model, std::span<const BitWidth> bits,
                           std::span<const float> qems,
                           std::vector<BitAllocation>* allocations_out,
                           ErrorTable* table_out) {
    const auto start = steady_clock::now();
    ErrorTable table = build_error_table(model, bits);
    std::vector<BitAllocation> allocations = sweep_qems(table, qems);
    const double t_search = seconds_since(start);

    std::vector<QuantizedTensor> materialized;
    materialized.reserve(model.layers.size());
    for (const LayerRecord& layer : model.layers) {
        materialized.push_back(quantize(layer.weights, allocations[0].bits_for(layer.name)));
    }
    const double t_total = seconds_since(start);

    if (allocations_out != nullptr) *allocations_out = std::move(allocations);
    if (table_out != nullptr) *table_out = std::move(table);
    return {t_search, t_total, static_cast<std::int64_t>(model.layers.size()),
            static_cast<std::int64_t>(qems.size())};
}

Table runtime_table(const ModelWeights& model, std::span<const RuntimeReport> reports) {
    Table table;
    table.columns = {"architecture", "qem_count", "layer_count", "search_seconds",
                     "search_plus_quantization_seconds"};
    for (const RuntimeReport& r : reports) {
        table.rows.push_back({{"architecture", model.model_name},
                              {"qem_count", r.qem_count},
                              {"layer_count", r.layer_count},
                              {"search_seconds", r.search_seconds},
                              {"search_plus_quantization_seconds",
                               r.search_plus_quantization_seconds}});
    }
    return table;
}

Tensor make_batch(const RunConfig& config, const NetworkSpec& spec) {
    if (config.batch_blob.empty()) {
        return random_batch(config.batch_size, spec.input, config.seed);
    }
    std::ifstream in(config.batch_blob, std::ios::binary);
    if (!in) {
        throw std::runtime_error("blob not found: " + config.batch_blob.string());
    }
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                            std::istreambuf_iterator<char>());
    const std::int64_t row_bytes =
        static_cast<std::int64_t>(spec.input.channels) * spec.input.height * spec.input.width * 4;
    if (bytes.empty() || static_cast<std::int64_t>(bytes.size()) % row_bytes != 0) {
        throw std::runtime_error("shape/blob mismatch");
    }
    Tensor batch;
    batch.shape = {static_cast<std::int64_t>(bytes.size()) / row_bytes, spec.input.channels,
                   spec.input.height, spec.input.width};
    batch.values.resize(bytes.size() / 4);
    std::memcpy(batch.values.data(), bytes.data(), bytes.size());
    validate_tensor(batch);
    return batch;
}

/// Builds the dequantized weight set implied by an allocation.
ModelWeights apply_allocation(const ModelWeights& model, const BitAllocation& alloc) {
    ModelWeights out;
    out.model_name = model.model_name;
    for (const LayerRecord& layer : model.layers) {
        out.layers.push_back({layer.name, layer.position, layer.layer_type,
                              quantize_roundtrip(layer.weights, alloc.bits_for(layer.name))});
    }
    return out;
}

void run_search_like(const RunConfig& config, const std::string& command,
                     const std::vector<float>& qems) {
    check_qems(qems);
    const std::vector<BitWidth> bits = parse_bits(config.bits);
    const ModelWeights model = load_model_with_warnings(config);

    std::vector<BitAllocation> allocations;
    ErrorTable table;
    const RuntimeReport runtime = timed_search(model, bits, qems, &allocations, &table);

    write_allocations(allocations, model, config);

    const bool with_eval = config.eval;
    NetworkSpec spec;
    Tensor batch;
    if (with_eval) {
        if (config.network_spec.empty()) {
            throw std::invalid_argument("--eval requires --net");
        }
        spec = load_network_spec(config.network_spec);
        spec.validate_against(model);
        batch = make_batch(config, spec);
    }

    Table summary;
    summary.columns = {"architecture", "qem", "layers_bit_widths", "model_qmse"};
    if (with_eval) {
        summary.columns.insert(summary.columns.end(),
                               {"top1_agreement", "topk_agreement", "avg_loss"});
    }
    summary.columns.insert(summary.columns.end(), {"f32_bytes", "quantized_bytes"});

    for (const BitAllocation& alloc : allocations) {
        json row = {{"architecture", model.model_name},
                    {"qem", static_cast<double>(alloc.qem)},
                    {"layers_bit_widths", bit_set_string(alloc.bit_set())},
                    {"model_qmse", static_cast<double>(allocation_qmse(table, alloc))},
                    {"f32_bytes", model.f32_bytes()},
                    {"quantized_bytes", theoretical_quantized_bytes(model, alloc)}};
        if (with_eval) {
            const EvalReport report =
                evaluate_agreement(spec, model, apply_allocation(model, alloc), batch, config.topk);
            row["top1_agreement"] = static_cast<double>(report.top1_agreement);
            row["topk_agreement"] = static_cast<double>(report.topk_agreement);
            row["avg_loss"] = static_cast<double>(report.avg_loss);
        }
        for (const std::string& layer : alloc.fallback_layers()) {
            std::cerr << "warning: qem " << fmt_qem(alloc.qem) << " unsatisfiable for layer "
                      << layer << "; falling back to 8 bits\n";
        }
        summary.rows.push_back(std::move(row));
    }
    emit_table(summary, config, command + "_" + model.model_name);

    const RuntimeReport reports[] = {runtime};
    Table rt = runtime_table(model, reports);
    write_text(ensure_out_dir(config) / (command + "_runtime_" + model.model_name + ".csv"),
               rt.to_csv());

    std::cout << summary.to_csv();
}

}  // namespace

void run_search(const RunConfig& config) {
    run_search_like(config, "search", config.qems);
}

void run_sweep(const RunConfig& config) {
    check_qems(config.qems);
    std::vector<float> qems;
    for (float q : config.qems) {
        if (std::find(qems.begin(), qems.end(), q) != qems.end()) {
            std::cerr << "warning: duplicate qem " << fmt_qem(q) << " ignored\n";
            continue;
        }
        qems.push_back(q);
    }
    run_search_like(config, "sweep", qems);
}

void run_quantize(const RunConfig& config) {
    std::vector<float> qems = config.qems;
    if (qems.empty()) {
        qems = {1.0f};
    }
    if (qems.size() > 1) {
        std::cerr << "warning: quantize uses the first qem only\n";
        qems.resize(1);
    }
    check_qems(qems);

    const std::vector<BitWidth> bits = parse_bits(config.bits);
    const ModelWeights model = load_model_with_warnings(config);

    const ErrorTable table = build_error_table(model, bits);
    const BitAllocation alloc = select_bit_widths(table, qems[0]);

    const std::filesystem::path dir = ensure_out_dir(config);
    const std::filesystem::path manifest = dir / ("quantized_" + model.model_name + ".json");
    save_quantized(model, alloc, manifest);

    std::cout << "wrote " << manifest.string() << "\n"
              << "bit set: " << bit_set_string(alloc.bit_set()) << "\n"
              << "f32 bytes: " << model.f32_bytes() << "\n"
              << "theoretical quantized bytes: "
              << fmt_float(theoretical_quantized_bytes(model, alloc)) << "\n";
}

void run_ablate(const RunConfig& config) {
    if (config.network_spec.empty()) {
        throw std::invalid_argument("network spec required for ablate");
    }
    const std::vector<BitWidth> bits = parse_bits(config.bits);
    const ModelWeights model = load_model_with_warnings(config);
    const NetworkSpec spec = load_network_spec(config.network_spec);
    spec.validate_against(model);
    const Tensor batch = make_batch(config, spec);

    const SweepEvalFn eval = [&](const ModelWeights& deq) {
        const EvalReport report = evaluate_agreement(spec, model, deq, batch, config.topk);
        return SweepMetrics{report.top1_agreement, report.avg_loss, report.model_qmse};
    };

    const std::vector<TypeSweepResult> sweep = layer_type_sweep(model, eval, bits);
    const PositionRqeTable rqe = layer_position_rqe(model, bits);

    // Exclusions depend only on the f32 weights, not the bit-width.
    std::int64_t excluded = 0;
    for (const LayerRecord& layer : model.layers) {
        for (float w : layer.weights.values) {
            if (std::abs(static_cast<double>(w)) <= rqe_zero_epsilon) ++excluded;
        }
    }
    if (excluded > 0) {
        std::cerr << "note: " << excluded
                  << " near-zero weights excluded from the rqe means\n";
    }

    const std::filesystem::path dir = ensure_out_dir(config);
    if (config.format == "json") {
        json type_sweep = json::array();
        for (const TypeSweepResult& r : sweep) {
            type_sweep.push_back({{"layer_type", std::string(to_string(r.layer_type))},
                                  {"bits", r.bit_width.bits()},
                                  {"top1_agreement", static_cast<double>(r.metrics.top1_agreement)},
                                  {"avg_loss", static_cast<double>(r.metrics.avg_loss)},
                                  {"model_qmse", static_cast<double>(r.metrics.model_qmse)}});
        }
        json rqe_rows = json::array();
        json most = json::array();
        for (std::size_t pos = 0; pos < rqe.rqe.size(); ++pos) {
            for (std::size_t bi = 0; bi < rqe.bit_widths.size(); ++bi) {
                rqe_rows.push_back({{"position", pos},
                                    {"bits", rqe.bit_widths[bi].bits()},
                                    {"rqe", static_cast<double>(rqe.rqe[pos][bi])}});
            }
        }
        for (std::size_t bi = 0; bi < rqe.bit_widths.size(); ++bi) {
            most.push_back({{"bits", rqe.bit_widths[bi].bits()},
                            {"most_sensitive_position", rqe.most_sensitive[bi]}});
        }
        const json doc = {
            {"type_sweep", type_sweep}, {"rqe", rqe_rows}, {"most_sensitive", most}};
        write_text(dir / ("ablate_" + model.model_name + ".json"), doc.dump(2) + "\n");
    } else {
        std::ostringstream a, b, c;
        write_type_sweep_csv(a, sweep);
        write_rqe_csv(b, rqe);
        write_most_sensitive_csv(c, rqe);
        write_text(dir / ("ablate_type_sweep_" + model.model_name + ".csv"), a.str());
        write_text(dir / ("ablate_rqe_" + model.model_name + ".csv"), b.str());
        write_text(dir / ("ablate_most_sensitive_" + model.model_name + ".csv"), c.str());
    }
    std::cout << "ablation outputs written to " << dir.string() << "\n";
}

void run_correlate(const RunConfig& config) {
    if (config.network_spec.empty()) {
        throw std::invalid_argument("network spec required for correlate");
    }
    const std::vector<BitWidth> bits = parse_bits(config.bits);
    const ModelWeights model = load_model_with_warnings(config);
    const NetworkSpec spec = load_network_spec(config.network_spec);
    spec.validate_against(model);
    const Tensor batch = make_batch(config, spec);

    const CorrelationResult result =
        run_qe_accuracy_experiment(spec, model, batch, bits, config.topk);
    if (result.low_variance) {
        std::cerr << "warning: metric spread too low for a meaningful rank correlation\n";
    }

    Table points;
    points.columns = {"bits", "model_qmse", "top1_agreement", "avg_loss"};
    for (const CorrelationPoint& p : result.points) {
        points.rows.push_back({{"bits", p.bits},
                               {"model_qmse", static_cast<double>(p.model_qmse)},
                               {"top1_agreement", static_cast<double>(p.top1_agreement)},
                               {"avg_loss", static_cast<double>(p.avg_loss)}});
    }

    const std::filesystem::path dir = ensure_out_dir(config);
    if (config.format == "json") {
        const json doc = {{"points", json(points.rows)},
                          {"rank_correlation", static_cast<double>(result.rank_correlation)},
                          {"low_variance", result.low_variance}};
        write_text(dir / ("correlate_" + model.model_name + ".json"), doc.dump(2) + "\n");
    } else {
        emit_table(points, config, "correlate_" + model.model_name);
        Table summary;
        summary.columns = {"architecture", "rank_correlation", "low_variance"};
        summary.rows.push_back(
            {{"architecture", model.model_name},
             {"rank_correlation", static_cast<double>(result.rank_correlation)},
             {"low_variance", result.low_variance}});
        write_text(dir / ("correlate_summary_" + model.model_name + ".csv"), summary.to_csv());
    }
    std::cout << "rank correlation: " << fmt_float(result.rank_correlation) << "\n";
}

void run_report(const RunConfig& config) {
    const std::vector<BitWidth> bits = parse_bits(config.bits);
    const ModelWeights model = load_model_with_warnings(config);

    const std::vector<float> one_qem = {2.0f};
    std::vector<float> ten_qems;
    for (int i = 1; i <= 10; ++i) {
        ten_qems.push_back(1.0f + 0.1f * static_cast<float>(i));
    }

    std::vector<RuntimeReport> reports;
    reports.push_back(timed_search(model, bits, one_qem, nullptr, nullptr));
    reports.push_back(timed_search(model, bits, ten_qems, nullptr, nullptr));

    const Table table = runtime_table(model, reports);
    const std::filesystem::path dir = ensure_out_dir(config);
    if (config.format == "json") {
        write_text(dir / ("report_" + model.model_name + ".json"), table.to_json_text());
    } else {
        write_text(dir / ("report_" + model.model_name + ".csv"), table.to_csv());
    }
    std::cout << table.to_csv();
}

void run_gen(const GenConfig& config) {
    if (config.layers < 2) {
        throw std::invalid_argument("need at least 2 layers (one conv plus the classifier)");
    }
    ConvStackConfig stack_config;
    stack_config.name = config.name;
    stack_config.conv_layers = config.layers - 1;
    stack_config.channels = config.channels;
    stack_config.input_channels = config.input_channels;
    stack_config.height = config.image_size;
    stack_config.width = config.image_size;
    stack_config.classes = config.classes;
    stack_config.seed = config.seed;

    const ConvStack stack = make_conv_stack(stack_config);
    const ModelWeights model = generate_synthetic_model(stack.model_spec);

    std::filesystem::path dir = config.out_dir;
    if (!dir.empty()) {
        std::filesystem::create_directories(dir);
    }
    const std::filesystem::path manifest = dir / (config.name + ".json");
    save_model(model, manifest);
    save_network_spec(stack.network, dir / (config.name + "_net.json"));
    std::cout << "wrote " << manifest.string() << " (" << model.layers.size() << " layers)\n";
}

}  // namespace mixprec
