// SPDX-License-Identifier: Apache-2.0
//
// End-to-end acceptance suite. Each check prints one PASS/FAIL line; the
// process exits non-zero if any check fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mixprec/cli.hpp"
#include "mixprec/inference.hpp"
#include "mixprec/model_io.hpp"
#include "mixprec/quant.hpp"
#include "mixprec/search.hpp"
#include "mixprec/sensitivity.hpp"
#include "test_support.hpp"

using namespace mixprec;
using steady_clock = std::chrono::steady_clock;

namespace {

struct Failure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require(bool condition, const std::string& message) {
    if (!condition) {
        throw Failure(message);
    }
}

double seconds_since(steady_clock::time_point start) {
    return std::chrono::duration<double>(steady_clock::now() - start).count();
}

// ---------------------------------------------------------------------
// 1. Known-codes regression: the 2-bit example must reproduce exactly.

void check_reference_example() {
    const Tensor weight = Tensor::from_values({-1.0f, 0.01f, 1.0f, 2.0f});
    const Tensor input = Tensor::from_values({0.005f, 0.0002f, 0.01f, 0.003f});
    const float bias = 0.00001f;
    const float expected[4] = {-4.9900e-03f, 1.0000e-05f, 1.0010e-02f, 6.0100e-03f};

    double best_seconds = 1e9;
    for (int rep = 0; rep < 3; ++rep) {
        const auto start = steady_clock::now();
        const QuantizedTensor q = quantize(weight, BitWidth(2));
        const Tensor dq = dequantize(q);
        float simulated[4];
        for (int i = 0; i < 4; ++i) {
            simulated[i] = input.values[i] * dq.values[i] + bias;
        }
        best_seconds = std::min(best_seconds, seconds_since(start));

        require(q.codes == std::vector<std::int32_t>{-2, -1, 0, 1}, "codes differ");
        require(dq.values == std::vector<float>{-1.0f, 0.0f, 1.0f, 2.0f},
                "dequantized values differ");
        for (int i = 0; i < 4; ++i) {
            require(testsupport::ulp_distance(simulated[i], expected[i]) <= 1,
                    "simulated result differs at element " + std::to_string(i));
        }
    }
    require(best_seconds < 1e-3, "roundtrip took " + std::to_string(best_seconds) + "s");
}

// ---------------------------------------------------------------------
// 2. Roundtrip error bounds on 10,000 random tensors, all bit-widths.

void check_roundtrip_bounds() {
    std::mt19937_64 rng(20240);
    std::int64_t checked = 0;
    for (int iter = 0; iter < 10000; ++iter) {
        const Tensor t = testsupport::random_tensor(rng, 4096, -10.0f, 10.0f);
        float max_abs = 0.0f;
        for (float v : t.values) max_abs = std::max(max_abs, std::abs(v));
        const float slack = 4.0f * std::numeric_limits<float>::epsilon() * max_abs;

        for (int b = BitWidth::min_bits; b <= BitWidth::max_bits; ++b) {
            const BitWidth bits(b);
            const QuantizedTensor q = quantize(t, bits);
            const float s = q.params.scale;
            const float clamp_bound = 1.5f * s + slack;
            const float round_bound = 0.5f * s + slack;
            for (std::size_t i = 0; i < t.values.size(); ++i) {
                const float v = t.values[i];
                const float rt =
                    static_cast<float>(q.codes[i] - q.params.zero_point) * s;
                const float err = std::abs(v - rt);
                if (err > clamp_bound) {
                    throw Failure("roundtrip error " + std::to_string(err) +
                                  " above 1.5*scale at " + std::to_string(v));
                }
                if (err > round_bound) {
                    const double pre = static_cast<double>(std::round(v / s)) +
                                       static_cast<double>(q.params.zero_point);
                    if (pre >= bits.qmin() && pre <= bits.qmax()) {
                        throw Failure("non-clamped error " + std::to_string(err) +
                                      " above scale/2 at " + std::to_string(v));
                    }
                }
                ++checked;
            }
        }
    }
    require(checked > 0, "no elements checked");
}

// ---------------------------------------------------------------------
// 3/4. Selection vs. exhaustive oracle, feasibility, minimality.

std::vector<std::pair<ErrorTable, float>>& oracle_corpus() {
    static std::vector<std::pair<ErrorTable, float>> corpus = [] {
        std::mt19937_64 rng(5150);
        std::uniform_real_distribution<float> qem_dist(0.5f, 10.0f);
        std::vector<std::pair<ErrorTable, float>> tables;
        tables.reserve(1000);
        for (int i = 0; i < 1000; ++i) {
            tables.emplace_back(testsupport::random_error_table(rng, 200), qem_dist(rng));
        }
        return tables;
    }();
    return corpus;
}

void check_oracle_equivalence() {
    for (const auto& [table, qem] : oracle_corpus()) {
        const BitAllocation fast = select_bit_widths(table, qem);
        const BitAllocation slow = oracle_select(table, qem);
        require(fast.bits == slow.bits, "bit choice diverged from the oracle");
        require(fast.fallback == slow.fallback, "fallback flags diverged from the oracle");
    }
}

void check_feasibility_and_minimality() {
    for (const auto& [table, qem] : oracle_corpus()) {
        const BitAllocation alloc = select_bit_widths(table, qem);
        for (std::size_t l = 0; l < table.layer_names.size(); ++l) {
            const double threshold =
                static_cast<double>(table.baseline_qe[l]) * static_cast<double>(qem);
            if (alloc.fallback[l]) {
                require(qem < 1.0f, "fallback triggered at qem >= 1");
                for (std::size_t i = 0; i < table.bit_widths.size(); ++i) {
                    require(static_cast<double>(table.qe[l][i]) > threshold,
                            "fallback despite a feasible candidate");
                }
                continue;
            }
            const std::size_t chosen = table.bit_index(alloc.bits[l]);
            require(static_cast<double>(table.qe[l][chosen]) <= threshold,
                    "chosen bit-width violates the threshold");
            for (std::size_t i = 0; i < table.bit_widths.size(); ++i) {
                if (table.bit_widths[i] < alloc.bits[l]) {
                    require(static_cast<double>(table.qe[l][i]) > threshold,
                            "a smaller bit-width was also feasible");
                }
            }
        }
    }
}

// ---------------------------------------------------------------------
// 5. Bit choices never grow as the multiplier loosens.

void check_qem_monotonicity() {
    std::mt19937_64 rng(777);
    std::uniform_real_distribution<float> qem_dist(0.5f, 10.0f);
    std::uniform_int_distribution<int> count_dist(3, 10);
    for (int sweep = 0; sweep < 200; ++sweep) {
        const ErrorTable table = testsupport::random_error_table(rng, 100);
        std::vector<float> qems;
        const int count = count_dist(rng);
        for (int i = 0; i < count; ++i) qems.push_back(qem_dist(rng));
        std::sort(qems.begin(), qems.end());

        const std::vector<BitAllocation> allocations = sweep_qems(table, qems);
        for (std::size_t i = 1; i < allocations.size(); ++i) {
            for (std::size_t l = 0; l < table.layer_names.size(); ++l) {
                require(allocations[i].bits[l] <= allocations[i - 1].bits[l],
                        "bit-width grew as the qem increased");
            }
        }
    }
}

// ---------------------------------------------------------------------
// 6. Search cost: exactly L*B quantize calls, near-linear wall-clock.

ModelWeights fixed_size_model(int layer_count, std::uint64_t seed) {
    SyntheticModelSpec spec;
    spec.model_name = "scaling" + std::to_string(layer_count);
    spec.seed = seed;
    for (int i = 0; i < layer_count; ++i) {
        spec.layers.push_back(
            {"layer" + std::to_string(i), LayerType::Conv3x3, {128, 128}});
    }
    return generate_synthetic_model(spec);
}

void check_complexity_scaling() {
    const auto harness_start = steady_clock::now();
    const std::vector<BitWidth> bits = default_bit_widths();
    const int sizes[] = {50, 100, 200, 400};

    std::vector<double> best_times;
    for (int layer_count : sizes) {
        const ModelWeights model = fixed_size_model(layer_count, 9000 + layer_count);

        const std::uint64_t calls_before = quantize_call_count();
        double best = 1e9;
        for (int rep = 0; rep < 3; ++rep) {
            const auto start = steady_clock::now();
            const ErrorTable table = build_error_table(model, bits);
            (void)select_bit_widths(table, 2.0f);
            best = std::min(best, seconds_since(start));
        }
        const std::uint64_t calls = quantize_call_count() - calls_before;
        require(calls == static_cast<std::uint64_t>(layer_count) * bits.size() * 3,
                "expected " + std::to_string(layer_count * bits.size()) +
                    " quantize calls per search, measured " + std::to_string(calls / 3));
        best_times.push_back(best);
    }

    for (std::size_t i = 1; i < best_times.size(); ++i) {
        const double ratio = best_times[i] / best_times[i - 1];
        require(ratio >= 1.5 && ratio <= 3.0,
                "doubling layers scaled wall-clock by " + std::to_string(ratio));
    }
    require(seconds_since(harness_start) < 60.0, "scaling harness exceeded 60s");
}

// ---------------------------------------------------------------------
// 7. Lower quality tracks higher quantization error on seeded nets.

void check_qe_quality_relationship() {
    struct Config {
        int conv_layers;
        std::uint64_t seed;
    };
    // conv_layers + classifier = 3..6 total layers.
    const Config configs[] = {{2, 101}, {3, 202}, {4, 303}, {5, 404}, {2, 505}, {4, 606}};

    const std::vector<BitWidth> bits = default_bit_widths();
    for (const Config& config : configs) {
        ConvStackConfig stack_config;
        stack_config.name = "net" + std::to_string(config.seed);
        stack_config.conv_layers = config.conv_layers;
        stack_config.seed = config.seed;
        const ConvStack stack = make_conv_stack(stack_config);
        const ModelWeights model = generate_synthetic_model(stack.model_spec);
        const Tensor batch = random_batch(512, stack.network.input, config.seed);

        const CorrelationResult result =
            run_qe_accuracy_experiment(stack.network, model, batch, bits, 5);
        require(result.rank_correlation < 0.0f,
                "seed " + std::to_string(config.seed) + ": rank correlation " +
                    std::to_string(result.rank_correlation) + " is not negative");

        float top1_8 = -1.0f, top1_2 = -1.0f;
        for (const CorrelationPoint& p : result.points) {
            if (p.bits == 8) top1_8 = p.top1_agreement;
            if (p.bits == 2) top1_2 = p.top1_agreement;
        }
        require(top1_8 >= top1_2,
                "seed " + std::to_string(config.seed) + ": top-1 at 8 bits (" +
                    std::to_string(top1_8) + ") below 2 bits (" + std::to_string(top1_2) + ")");
    }
}

// ---------------------------------------------------------------------
// 8. Ablation: deterministic output, one summary row per bit-width,
//    untouched layers identical to uniform int8.

std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "missing output " + path.string());
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

class SuppressStdout {
public:
    SuppressStdout() : saved_(std::cout.rdbuf(sink_.rdbuf())) {}
    ~SuppressStdout() { std::cout.rdbuf(saved_); }

private:
    std::ostringstream sink_;
    std::streambuf* saved_;
};

void check_ablation() {
    testsupport::TempDir dir("acceptance_ablate");

    GenConfig gen;
    gen.name = "abl";
    gen.layers = 12;
    gen.channels = 6;
    gen.image_size = 6;
    gen.seed = 31;
    gen.out_dir = dir.path();

    RunConfig config;
    config.model_manifest = dir.path() / "abl.json";
    config.network_spec = dir.path() / "abl_net.json";
    config.batch_size = 64;
    config.seed = 31;

    {
        SuppressStdout quiet;
        run_gen(gen);
        config.out_dir = dir.path() / "run1";
        run_ablate(config);
        config.out_dir = dir.path() / "run2";
        run_ablate(config);
    }

    const std::string most = slurp(dir.path() / "run1" / "ablate_most_sensitive_abl.csv");
    std::istringstream lines(most);
    std::string line;
    int rows = 0;
    while (std::getline(lines, line)) ++rows;
    require(rows == 1 + 7, "expected one most-sensitive row per bit-width");

    for (const char* name : {"ablate_type_sweep_abl.csv", "ablate_rqe_abl.csv",
                             "ablate_most_sensitive_abl.csv"}) {
        require(slurp(dir.path() / "run1" / name) == slurp(dir.path() / "run2" / name),
                std::string(name) + " differs between identical runs");
    }

    // Sweep isolation across every (type, bit) configuration.
    const ModelWeights model = load_model(dir.path() / "abl.json");
    const LayerType types[] = {LayerType::FirstConv, LayerType::Conv3x3, LayerType::Conv1x1,
                               LayerType::FullyConnected, LayerType::Other};
    for (LayerType swept : types) {
        bool present = false;
        for (const LayerRecord& layer : model.layers) {
            present = present || layer.layer_type == swept;
        }
        if (!present) continue;
        for (int b = BitWidth::min_bits; b <= BitWidth::max_bits; ++b) {
            const auto mixed = quantize_type_at(model, swept, BitWidth(b));
            for (std::size_t i = 0; i < model.layers.size(); ++i) {
                if (model.layers[i].layer_type == swept) continue;
                const QuantizedTensor uniform =
                    quantize(model.layers[i].weights, BitWidth(8));
                require(mixed[i].codes == uniform.codes &&
                            mixed[i].params.scale == uniform.params.scale &&
                            mixed[i].params.zero_point == uniform.params.zero_point,
                        "sweep altered a layer outside the swept type");
            }
        }
    }
}

// ---------------------------------------------------------------------
// 9. Quantized containers survive a save/load cycle bit-exactly.

void check_persistence_roundtrip() {
    std::mt19937_64 rng(4242);
    std::uniform_int_distribution<std::size_t> layer_dist(1, 8);
    std::uniform_real_distribution<float> qem_dist(0.5f, 6.0f);
    testsupport::TempDir dir("acceptance_persist");

    for (int iter = 0; iter < 100; ++iter) {
        const ModelWeights model = testsupport::random_model(rng, layer_dist(rng), 128);
        const ErrorTable table = build_error_table(model, default_bit_widths());
        const BitAllocation alloc = select_bit_widths(table, qem_dist(rng));

        const std::filesystem::path manifest =
            dir.path() / ("q" + std::to_string(iter) + ".json");
        save_quantized(model, alloc, manifest);
        const QuantizedModel back = load_quantized(manifest);

        require(back.model_name == model.model_name, "model name changed");
        require(back.qem == alloc.qem, "qem changed");
        require(back.layers.size() == model.layers.size(), "layer count changed");
        for (std::size_t i = 0; i < model.layers.size(); ++i) {
            const QuantizedTensor expected =
                quantize(model.layers[i].weights, alloc.bits_for(model.layers[i].name));
            const QuantizedLayerRecord& got = back.layers[i];
            require(got.name == model.layers[i].name, "layer name changed");
            require(got.position == model.layers[i].position, "position changed");
            require(got.layer_type == model.layers[i].layer_type, "layer type changed");
            require(got.tensor.codes == expected.codes, "codes changed");
            require(got.tensor.shape == expected.shape, "shape changed");
            require(got.tensor.params.scale == expected.params.scale, "scale changed");
            require(got.tensor.params.zero_point == expected.params.zero_point,
                    "zero point changed");
            require(got.tensor.params.bit_width == expected.params.bit_width,
                    "bit-width changed");
        }
    }
}

}  // namespace

int main() {
    struct Criterion {
        const char* name;
        std::function<void()> fn;
    };
    const std::vector<Criterion> criteria = {
        {"1. 2-bit reference example reproduces bit-exactly in under 1 ms",
         check_reference_example},
        {"2. roundtrip error bounds hold on 10,000 random tensors", check_roundtrip_bounds},
        {"3. selection equals the exhaustive oracle on 1,000 tables", check_oracle_equivalence},
        {"4. every choice is feasible and minimal", check_feasibility_and_minimality},
        {"5. bit-widths are non-increasing across sorted qem sweeps", check_qem_monotonicity},
        {"6. search cost is L*B quantize calls and scales linearly", check_complexity_scaling},
        {"7. agreement falls as quantization error rises on seeded nets",
         check_qe_quality_relationship},
        {"8. ablation outputs are deterministic and sweeps stay isolated", check_ablation},
        {"9. quantized containers reload bit-exactly for 100 models",
         check_persistence_roundtrip},
    };

    int failures = 0;
    for (const Criterion& criterion : criteria) {
        const auto start = steady_clock::now();
        try {
            criterion.fn();
            std::printf("[PASS] %s (%.2fs)\n", criterion.name, seconds_since(start));
        } catch (const std::exception& e) {
            ++failures;
            std::printf("[FAIL] %s (%.2fs): %s\n", criterion.name, seconds_since(start),
                        e.what());
        }
        std::fflush(stdout);
    }
    if (failures > 0) {
        std::printf("%d criterion(s) failed\n", failures);
        return 1;
    }
    std::printf("all %zu criteria passed\n", criteria.size());
    return 0;
}
