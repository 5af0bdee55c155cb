// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "mixprec/model_io.hpp"
#include "mixprec/search.hpp"
#include "test_support.hpp"

using namespace mixprec;

namespace {

// Hand-built single-layer table: qe per bit-width 8..2.
ErrorTable example_table() {
    ErrorTable table;
    table.layer_names = {"l0"};
    table.bit_widths = default_bit_widths();
    table.qe = {{0.01f, 0.015f, 0.02f, 0.05f, 0.2f, 0.9f, 3.0f}};
    table.baseline_qe = {0.01f};
    return table;
}

ModelWeights one_layer_model() {
    ModelWeights model;
    model.model_name = "one";
    model.layers.push_back(
        {"w", 0, LayerType::Other, Tensor::from_values({-1.0f, 0.01f, 1.0f, 2.0f})});
    return model;
}

}  // namespace

TEST_CASE("error table from the reference roundtrip") {
    const std::vector<BitWidth> bits = {BitWidth(8), BitWidth(2)};
    const ErrorTable table = build_error_table(one_layer_model(), bits);

    REQUIRE(table.layer_names == std::vector<std::string>{"w"});
    REQUIRE(table.qe.size() == 1);
    CHECK(table.qe[0][1] == doctest::Approx(0.000025).epsilon(1e-6));
    CHECK(table.baseline_qe[0] == table.qe[0][table.bit_index(BitWidth(8))]);
}

TEST_CASE("error table performs exactly L x B quantize calls") {
    std::mt19937_64 rng(5);
    const ModelWeights model = testsupport::random_model(rng, 6);
    const std::vector<BitWidth> bits = default_bit_widths();

    const std::uint64_t before = quantize_call_count();
    build_error_table(model, bits);
    CHECK(quantize_call_count() - before == 6 * 7);
}

TEST_CASE("baseline bit-width is mandatory") {
    const std::vector<BitWidth> no_eight = {BitWidth(4), BitWidth(2)};
    CHECK_THROWS_WITH_AS(build_error_table(one_layer_model(), no_eight),
                         "baseline bit-width 8 required", std::invalid_argument);
    CHECK_THROWS_AS(build_error_table(one_layer_model(), std::vector<BitWidth>{}),
                    std::invalid_argument);
}

TEST_CASE("selection picks the smallest feasible bit-width") {
    // Threshold 0.03: 6-bit (0.02) passes, 5-bit (0.05) does not.
    const BitAllocation alloc = select_bit_widths(example_table(), 3.0f);
    CHECK(alloc.bits_for("l0") == BitWidth(6));
    CHECK(alloc.bit_set() == std::vector<int>{6});
    CHECK(alloc.fallback_layers().empty());
}

TEST_CASE("qem of 1 still admits the baseline") {
    const BitAllocation alloc = select_bit_widths(example_table(), 1.0f);
    CHECK(alloc.bits_for("l0") == BitWidth(8));
    CHECK(alloc.fallback_layers().empty());
}

TEST_CASE("huge qem picks the narrowest width") {
    const BitAllocation alloc = select_bit_widths(example_table(), 1e9f);
    CHECK(alloc.bits_for("l0") == BitWidth(2));
}

TEST_CASE("qem below 1 can fall back to 8 bits") {
    const BitAllocation alloc = select_bit_widths(example_table(), 0.5f);
    CHECK(alloc.bits_for("l0") == BitWidth(8));
    CHECK(alloc.fallback_layers() == std::vector<std::string>{"l0"});
}

TEST_CASE("zero baseline keeps only exact-zero candidates feasible") {
    ErrorTable table = example_table();
    table.qe = {{0.0f, 0.0f, 0.1f, 0.2f, 0.3f, 0.4f, 0.5f}};
    table.baseline_qe = {0.0f};
    const BitAllocation alloc = select_bit_widths(table, 100.0f);
    CHECK(alloc.bits_for("l0") == BitWidth(7));
    CHECK(alloc.fallback_layers().empty());
}

TEST_CASE("invalid qem is rejected") {
    CHECK_THROWS_AS(select_bit_widths(example_table(), 0.0f), std::invalid_argument);
    CHECK_THROWS_AS(select_bit_widths(example_table(), -2.0f), std::invalid_argument);
    CHECK_THROWS_AS(oracle_select(example_table(), 0.0f), std::invalid_argument);
}

TEST_CASE("sweep reuses the table and is deterministic") {
    std::mt19937_64 rng(11);
    const ModelWeights model = testsupport::random_model(rng, 4);
    const ErrorTable table = build_error_table(model, default_bit_widths());

    const std::uint64_t before = quantize_call_count();
    const std::vector<float> qems = {2.0f, 3.0f, 3.25f};
    const std::vector<BitAllocation> allocations = sweep_qems(table, qems);
    CHECK(quantize_call_count() == before);  // selection never re-quantizes
    REQUIRE(allocations.size() == 3);

    const std::vector<float> dup = {2.0f, 2.0f};
    const std::vector<BitAllocation> twice = sweep_qems(table, dup);
    CHECK(twice[0].bits == twice[1].bits);

    CHECK_THROWS_AS(sweep_qems(table, std::vector<float>{}), std::invalid_argument);
}

TEST_CASE("bits are non-increasing across sorted qems") {
    std::mt19937_64 rng(17);
    for (int iter = 0; iter < 40; ++iter) {
        const ErrorTable table = testsupport::random_error_table(rng, 30);
        std::vector<float> qems = {1.1f, 1.3f, 1.5f, 2.0f, 4.0f};
        const std::vector<BitAllocation> allocations = sweep_qems(table, qems);
        for (std::size_t i = 1; i < allocations.size(); ++i) {
            for (std::size_t l = 0; l < table.layer_names.size(); ++l) {
                CHECK(allocations[i].bits[l] <= allocations[i - 1].bits[l]);
            }
        }
    }
}

TEST_CASE("selection matches the exhaustive oracle") {
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<float> qem_dist(0.5f, 10.0f);
    for (int iter = 0; iter < 200; ++iter) {
        const ErrorTable table = testsupport::random_error_table(rng, 50);
        const float qem = qem_dist(rng);
        const BitAllocation fast = select_bit_widths(table, qem);
        const BitAllocation slow = oracle_select(table, qem);
        REQUIRE(fast.bits == slow.bits);
        REQUIRE(fast.fallback == slow.fallback);
    }
}

TEST_CASE("selected bits are feasible and minimal") {
    std::mt19937_64 rng(29);
    for (int iter = 0; iter < 100; ++iter) {
        const ErrorTable table = testsupport::random_error_table(rng, 40);
        const BitAllocation alloc = select_bit_widths(table, 2.0f);
        for (std::size_t l = 0; l < table.layer_names.size(); ++l) {
            const double threshold = static_cast<double>(table.baseline_qe[l]) * 2.0;
            if (alloc.fallback[l]) {
                continue;
            }
            const std::size_t chosen = table.bit_index(alloc.bits[l]);
            CHECK(static_cast<double>(table.qe[l][chosen]) <= threshold);
            for (std::size_t i = 0; i < table.bit_widths.size(); ++i) {
                if (table.bit_widths[i] < alloc.bits[l]) {
                    CHECK(static_cast<double>(table.qe[l][i]) > threshold);
                }
            }
        }
    }
}

TEST_CASE("qem at or above 1 never falls back") {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<float> qem_dist(1.0f, 10.0f);
    for (int iter = 0; iter < 100; ++iter) {
        const ErrorTable table = testsupport::random_error_table(rng, 20);
        const BitAllocation alloc = select_bit_widths(table, qem_dist(rng));
        CHECK(alloc.fallback_layers().empty());
    }
}

TEST_CASE("json serialization") {
    const ErrorTable table = example_table();
    const nlohmann::json jt = error_table_to_json(table);
    CHECK(jt.at("layers") == nlohmann::json::array({"l0"}));
    CHECK(jt.at("bits") == nlohmann::json::array({8, 7, 6, 5, 4, 3, 2}));
    CHECK(jt.at("qe").size() == 1);
    CHECK(jt.at("qe")[0].size() == 7);

    const BitAllocation alloc = select_bit_widths(table, 3.0f);
    const nlohmann::json ja = allocation_to_json(alloc);
    CHECK(ja.at("qem") == 3.0f);
    CHECK(ja.at("bits").at("l0") == 6);
    CHECK(ja.at("bit_set") == nlohmann::json::array({6}));
    CHECK(ja.at("fallback_layers").empty());

    const BitAllocation back = allocation_from_json(ja);
    CHECK(back.qem == alloc.qem);
    CHECK(back.bits_for("l0") == BitWidth(6));
}
