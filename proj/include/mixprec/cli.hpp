// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace mixprec {

/// Options shared by the CLI commands. Invalid combinations raise
/// std::invalid_argument (usage errors); data problems raise
/// std::runtime_error.
struct RunConfig {
    std::filesystem::path model_manifest;
    std::filesystem::path network_spec;  // required by ablate/correlate, optional for sweep
    std::filesystem::path batch_blob;    // raw f32 rows; empty -> seeded random batch
    std::vector<int> bits = {8, 7, 6, 5, 4, 3, 2};
    std::vector<float> qems;
    std::filesystem::path out_dir = ".";
    std::uint64_t seed = 0;
    std::string format = "csv";  // csv | json
    bool eval = false;
    int topk = 5;
    int batch_size = 256;
};

void run_search(const RunConfig& config);
void run_sweep(const RunConfig& config);
void run_quantize(const RunConfig& config);
void run_ablate(const RunConfig& config);
void run_correlate(const RunConfig& config);
void run_report(const RunConfig& config);

/// Synthetic conv-stack generator so the toolkit is usable without an
/// exported checkpoint. Writes a weight manifest plus a matching network
/// spec.
struct GenConfig {
    std::string name = "synthetic";
    int layers = 8;  // total, including the final classifier
    int channels = 8;
    int input_channels = 3;
    int image_size = 8;
    int classes = 10;
    std::uint64_t seed = 0;
    std::filesystem::path out_dir = ".";
};

void run_gen(const GenConfig& config);

}  // namespace mixprec
