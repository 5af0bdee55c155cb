// SPDX-License-Identifier: Apache-2.0

#include <iostream>
#include <stdexcept>

#include <CLI11.hpp>

#include "mixprec/cli.hpp"

namespace {

void add_common_options(CLI::App* cmd, mixprec::RunConfig& config) {
    cmd->add_option("--model", config.model_manifest, "weight manifest (JSON)")->required();
    cmd->add_option("--bits", config.bits, "candidate bit-widths (must include 8)")
        ->delimiter(',');
    cmd->add_option("--out", config.out_dir, "output directory");
    cmd->add_option("--seed", config.seed, "seed for generated batches");
    cmd->add_option("--format", config.format, "csv or json")
        ->check(CLI::IsMember({"csv", "json"}));
}

void add_eval_options(CLI::App* cmd, mixprec::RunConfig& config, bool net_required) {
    auto* net = cmd->add_option("--net", config.network_spec, "network spec (JSON)");
    if (net_required) {
        net->required();
    }
    cmd->add_option("--topk", config.topk, "k for top-k agreement");
    cmd->add_option("--batch-size", config.batch_size, "rows in the generated batch");
    cmd->add_option("--batch-blob", config.batch_blob, "raw f32 batch blob");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"per-layer weight quantization with bit-width search"};
    app.require_subcommand(1);

    mixprec::RunConfig config;
    mixprec::GenConfig gen;

    CLI::App* search = app.add_subcommand("search", "select per-layer bit-widths for each qem");
    add_common_options(search, config);
    search->add_option("--qem", config.qems, "quantization error multipliers")
        ->delimiter(',')
        ->required();

    CLI::App* sweep = app.add_subcommand("sweep", "search across a qem list, optionally with "
                                                  "agreement metrics");
    add_common_options(sweep, config);
    sweep->add_option("--qem", config.qems, "quantization error multipliers")
        ->delimiter(',')
        ->required();
    sweep->add_flag("--eval", config.eval, "attach agreement metrics (needs --net)");
    add_eval_options(sweep, config, false);

    CLI::App* quantize = app.add_subcommand("quantize", "persist a quantized model");
    add_common_options(quantize, config);
    quantize->add_option("--qem", config.qems, "quantization error multiplier (default 1)")
        ->delimiter(',');

    CLI::App* ablate = app.add_subcommand("ablate", "layer-type and layer-position sensitivity");
    add_common_options(ablate, config);
    add_eval_options(ablate, config, true);

    CLI::App* correlate =
        app.add_subcommand("correlate", "quantization error vs agreement across bit-widths");
    add_common_options(correlate, config);
    add_eval_options(correlate, config, true);

    CLI::App* report = app.add_subcommand("report", "search runtime for 1 and 10 qems");
    add_common_options(report, config);

    CLI::App* generate = app.add_subcommand("gen", "write a synthetic conv-stack model");
    generate->add_option("--name", gen.name, "model name");
    generate->add_option("--layers", gen.layers, "total layer count incl. classifier");
    generate->add_option("--channels", gen.channels, "conv channel width");
    generate->add_option("--input-channels", gen.input_channels, "input channels");
    generate->add_option("--image-size", gen.image_size, "input height and width");
    generate->add_option("--classes", gen.classes, "classifier width");
    generate->add_option("--seed", gen.seed, "weight seed");
    generate->add_option("--out", gen.out_dir, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (search->parsed()) mixprec::run_search(config);
        if (sweep->parsed()) mixprec::run_sweep(config);
        if (quantize->parsed()) mixprec::run_quantize(config);
        if (ablate->parsed()) mixprec::run_ablate(config);
        if (correlate->parsed()) mixprec::run_correlate(config);
        if (report->parsed()) mixprec::run_report(config);
        if (generate->parsed()) mixprec::run_gen(gen);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
