// Copyright (C) 2026 The gramkit Authors
// SPDX-License-Identifier: Apache-2.0

// gramkit: score grounded-reasoning predictions, generate synthetic fixtures,
// and run grounded decoding demos on the toy model.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gramkit/harness.hpp"

using namespace gramkit;

namespace {

std::vector<double> parse_list(const std::string& text, const char* flag) {
    std::vector<double> out;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t end = text.find(',', pos);
        if (end == std::string::npos) {
            end = text.size();
        }
        const std::string item = text.substr(pos, end - pos);
        std::size_t used = 0;
        double value = 0.0;
        try {
            value = std::stod(item, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (item.empty() || used != item.size()) {
            throw CLI::ValidationError(flag, "expected a comma-separated list of numbers, got '" + text + "'");
        }
        out.push_back(value);
        pos = end + 1;
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"gramkit - spatio-temporal grounded reasoning evaluation and grounded decoding"};
    app.require_subcommand(1);

    std::uint64_t seed = 0;
    std::string out_dir = ".";

    // eval
    auto* eval = app.add_subcommand("eval", "Score a prediction file against a benchmark");
    harness::RunManifest manifest;
    std::string benchmark, predictions, tau = "0.25,0.5", delta = "2,4,6", category, format = "markdown";
    unsigned workers = 1;
    eval->add_option("--benchmark", benchmark, "Benchmark document (JSON)")->required();
    eval->add_option("--predictions", predictions, "Prediction records (JSON lines)")->required();
    eval->add_option("--tau", tau, "IoU thresholds")->capture_default_str();
    eval->add_option("--delta", delta, "Temporal windows in seconds")->capture_default_str();
    eval->add_option("--category", category, "Only score this scenario category");
    eval->add_option("--format", format, "csv, markdown or structured")->capture_default_str();
    eval->add_option("--out", out_dir, "Report directory")->capture_default_str();
    eval->add_option("--seed", seed, "Run seed (GRAMKIT_SEED overrides)");
    eval->add_option("--workers", workers, "Scoring threads")->capture_default_str();
    eval->add_flag("--strict", manifest.strict, "Fail (exit 3) on predictions for unknown instances");
    eval->add_flag("--full-thresholds", manifest.full_thresholds, "Show every IoU threshold for every category");

    // gen
    auto* gen = app.add_subcommand("gen", "Write a synthetic benchmark and predictions with known scores");
    std::string spec_path;
    int count = 5;
    gen->add_option("--spec", spec_path, "Synthetic spec (JSON); defaults to 5 per category");
    gen->add_option("--count", count, "Instances per category when no spec is given")->capture_default_str();
    gen->add_option("--out", out_dir, "Output directory")->capture_default_str();
    gen->add_option("--seed", seed, "Generator seed (GRAMKIT_SEED overrides)");

    // demo
    auto* demo = app.add_subcommand("demo", "Grounded decoding on the toy model with synthetic frames");
    harness::DemoOptions demo_opts;
    std::string model_config;
    bool ett = true;
    bool no_gram = false;
    demo->add_option("--model-config", model_config, "Model config (JSON)");
    demo->add_option("--frames", demo_opts.n_frames, "Number of synthetic frames")->capture_default_str();
    demo->add_option("--fps", demo_opts.fps, "Frame rate")->capture_default_str();
    demo->add_option("--question", demo_opts.question, "Question text");
    demo->add_option("--n-select", demo_opts.grounding.n_select, "Video tokens selected per step")->capture_default_str();
    demo->add_option("--max-new", demo_opts.max_new, "Maximum generated tokens")->capture_default_str();
    demo->add_flag("--ett,!--no-ett", ett, "Interleave explicit timestamp tokens");
    demo->add_flag("--no-gram", no_gram, "Plain decoding only, no grounding trace");
    demo->add_flag("--cumulative", demo_opts.grounding.cumulative, "Keep every step's grounding block");
    demo->add_option("--out", out_dir, "Output directory")->capture_default_str();
    demo->add_option("--seed", seed, "Model and frame seed (GRAMKIT_SEED overrides)");

    CLI11_PARSE(app, argc, argv);

    try {
        seed = harness::resolve_seed(seed);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return harness::kExitBadInput;
    }

    if (eval->parsed()) {
        manifest.benchmark_path = benchmark;
        manifest.predictions_path = predictions;
        manifest.out_dir = out_dir;
        manifest.seed = seed;
        manifest.workers = workers;
        try {
            manifest.thresholds.iou_thresholds = parse_list(tau, "--tau");
            manifest.thresholds.temporal_windows = parse_list(delta, "--delta");
        } catch (const CLI::Error& e) {
            return app.exit(e);
        }
        auto fmt = harness::parse_format(format);
        if (!fmt) {
            std::cerr << "error: unknown --format '" << format << "'\n";
            return harness::kExitBadInput;
        }
        manifest.format = *fmt;
        if (!category.empty()) {
            manifest.category = parse_category(category);
            if (!manifest.category) {
                std::cerr << "error: unknown --category '" << category << "'\n";
                return harness::kExitBadInput;
            }
        }
        return harness::cmd_eval(manifest, std::cout, std::cerr).exit_code;
    }

    if (gen->parsed()) {
        try {
            SyntheticSpec spec = spec_path.empty() ? SyntheticSpec::uniform(count, seed)
                                                   : SyntheticSpec::from_json(read_file(spec_path));
            if (spec_path.empty() || gen->count("--seed") > 0 || std::getenv("GRAMKIT_SEED") != nullptr) {
                spec.seed = seed;
            }
            const std::filesystem::path dir(out_dir);
            auto fx = harness::cmd_gen(spec, dir / "benchmark.json", dir / "predictions.jsonl");
            std::cout << "wrote " << fx.instances.size() << " instances to " << (dir / "benchmark.json").string()
                      << " and " << fx.predictions.size() << " predictions to "
                      << (dir / "predictions.jsonl").string() << '\n';
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << '\n';
            return harness::kExitBadInput;
        }
        return harness::kExitOk;
    }

    if (demo->parsed()) {
        try {
            if (!model_config.empty()) {
                demo_opts.model = vlm::ModelConfig::load(model_config);
            }
            demo_opts.ett = ett;
            demo_opts.gram = !no_gram;
            const bool seed_given = demo->count("--seed") > 0 || std::getenv("GRAMKIT_SEED") != nullptr;
            demo_opts.seed = (seed_given || model_config.empty()) ? seed : demo_opts.model.seed;
            demo_opts.out_dir = out_dir;
            harness::cmd_demo(demo_opts, std::cout);
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << '\n';
            return harness::kExitBadInput;
        }
        return harness::kExitOk;
    }
    return harness::kExitOk;
}
