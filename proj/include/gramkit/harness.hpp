// Copyright (C) 2026 The gramkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gramkit/datamodel.hpp"
#include "gramkit/grounding.hpp"
#include "gramkit/metrics.hpp"
#include "gramkit/synthetic.hpp"
#include "gramkit/toyvlm.hpp"

namespace gramkit::harness {

inline constexpr int kExitOk = 0;
inline constexpr int kExitBadInput = 2;
inline constexpr int kExitUnmatched = 3;

enum class ReportFormat { Csv, Markdown, Structured };

std::optional<ReportFormat> parse_format(std::string_view name);
std::string_view file_extension(ReportFormat format);

struct RunManifest {
    std::filesystem::path benchmark_path;
    std::filesystem::path predictions_path;
    ThresholdConfig thresholds;
    std::optional<ScenarioCategory> category;
    ReportFormat format = ReportFormat::Markdown;
    std::filesystem::path out_dir = ".";
    std::uint64_t seed = 0;
    bool strict = false;
    /// Show every configured tau for the hand-object scenario too.
    bool full_thresholds = false;
    unsigned workers = 1;

    /// Throws std::invalid_argument.
    void validate() const;
};

/// One report table: a header row and one value row, values preformatted.
struct ReportTable {
    ScenarioCategory category = ScenarioCategory::PersonGR;
    std::vector<std::string> columns;
    std::vector<std::string> values;
};

/// "%.1f", the precision of every printed rate and of MAD.
std::string format_decimal(double value);

ReportTable make_table(const CategoryReport& report, const ThresholdConfig& cfg, bool full_thresholds);
std::string render_table(const ReportTable& table, ReportFormat format);

/// Indexes predictions by instance id; throws SchemaError on a repeated id.
std::map<std::string, Prediction> index_predictions(std::span<const Prediction> predictions);

struct EvalResult {
    int exit_code = kExitOk;
    std::vector<CategoryReport> reports;
    std::vector<std::string> unmatched_ids;
    std::vector<std::filesystem::path> written;
    std::string error;
};

/// Loads both files, scores, writes report_<category>.<ext> into out_dir and
/// prints the tables to `out`. Diagnostics go to `err`.
EvalResult cmd_eval(const RunManifest& manifest, std::ostream& out, std::ostream& err);

/// Writes benchmark.json and predictions.jsonl for `spec`.
SyntheticFixture cmd_gen(const SyntheticSpec& spec, const std::filesystem::path& benchmark_path,
                         const std::filesystem::path& predictions_path);

struct DemoOptions {
    vlm::ModelConfig model;
    int n_frames = 8;
    double fps = 2.0;
    int frame_width = 64;
    int frame_height = 64;
    std::string question = "What is the person doing, and when does it start?";
    grounding::GroundingConfig grounding;
    bool gram = true;
    bool ett = true;
    int max_new = 32;
    std::uint64_t seed = 0;
    std::filesystem::path out_dir = ".";
};

struct DemoResult {
    vlm::TokenSequence prompt;
    vlm::DecodeResult plain;
    std::optional<grounding::GroundedDecodeResult> grounded;
    std::vector<std::filesystem::path> written;
};

/// Builds the prompt [BOS] "Video:" <frames> question, runs plain greedy
/// decoding and, unless disabled, grounded decoding; writes decode.json and
/// trace.json (grounded runs only) to out_dir.
vlm::TokenSequence build_demo_prompt(const vlm::ToyVlm& model, const DemoOptions& options);
DemoResult cmd_demo(const DemoOptions& options, std::ostream& out);

/// Bytes outside printable ASCII (other than newline) shown as \xNN.
std::string printable(std::string_view text);

/// GRAMKIT_SEED from the environment when set, otherwise `fallback`.
std::uint64_t resolve_seed(std::uint64_t fallback);

}  // namespace gramkit::harness
