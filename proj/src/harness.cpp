// Copyright (C) 2026 The gramkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "gramkit/harness.hpp"

#include <cstdio>
#include <cstdlib>
#include <ostream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace gramkit::harness {

namespace {

std::string format_threshold(double value) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", value);
    return buf;
}

std::vector<double> shown_taus(ScenarioCategory category, const ThresholdConfig& cfg, bool full) {
    if (full || category != ScenarioCategory::HandObjectCoGR) {
        return cfg.iou_thresholds;
    }
    for (double tau : cfg.iou_thresholds) {
        if (tau == 0.25) {
            return {tau};
        }
    }
    return {cfg.iou_thresholds.front()};
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) {
        return s;
    }
    std::string out = "\"";
    for (char c : s) {
        out += c;
        if (c == '"') {
            out += '"';
        }
    }
    return out + "\"";
}

std::string escape_token_text(const vlm::TokenSequence& tokens) {
    return printable(vlm::detokenize(tokens));
}

nlohmann::ordered_json decode_json(const vlm::TokenSequence& generated, bool stopped_at_eos) {
    std::vector<int> ids;
    for (const auto& t : generated) {
        ids.push_back(t.id);
    }
    return {{"text", escape_token_text(generated)}, {"token_ids", ids}, {"stopped_at_eos", stopped_at_eos}};
}

}  // namespace

std::optional<ReportFormat> parse_format(std::string_view name) {
    if (name == "csv") {
        return ReportFormat::Csv;
    }
    if (name == "markdown") {
        return ReportFormat::Markdown;
    }
    if (name == "structured") {
        return ReportFormat::Structured;
    }
    return std::nullopt;
}

std::string_view file_extension(ReportFormat format) {
    switch (format) {
    case ReportFormat::Csv: return "csv";
    case ReportFormat::Markdown: return "md";
    case ReportFormat::Structured: return "json";
    }
    return "txt";
}

void RunManifest::validate() const {
    if (benchmark_path.empty() || predictions_path.empty()) {
        throw std::invalid_argument("eval needs both --benchmark and --predictions");
    }
    ThresholdConfig copy = thresholds;
    copy.validate();
    if (workers < 1) {
        throw std::invalid_argument("--workers must be at least 1");
    }
}

std::string format_decimal(double value) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.1f", value);
    return buf;
}

ReportTable make_table(const CategoryReport& report, const ThresholdConfig& cfg, bool full_thresholds) {
    ReportTable t;
    t.category = report.category;
    auto add = [&](std::string column, std::string value) {
        t.columns.push_back(std::move(column));
        t.values.push_back(std::move(value));
    };
    add("N", std::to_string(report.total()));
    add("Missing", std::to_string(report.n_missing));
    if (is_spatial(report.category)) {
        add("T/Acc.", format_decimal(report.t_acc));
        for (double tau : shown_taus(report.category, cfg, full_thresholds)) {
            const std::string suffix = "@" + format_threshold(tau);
            for (EntityKind kind : required_kinds(report.category)) {
                add(std::string(to_label(kind)) + "IoU" + suffix, format_decimal(report.per_entity_rate.at(tau).at(kind)));
            }
            add("Acc" + suffix, format_decimal(report.acc.at(tau)));
        }
    } else {
        add("A/Acc.", format_decimal(report.action_acc));
        add("MAD", report.mad ? format_decimal(*report.mad) : "-");
        for (double delta : cfg.temporal_windows) {
            const std::string suffix = "@" + format_threshold(delta) + "s";
            const auto& [time_acc, acc] = report.acc_by_window.at(delta);
            add("Time Acc" + suffix, format_decimal(time_acc));
            add("Acc" + suffix, format_decimal(acc));
        }
    }
    return t;
}

std::string render_table(const ReportTable& table, ReportFormat format) {
    const std::string category(to_label(table.category));
    std::ostringstream out;
    switch (format) {
    case ReportFormat::Csv: {
        out << "category";
        for (const auto& c : table.columns) {
            out << ',' << csv_field(c);
        }
        out << '\n' << category;
        for (const auto& v : table.values) {
            out << ',' << csv_field(v);
        }
        out << '\n';
        break;
    }
    case ReportFormat::Markdown: {
        out << "### " << category << "\n\n|";
        for (const auto& c : table.columns) {
            out << ' ' << c << " |";
        }
        out << "\n|";
        for (std::size_t i = 0; i < table.columns.size(); ++i) {
            out << "---:|";
        }
        out << "\n|";
        for (const auto& v : table.values) {
            out << ' ' << v << " |";
        }
        out << '\n';
        break;
    }
    case ReportFormat::Structured: {
        nlohmann::ordered_json columns = nlohmann::ordered_json::object();
        for (std::size_t i = 0; i < table.columns.size(); ++i) {
            const std::string& v = table.values[i];
            if (v == "-") {
                columns[table.columns[i]] = nullptr;
            } else if (v.find('.') == std::string::npos) {
                columns[table.columns[i]] = std::stoll(v);
            } else {
                columns[table.columns[i]] = std::stod(v);
            }
        }
        nlohmann::ordered_json doc = {{"category", category}, {"columns", std::move(columns)}};
        out << doc.dump(2) << '\n';
        break;
    }
    }
    return out.str();
}

std::map<std::string, Prediction> index_predictions(std::span<const Prediction> predictions) {
    std::map<std::string, Prediction> out;
    for (const auto& p : predictions) {
        if (!out.emplace(p.instance_id, p).second) {
            throw SchemaError(p.instance_id, "instance_id", "more than one prediction for this instance");
        }
    }
    return out;
}

EvalResult cmd_eval(const RunManifest& manifest, std::ostream& out, std::ostream& err) {
    EvalResult result;
    std::vector<TestInstance> instances;
    std::map<std::string, Prediction> predictions;
    ThresholdConfig cfg = manifest.thresholds;
    try {
        manifest.validate();
        cfg.validate();
        std::vector<TestInstance> all = load_benchmark(manifest.benchmark_path);
        std::set<std::string> known;
        for (auto& inst : all) {
            known.insert(inst.id);
            if (!manifest.category || inst.category == *manifest.category) {
                instances.push_back(std::move(inst));
            }
        }
        predictions = index_predictions(load_predictions(manifest.predictions_path));
        for (const auto& [id, pred] : predictions) {
            if (!known.contains(id)) {
                result.unmatched_ids.push_back(id);
            }
        }
    } catch (const std::exception& e) {
        result.exit_code = kExitBadInput;
        result.error = e.what();
        err << "error: " << e.what() << '\n';
        return result;
    }

    for (const auto& id : result.unmatched_ids) {
        err << "warning: prediction for unknown instance '" << id << "'\n";
    }
    if (manifest.strict && !result.unmatched_ids.empty()) {
        result.exit_code = kExitUnmatched;
        result.error = std::to_string(result.unmatched_ids.size()) + " unmatched prediction id(s)";
        err << "error: " << result.error << " (--strict)\n";
        return result;
    }

    result.reports = aggregate(instances, predictions, cfg, action_match, manifest.workers);
    std::filesystem::create_directories(manifest.out_dir);
    for (const auto& report : result.reports) {
        const ReportTable table = make_table(report, cfg, manifest.full_thresholds);
        const std::string text = render_table(table, manifest.format);
        const std::filesystem::path path = manifest.out_dir / ("report_" + std::string(to_label(report.category)) +
                                                               "." + std::string(file_extension(manifest.format)));
        write_file_atomic(path, text);
        result.written.push_back(path);
        out << text;
        if (manifest.format == ReportFormat::Markdown) {
            out << '\n';
        }
    }
    return result;
}

SyntheticFixture cmd_gen(const SyntheticSpec& spec, const std::filesystem::path& benchmark_path,
                         const std::filesystem::path& predictions_path) {
    SyntheticFixture fx = generate_fixture(spec);
    for (const auto& p : {benchmark_path, predictions_path}) {
        if (p.has_parent_path()) {
            std::filesystem::create_directories(p.parent_path());
        }
    }
    save_benchmark(benchmark_path, fx.instances);
    save_predictions(predictions_path, fx.predictions);
    return fx;
}

vlm::TokenSequence build_demo_prompt(const vlm::ToyVlm& model, const DemoOptions& options) {
    VideoRef video;
    video.path = "synthetic/demo.mp4";
    video.fps = options.fps;
    video.width = options.frame_width;
    video.height = options.frame_height;
    video.n_frames = options.n_frames;
    const std::vector<vlm::Frame> frames = make_synthetic_frames(video, options.seed);

    vlm::TokenSequence video_tokens = model.encode_video(video, frames);
    if (options.ett) {
        video_tokens = grounding::interleave_timestamps(video_tokens, options.fps);
    }
    vlm::TokenSequence prompt;
    prompt.push_back(vlm::control_token(vlm::kBosId));
    for (auto& t : vlm::tokenize("Video: ")) {
        prompt.push_back(std::move(t));
    }
    prompt.insert(prompt.end(), video_tokens.begin(), video_tokens.end());
    for (auto& t : vlm::tokenize("\nQuestion: " + options.question + "\nThink step by step.\n")) {
        prompt.push_back(std::move(t));
    }
    return vlm::assign_positions(std::move(prompt));
}

DemoResult cmd_demo(const DemoOptions& options, std::ostream& out) {
    vlm::ModelConfig mc = options.model;
    mc.seed = options.seed;
    const vlm::ToyVlm model(mc);

    DemoResult result;
    result.prompt = build_demo_prompt(model, options);
    result.plain = model.greedy_decode(result.prompt, options.max_new);

    std::filesystem::create_directories(options.out_dir);
    const std::filesystem::path trace_path = options.out_dir / "trace.json";
    const std::filesystem::path decode_path = options.out_dir / "decode.json";

    nlohmann::ordered_json doc;
    doc["prompt_length"] = result.prompt.size();
    doc["ett"] = options.ett;
    doc["gram"] = options.gram;
    doc["n_select"] = options.grounding.n_select;
    doc["cumulative"] = options.grounding.cumulative;
    doc["plain"] = decode_json(result.plain.generated, result.plain.stopped_at_eos);

    out << "prompt tokens: " << result.prompt.size() << '\n';
    out << "plain:    " << escape_token_text(result.plain.generated) << '\n';

    if (options.gram) {
        result.grounded = grounding::grounded_decode(model, result.prompt, options.grounding, options.max_new);
        doc["grounded"] = decode_json(result.grounded->generated, result.grounded->stopped_at_eos);
        out << "grounded: " << escape_token_text(result.grounded->generated) << '\n';
        for (const auto& step : result.grounded->steps) {
            out << "step " << step.step_index << " @" << step.boundary_position << ":";
            for (const auto& s : step.selected) {
                char buf[96];
                std::snprintf(buf, sizeof(buf), " (f%d,r%d,c%d,%.4f)", s.frame_index, s.row, s.col, s.score);
                out << buf;
            }
            out << '\n';
        }
        write_file_atomic(trace_path, grounding::dump_trace(result.grounded->steps));
        result.written.push_back(trace_path);
    } else {
        std::filesystem::remove(trace_path);
    }
    write_file_atomic(decode_path, doc.dump(2) + "\n");
    result.written.push_back(decode_path);
    return result;
}

std::string printable(std::string_view text) {
    std::string out;
    for (unsigned char c : text) {
        if ((c >= 0x20 && c < 0x7f && c != '\\') || c == '\n') {
            out += static_cast<char>(c);
        } else {
            char buf[8];
            std::snprintf(buf, sizeof(buf), "\\x%02x", c);
            out += buf;
        }
    }
    return out;
}

std::uint64_t resolve_seed(std::uint64_t fallback) {
    const char* env = std::getenv("GRAMKIT_SEED");
    if (env == nullptr || *env == '\0') {
        return fallback;
    }
    std::size_t used = 0;
    const std::string value(env);
    const unsigned long long seed = std::stoull(value, &used);
    if (used != value.size()) {
        throw std::invalid_argument("GRAMKIT_SEED must be an unsigned integer");
    }
    return seed;
}

}  // namespace gramkit::harness
