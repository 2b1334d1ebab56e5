// Copyright (C) 2026 The gramkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "gramkit/toyvlm.hpp"

namespace gramkit::grounding {

class PositionOutOfRange : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

class NoVideoTokens : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// When the next generated token opens a new reasoning step.
struct BoundaryRule {
    enum class Kind { AfterFullStop, AfterNewline, Custom };
    Kind kind = Kind::AfterFullStop;
    std::set<int> tokens;  // Custom only

    static BoundaryRule after_full_stop() { return {}; }
    static BoundaryRule after_newline() { return {Kind::AfterNewline, {}}; }
    static BoundaryRule custom(std::set<int> ids) { return {Kind::Custom, std::move(ids)}; }
};

struct GroundingConfig {
    int n_select = 64;
    BoundaryRule boundary_rule;
    /// Keep every step's selected block instead of replacing it.
    bool cumulative = false;
};

struct TimestampToken {
    double timestamp_s = 0.0;
    std::string surface;
};

/// "<S.Ds>" with one decimal, rounded half-up.
std::string render_timestamp(double seconds);
/// Inverse of render_timestamp; throws std::invalid_argument on bad input.
double parse_timestamp(std::string_view surface);
TimestampToken make_timestamp(double seconds);

/// Inserts a timestamp token (frame_index / fps) in front of every frame's
/// block of video tokens. Other tokens pass through unchanged.
vlm::TokenSequence interleave_timestamps(const vlm::TokenSequence& seq, double fps);

/// True at the very start of a response and whenever the last generated
/// token closes a step under `rule`.
bool is_step_boundary(std::span<const vlm::Token> generated, const BoundaryRule& rule);

/// Mean attention over every (layer, head) from the recorded query to each
/// listed key position. Not renormalised over the subset.
std::vector<double> aggregate_attention(const vlm::AttentionTensor& att, std::span<const std::size_t> positions);

/// Indices of the min(n, |scores|) largest scores, ties to the lower index,
/// returned in ascending index order.
std::vector<std::size_t> select_top_n(std::span<const double> scores, int n_select);

struct SelectedToken {
    std::size_t position = 0;  // index in the prompt
    int frame_index = 0;
    int row = 0;
    int col = 0;
    double score = 0.0;
};

struct StepGrounding {
    int step_index = 0;
    /// Index of the query token (last committed token) in prompt + generated.
    std::size_t boundary_position = 0;
    /// Decoder input length once the selected block is appended.
    std::size_t input_length = 0;
    /// Aggregated score of every prompt video token, in prompt order.
    std::vector<double> scores;
    std::vector<SelectedToken> selected;

    std::vector<std::size_t> selected_positions() const;
};

struct GroundedDecodeResult {
    vlm::TokenSequence generated;
    std::vector<StepGrounding> steps;
    bool stopped_at_eos = false;
};

/// Greedy decoding that, at every step boundary, appends the top-N attended
/// prompt video tokens (with their original rotary indices) to the decoder input.
GroundedDecodeResult grounded_decode(const vlm::ToyVlm& model, const vlm::TokenSequence& prompt,
                                     const GroundingConfig& cfg, int max_new);

/// Structured trace: {"steps":[{step_index, boundary_position, selected:[...]}]}.
std::string dump_trace(std::span<const StepGrounding> steps);

}  // namespace gramkit::grounding
