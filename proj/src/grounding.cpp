// Copyright (C) 2026 The gramkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "gramkit/grounding.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>

#include "json.hpp"

namespace gramkit::grounding {

using vlm::Token;
using vlm::TokenKind;
using vlm::TokenSequence;

std::string render_timestamp(double seconds) {
    if (!(seconds >= 0.0) || !std::isfinite(seconds)) {
        throw std::invalid_argument("timestamps must be finite and non-negative");
    }
    const auto tenths = static_cast<long long>(std::round(seconds * 10.0));
    return "<" + std::to_string(tenths / 10) + "." + std::to_string(tenths % 10) + "s>";
}

double parse_timestamp(std::string_view surface) {
    auto bad = [&] { return std::invalid_argument("malformed timestamp token '" + std::string(surface) + "'"); };
    if (surface.size() < 6 || surface.front() != '<' || surface.substr(surface.size() - 2) != "s>") {
        throw bad();
    }
    std::string_view body = surface.substr(1, surface.size() - 3);
    const auto dot = body.find('.');
    if (dot == std::string_view::npos || dot == 0 || dot + 2 != body.size()) {
        throw bad();
    }
    long long tenths = 0;
    for (std::size_t i = 0; i < body.size(); ++i) {
        if (i == dot) {
            continue;
        }
        if (!std::isdigit(static_cast<unsigned char>(body[i]))) {
            throw bad();
        }
        tenths = tenths * 10 + (body[i] - '0');
    }
    return static_cast<double>(tenths) / 10.0;
}

TimestampToken make_timestamp(double seconds) { return {seconds, render_timestamp(seconds)}; }

TokenSequence interleave_timestamps(const TokenSequence& seq, double fps) {
    if (!(fps > 0.0)) {
        throw std::invalid_argument("fps must be positive");
    }
    TokenSequence out;
    out.reserve(seq.size());
    const Token* prev = nullptr;
    for (const Token& tok : seq) {
        const bool new_frame = tok.kind == TokenKind::Video &&
                               (prev == nullptr || prev->kind != TokenKind::Video || prev->frame_index != tok.frame_index);
        if (new_frame) {
            const TimestampToken ts = make_timestamp(tok.frame_index.value_or(0) / fps);
            Token stamp;
            stamp.id = vlm::kTimestampId;
            stamp.kind = TokenKind::Timestamp;
            stamp.timestamp_s = ts.timestamp_s;
            stamp.surface = ts.surface;
            out.push_back(std::move(stamp));
        }
        out.push_back(tok);
        prev = &tok;
    }
    return out;
}

bool is_step_boundary(std::span<const Token> generated, const BoundaryRule& rule) {
    if (generated.empty()) {
        return true;
    }
    const int last = generated.back().id;
    switch (rule.kind) {
    case BoundaryRule::Kind::AfterFullStop: return last == '.';
    case BoundaryRule::Kind::AfterNewline: return last == '\n';
    case BoundaryRule::Kind::Custom: return rule.tokens.contains(last);
    }
    return false;
}

std::vector<double> aggregate_attention(const vlm::AttentionTensor& att, std::span<const std::size_t> positions) {
    std::vector<double> scores(positions.size(), 0.0);
    for (std::size_t i = 0; i < positions.size(); ++i) {
        if (positions[i] >= static_cast<std::size_t>(att.n_keys)) {
            throw PositionOutOfRange("video position " + std::to_string(positions[i]) +
                                     " outside the attended range of " + std::to_string(att.n_keys) + " keys");
        }
    }
    const int n_maps = att.n_layers * att.n_heads;
    for (int l = 0; l < att.n_layers; ++l) {
        for (int h = 0; h < att.n_heads; ++h) {
            auto row = att.row(l, h);
            for (std::size_t i = 0; i < positions.size(); ++i) {
                scores[i] += row[positions[i]];
            }
        }
    }
    for (auto& s : scores) {
        s /= n_maps;
    }
    return scores;
}

std::vector<std::size_t> select_top_n(std::span<const double> scores, int n_select) {
    if (n_select < 1) {
        throw std::invalid_argument("n_select must be at least 1");
    }
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::size_t n = std::min(static_cast<std::size_t>(n_select), scores.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n), order.end(),
                      [&](std::size_t a, std::size_t b) {
                          if (scores[a] != scores[b]) {
                              return scores[a] > scores[b];
                          }
                          return a < b;
                      });
    order.resize(n);
    std::sort(order.begin(), order.end());
    return order;
}

std::vector<std::size_t> StepGrounding::selected_positions() const {
    std::vector<std::size_t> out;
    out.reserve(selected.size());
    for (const auto& s : selected) {
        out.push_back(s.position);
    }
    return out;
}

namespace {

struct Block {
    std::size_t anchor = 0;  // committed index the block follows
    TokenSequence tokens;
};

TokenSequence build_input(const TokenSequence& committed, const std::vector<Block>& blocks) {
    TokenSequence input;
    std::size_t extra = 0;
    for (const auto& b : blocks) {
        extra += b.tokens.size();
    }
    input.reserve(committed.size() + extra);
    auto next_block = blocks.begin();
    for (std::size_t i = 0; i < committed.size(); ++i) {
        input.push_back(committed[i]);
        for (; next_block != blocks.end() && next_block->anchor == i; ++next_block) {
            input.insert(input.end(), next_block->tokens.begin(), next_block->tokens.end());
        }
    }
    return input;
}

}  // namespace

GroundedDecodeResult grounded_decode(const vlm::ToyVlm& model, const TokenSequence& prompt,
                                     const GroundingConfig& cfg, int max_new) {
    if (max_new < 1) {
        throw std::invalid_argument("max_new must be at least 1");
    }
    if (cfg.n_select < 1) {
        throw std::invalid_argument("n_select must be at least 1");
    }
    std::vector<std::size_t> video_positions;
    for (std::size_t i = 0; i < prompt.size(); ++i) {
        if (prompt[i].kind == TokenKind::Video) {
            video_positions.push_back(i);
        }
    }
    if (video_positions.empty()) {
        throw NoVideoTokens("grounded decoding needs at least one video token in the prompt");
    }

    GroundedDecodeResult result;
    TokenSequence committed = prompt;
    std::vector<Block> blocks;

    for (int step = 0; step < max_new; ++step) {
        std::span<const Token> generated(committed.data() + prompt.size(), committed.size() - prompt.size());
        if (is_step_boundary(generated, cfg.boundary_rule)) {
            if (!cfg.cumulative) {
                blocks.clear();
            }
            const TokenSequence input = build_input(committed, blocks);
            const vlm::ForwardResult probe = model.forward(input);

            StepGrounding sg;
            sg.step_index = static_cast<int>(result.steps.size());
            sg.boundary_position = committed.size() - 1;
            sg.scores = aggregate_attention(probe.attention, video_positions);

            Block block;
            block.anchor = committed.size() - 1;
            for (std::size_t idx : select_top_n(sg.scores, cfg.n_select)) {
                const Token& tok = prompt[video_positions[idx]];
                sg.selected.push_back({video_positions[idx], tok.frame_index.value_or(0), tok.patch_row,
                                       tok.patch_col, sg.scores[idx]});
                block.tokens.push_back(tok);
            }
            sg.input_length = input.size() + block.tokens.size();
            blocks.push_back(std::move(block));
            result.steps.push_back(std::move(sg));
        }

        const vlm::ForwardResult fr = model.forward(build_input(committed, blocks));
        const int id = vlm::ToyVlm::argmax_token(fr.logits);
        if (id == vlm::kEosId) {
            result.stopped_at_eos = true;
            break;
        }
        Token tok;
        tok.id = id;
        tok.kind = TokenKind::Text;
        const int pos = vlm::next_position(committed);
        tok.position = {pos, pos, pos};
        committed.push_back(tok);
        result.generated.push_back(std::move(tok));
    }
    return result;
}

std::string dump_trace(std::span<const StepGrounding> steps) {
    nlohmann::json doc;
    doc["steps"] = nlohmann::json::array();
    for (const auto& s : steps) {
        nlohmann::json selected = nlohmann::json::array();
        for (const auto& t : s.selected) {
            selected.push_back({{"position", t.position},
                                {"frame_index", t.frame_index},
                                {"row", t.row},
                                {"col", t.col},
                                {"score", t.score}});
        }
        doc["steps"].push_back({{"step_index", s.step_index},
                                {"boundary_position", s.boundary_position},
                                {"selected", std::move(selected)}});
    }
    return doc.dump(2) + "\n";
}

}  // namespace gramkit::grounding
