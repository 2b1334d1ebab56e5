// Copyright (C) 2026 The gramkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "gramkit/datamodel.hpp"

namespace gramkit::vlm {

// Vocabulary layout: ids 0-255 are raw bytes, followed by reserved specials.
inline constexpr int kByteVocab = 256;
inline constexpr int kNumSpecials = 32;
inline constexpr int kBosId = kByteVocab + 0;
inline constexpr int kEosId = kByteVocab + 1;
inline constexpr int kVideoId = kByteVocab + 2;
inline constexpr int kTimestampId = kByteVocab + 3;

enum class TokenKind { Text, Video, Timestamp, Control };

/// Rotary index triple. Non-video tokens carry t == h == w.
struct PositionIndex {
    int t = 0;
    int h = 0;
    int w = 0;
    bool operator==(const PositionIndex&) const = default;
};

struct Token {
    int id = 0;
    TokenKind kind = TokenKind::Text;
    PositionIndex position;
    std::optional<int> frame_index;
    /// Patch row/column inside the frame, video tokens only.
    int patch_row = 0;
    int patch_col = 0;
    std::optional<double> timestamp_s;
    /// Rendered surface of a timestamp token, e.g. "<1.0s>".
    std::string surface;
    /// Precomputed input embedding (video tokens); empty means table lookup.
    std::vector<float> embedding;

    bool operator==(const Token&) const = default;
};

using TokenSequence = std::vector<Token>;

struct ModelConfig {
    int n_layers = 4;
    int n_heads = 4;
    int d_model = 64;
    int d_ff = 256;
    int vocab_size = kByteVocab + kNumSpecials;
    int patch_rows = 4;
    int patch_cols = 4;
    int max_frames = 32;
    std::uint64_t seed = 0;

    int head_dim() const { return d_model / n_heads; }
    /// Throws std::invalid_argument.
    void validate() const;

    std::string to_json() const;
    static ModelConfig from_json(std::string_view text);
    static ModelConfig load(const std::filesystem::path& path);
    bool operator==(const ModelConfig&) const = default;
};

/// Synthetic frame in HWC layout with values in [0, 1].
struct Frame {
    int height = 0;
    int width = 0;
    int channels = 3;
    std::vector<float> data;

    float at(int y, int x, int c) const {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
};

class TooManyFrames : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class BadDimensions : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Attention weights of one query token: [layer][head][key_position].
struct AttentionTensor {
    int n_layers = 0;
    int n_heads = 0;
    int n_keys = 0;
    std::vector<float> weights;

    float at(int layer, int head, int key) const {
        return weights[(static_cast<std::size_t>(layer) * n_heads + head) * n_keys + key];
    }
    std::span<const float> row(int layer, int head) const {
        return {weights.data() + (static_cast<std::size_t>(layer) * n_heads + head) * n_keys,
                static_cast<std::size_t>(n_keys)};
    }
};

struct ForwardResult {
    std::vector<float> logits;
    AttentionTensor attention;
};

/// Full per-position record, used for inspection and tests.
struct ForwardTrace {
    /// [position][vocab]
    std::vector<std::vector<float>> logits;
    /// Pre-softmax attention logits, [layer][head][query][key]; masked entries are -inf.
    std::vector<std::vector<std::vector<std::vector<float>>>> scores;
};

struct DecodeResult {
    /// Newly generated tokens only, positions assigned.
    TokenSequence generated;
    /// One record per generated token, taken at the query that produced it.
    std::vector<AttentionTensor> attention;
    bool stopped_at_eos = false;
};

TokenSequence tokenize(std::string_view text);
/// Concatenates the bytes of text tokens and the surfaces of timestamp tokens.
std::string detokenize(std::span<const Token> tokens);
Token control_token(int id);

/// Assigns rotary indices in sequence order: every non-video token advances the
/// running position by one; a run of video tokens occupies one temporal slot
/// per frame starting at the running position.
TokenSequence assign_positions(TokenSequence seq);

/// Deterministic, randomly initialised decoder-only transformer. Immutable
/// after construction; all methods are const and hold per-call state only.
class ToyVlm {
public:
    explicit ToyVlm(ModelConfig config);

    const ModelConfig& config() const { return m_config; }

    /// One token per patch of every frame, rows × cols per frame.
    TokenSequence encode_video(const VideoRef& video, std::span<const Frame> frames) const;

    /// Input embedding of a single token.
    std::vector<float> embed(const Token& token) const;

    /// Causal forward pass; returns last-position logits and the attention of
    /// the last position over all keys.
    ForwardResult forward(std::span<const Token> seq) const;
    ForwardTrace trace(std::span<const Token> seq) const;

    /// Greedy decoding from `prompt` (positions must already be assigned).
    /// Only byte tokens and the end token are eligible; ties go to the lower id.
    DecodeResult greedy_decode(const TokenSequence& prompt, int max_new) const;

    /// Index of the largest eligible logit.
    static int argmax_token(std::span<const float> logits);

private:
    struct Layer {
        std::vector<float> wq, wk, wv, wo;  // d_model x d_model, row-major [out][in]
        std::vector<float> w1;              // d_ff x d_model
        std::vector<float> w2;              // d_model x d_ff
    };

    struct Pass;
    void run(std::span<const Token> seq, Pass& pass) const;

    ModelConfig m_config;
    std::vector<float> m_token_embedding;  // vocab x d_model
    std::vector<float> m_patch_projection; // d_model x 3
    std::vector<Layer> m_layers;
    std::vector<float> m_unembedding;      // vocab x d_model
    std::vector<double> m_inv_freq;        // head_dim / 2
    std::vector<int> m_pair_component;     // 0 = t, 1 = h, 2 = w per rotary pair
};

/// Next running position after `seq`, following the assign_positions rule.
int next_position(std::span<const Token> seq);

}  // namespace gramkit::vlm
