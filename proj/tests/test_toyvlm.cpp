// Copyright (C) 2026 The gramkit Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>
#include <string>

#include "gramkit/synthetic.hpp"
#include "gramkit/toyvlm.hpp"

using namespace gramkit;
using namespace gramkit::vlm;

namespace {

ModelConfig small_config(int grid = 2) {
    ModelConfig cfg;
    cfg.n_layers = 2;
    cfg.n_heads = 2;
    cfg.d_model = 32;
    cfg.d_ff = 64;
    cfg.patch_rows = grid;
    cfg.patch_cols = grid;
    cfg.seed = 5;
    return cfg;
}

std::vector<Frame> frames_for(const VideoRef& v, std::uint64_t seed = 1) {
    return make_synthetic_frames(v, seed);
}

TokenSequence text_with_positions(const std::string& text, int offset) {
    TokenSequence seq = tokenize(text);
    for (std::size_t i = 0; i < seq.size(); ++i) {
        int p = offset + static_cast<int>(i);
        seq[i].position = {p, p, p};
    }
    return seq;
}

}  // namespace

TEST(Tokenize, Examples) {
    EXPECT_TRUE(tokenize("").empty());
    auto hi = tokenize("Hi");
    ASSERT_EQ(hi.size(), 2u);
    EXPECT_EQ(hi[0].id, 72);
    EXPECT_EQ(hi[1].id, 105);
    EXPECT_EQ(hi[0].kind, TokenKind::Text);
}

TEST(Tokenize, RandomBytesRoundTrip) {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 20; ++trial) {
        std::string s(1024, '\0');
        for (auto& c : s) {
            c = static_cast<char>(rng() & 0xff);
        }
        auto toks = tokenize(s);
        ASSERT_EQ(toks.size(), s.size());
        EXPECT_EQ(detokenize(toks), s);
    }
}

TEST(Tokenize, DetokenizeSkipsVideoAndControl) {
    TokenSequence seq = tokenize("a");
    seq.insert(seq.begin(), control_token(kBosId));
    Token v;
    v.id = kVideoId;
    v.kind = TokenKind::Video;
    seq.push_back(v);
    Token ts;
    ts.id = kTimestampId;
    ts.kind = TokenKind::Timestamp;
    ts.surface = "<1.0s>";
    seq.push_back(ts);
    EXPECT_EQ(detokenize(seq), "a<1.0s>");
}

TEST(EncodeVideo, TokenCounts) {
    ToyVlm model(small_config(2));
    VideoRef one{"v", 1.0, 8, 8, 1};
    auto toks = model.encode_video(one, frames_for(one));
    EXPECT_EQ(toks.size(), 4u);

    ToyVlm model4(small_config(4));
    VideoRef three{"v", 1.0, 16, 16, 3};
    toks = model4.encode_video(three, frames_for(three));
    ASSERT_EQ(toks.size(), 48u);
    std::set<int> frames;
    for (const auto& t : toks) {
        EXPECT_EQ(t.kind, TokenKind::Video);
        ASSERT_TRUE(t.frame_index.has_value());
        frames.insert(*t.frame_index);
        EXPECT_LT(t.patch_row, 4);
        EXPECT_LT(t.patch_col, 4);
    }
    EXPECT_EQ(frames, (std::set<int>{0, 1, 2}));
}

TEST(EncodeVideo, IdenticalFramesGiveIdenticalBlocks) {
    ToyVlm model(small_config(2));
    VideoRef v{"v", 1.0, 8, 8, 3};
    auto f = frames_for(VideoRef{"v", 1.0, 8, 8, 1});
    std::vector<Frame> same{f[0], f[0], f[0]};
    auto toks = model.encode_video(v, same);
    for (int frame = 1; frame < 3; ++frame) {
        for (int i = 0; i < 4; ++i) {
            EXPECT_EQ(toks[frame * 4 + i].embedding, toks[i].embedding);
        }
    }
}

TEST(EncodeVideo, Errors) {
    auto cfg = small_config(2);
    cfg.max_frames = 2;
    ToyVlm model(cfg);
    VideoRef v{"v", 1.0, 8, 8, 3};
    EXPECT_THROW(model.encode_video(v, frames_for(v)), TooManyFrames);
    VideoRef odd{"v", 1.0, 7, 8, 1};
    EXPECT_THROW(model.encode_video(odd, frames_for(odd)), BadDimensions);
    VideoRef two{"v", 1.0, 8, 8, 2};
    auto fr = frames_for(two);
    VideoRef declared{"v", 1.0, 8, 8, 1};
    EXPECT_THROW(model.encode_video(declared, fr), BadDimensions);
}

TEST(AssignPositions, PureText) {
    auto seq = assign_positions(tokenize("hello"));
    for (int i = 0; i < 5; ++i) {
        EXPECT_EQ(seq[i].position, (PositionIndex{i, i, i}));
    }
    EXPECT_EQ(next_position(seq), 5);
}

TEST(AssignPositions, TextThenOneFrame) {
    ToyVlm model(small_config(2));
    VideoRef v{"v", 1.0, 8, 8, 1};
    TokenSequence seq = tokenize("ab");
    auto video = model.encode_video(v, frames_for(v));
    seq.insert(seq.end(), video.begin(), video.end());
    seq = assign_positions(seq);
    std::set<std::pair<int, int>> hw;
    for (std::size_t i = 2; i < seq.size(); ++i) {
        EXPECT_EQ(seq[i].position.t, 2);
        hw.insert({seq[i].position.h, seq[i].position.w});
    }
    EXPECT_EQ(hw, (std::set<std::pair<int, int>>{{0, 0}, {0, 1}, {1, 0}, {1, 1}}));
}

TEST(AssignPositions, SecondFrameAdvancesByOne) {
    ToyVlm model(small_config(2));
    VideoRef v{"v", 1.0, 8, 8, 2};
    TokenSequence seq = tokenize("x");
    auto video = model.encode_video(v, frames_for(v));
    seq.insert(seq.end(), video.begin(), video.end());
    auto tail = tokenize("y");
    seq.insert(seq.end(), tail.begin(), tail.end());
    seq = assign_positions(seq);
    EXPECT_EQ(seq[5].position.t - seq[1].position.t, 1);
    EXPECT_EQ(seq.back().position, (PositionIndex{3, 3, 3}));
}

TEST(Forward, AttentionRowsNormalised) {
    ToyVlm model(small_config(2));
    VideoRef v{"v", 1.0, 8, 8, 2};
    TokenSequence seq = tokenize("Q: ");
    auto video = model.encode_video(v, frames_for(v));
    seq.insert(seq.end(), video.begin(), video.end());
    seq = assign_positions(seq);
    auto fr = model.forward(seq);
    EXPECT_EQ(fr.attention.n_keys, static_cast<int>(seq.size()));
    for (int l = 0; l < fr.attention.n_layers; ++l) {
        for (int h = 0; h < fr.attention.n_heads; ++h) {
            double sum = 0.0;
            for (float w : fr.attention.row(l, h)) {
                EXPECT_GE(w, 0.0f);
                sum += w;
            }
            EXPECT_NEAR(sum, 1.0, 1e-6);
        }
    }
}

TEST(Forward, DeterministicAndSeeded) {
    auto seq = assign_positions(tokenize("determinism"));
    ToyVlm a(small_config());
    ToyVlm b(small_config());
    auto ra = a.forward(seq);
    EXPECT_EQ(ra.logits, a.forward(seq).logits);
    EXPECT_EQ(ra.logits, b.forward(seq).logits);
    EXPECT_EQ(ra.attention.weights, b.forward(seq).attention.weights);
    auto other = small_config();
    other.seed = 6;
    EXPECT_NE(ra.logits, ToyVlm(other).forward(seq).logits);
}

TEST(Forward, SingleTokenAttendsToItself) {
    ToyVlm model(small_config());
    auto fr = model.forward(assign_positions(tokenize("z")));
    for (int l = 0; l < fr.attention.n_layers; ++l) {
        for (int h = 0; h < fr.attention.n_heads; ++h) {
            EXPECT_EQ(fr.attention.at(l, h, 0), 1.0f);
        }
    }
}

TEST(Forward, EmptySequenceRejected) {
    ToyVlm model(small_config());
    EXPECT_THROW(model.forward({}), std::invalid_argument);
}

// Replacing tokens after position k leaves logits at 0..k untouched.
TEST(Forward, Causality) {
    ToyVlm model(small_config());
    auto seq = assign_positions(tokenize("causal masking check"));
    auto base = model.trace(seq);
    for (std::size_t k : {0u, 5u, 12u}) {
        auto altered = seq;
        for (std::size_t i = k + 1; i < altered.size(); ++i) {
            altered[i].id = 0;
        }
        auto tr = model.trace(altered);
        for (std::size_t i = 0; i <= k; ++i) {
            EXPECT_EQ(tr.logits[i], base.logits[i]) << "position " << i;
        }
    }
}

// Pre-softmax logits depend only on relative offsets for pure text.
TEST(Forward, RotaryShiftInvariance) {
    ToyVlm model(small_config());
    const std::string text = "relative offsets";
    auto a = model.trace(text_with_positions(text, 0));
    for (int shift : {1, 7, 40}) {
        auto b = model.trace(text_with_positions(text, shift));
        for (std::size_t l = 0; l < a.scores.size(); ++l) {
            for (std::size_t h = 0; h < a.scores[l].size(); ++h) {
                for (std::size_t q = 0; q < text.size(); ++q) {
                    for (std::size_t k = 0; k <= q; ++k) {
                        EXPECT_NEAR(a.scores[l][h][q][k], b.scores[l][h][q][k], 1e-5);
                    }
                }
            }
        }
    }
}

TEST(GreedyDecode, BoundsAndDeterminism) {
    ToyVlm model(small_config());
    auto prompt = assign_positions(tokenize("Answer: "));
    EXPECT_THROW(model.greedy_decode(prompt, 0), std::invalid_argument);
    auto one = model.greedy_decode(prompt, 1);
    EXPECT_LE(one.generated.size(), 1u);
    auto a = model.greedy_decode(prompt, 6);
    auto b = model.greedy_decode(prompt, 6);
    EXPECT_EQ(a.generated, b.generated);
    EXPECT_EQ(a.attention.size(), b.attention.size());
}

TEST(GreedyDecode, LengthNeverExceedsBudget) {
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 8; ++trial) {
        auto cfg = small_config();
        cfg.seed = rng();
        ToyVlm model(cfg);
        std::string text(1 + rng() % 12, 'a');
        for (auto& c : text) {
            c = static_cast<char>(32 + rng() % 95);
        }
        const int budget = 1 + static_cast<int>(rng() % 5);
        auto out = model.greedy_decode(assign_positions(tokenize(text)), budget);
        EXPECT_LE(static_cast<int>(out.generated.size()), budget);
        EXPECT_EQ(out.attention.size(), out.generated.size() + (out.stopped_at_eos ? 1 : 0));
        int pos = static_cast<int>(text.size());
        for (const auto& t : out.generated) {
            EXPECT_LT(t.id, kByteVocab);
            EXPECT_EQ(t.position, (PositionIndex{pos, pos, pos}));
            ++pos;
        }
    }
}

TEST(ArgmaxToken, SkipsReservedIdsAndBreaksTiesLow) {
    std::vector<float> logits(kByteVocab + kNumSpecials, 0.0f);
    logits[kVideoId] = 9.0f;
    logits[10] = 1.0f;
    logits[3] = 1.0f;
    EXPECT_EQ(ToyVlm::argmax_token(logits), 3);
    logits[kEosId] = 2.0f;
    EXPECT_EQ(ToyVlm::argmax_token(logits), kEosId);
}

TEST(ModelConfig, ValidationAndJson) {
    ModelConfig cfg;
    EXPECT_NO_THROW(cfg.validate());
    EXPECT_EQ(ModelConfig::from_json(cfg.to_json()), cfg);
    auto bad = cfg;
    bad.n_heads = 3;
    EXPECT_THROW(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.vocab_size = 260;
    EXPECT_THROW(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.n_layers = 0;
    EXPECT_THROW(bad.validate(), std::invalid_argument);
    auto parsed = ModelConfig::from_json(R"({"n_layers": 2, "patch_grid": [2, 3], "seed": 9})");
    EXPECT_EQ(parsed.n_layers, 2);
    EXPECT_EQ(parsed.patch_rows, 2);
    EXPECT_EQ(parsed.patch_cols, 3);
    EXPECT_EQ(parsed.seed, 9u);
    EXPECT_EQ(parsed.d_model, 64);
}
