// Copyright (C) 2026 The gramkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "gramkit/toyvlm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "json.hpp"

namespace gramkit::vlm {

namespace {

constexpr double kRopeBase = 10000.0;
constexpr float kNormEps = 1e-5f;

// Uniform draw in [-bound, bound] from raw engine output, so weights do not
// depend on the standard library's distribution implementation.
class WeightRng {
public:
    explicit WeightRng(std::uint64_t seed) : m_engine(seed) {}

    float uniform(float bound) {
        const double u = static_cast<double>(m_engine() >> 11) * 0x1.0p-53;
        return static_cast<float>((2.0 * u - 1.0) * bound);
    }
    std::vector<float> fill(std::size_t n, float bound) {
        std::vector<float> out(n);
        for (auto& v : out) {
            v = uniform(bound);
        }
        return out;
    }

private:
    std::mt19937_64 m_engine;
};

void rms_norm(std::span<const float> in, std::span<float> out) {
    double ss = 0.0;
    for (float v : in) {
        ss += static_cast<double>(v) * v;
    }
    const float scale = 1.0f / std::sqrt(static_cast<float>(ss / in.size()) + kNormEps);
    for (std::size_t i = 0; i < in.size(); ++i) {
        out[i] = in[i] * scale;
    }
}

// out[o] = sum_i w[o][i] * in[i]
void matvec(const std::vector<float>& w, std::span<const float> in, std::span<float> out) {
    const std::size_t n_in = in.size();
    for (std::size_t o = 0; o < out.size(); ++o) {
        const float* row = w.data() + o * n_in;
        float acc = 0.0f;
        for (std::size_t i = 0; i < n_in; ++i) {
            acc += row[i] * in[i];
        }
        out[o] = acc;
    }
}

float gelu(float x) {
    return 0.5f * x * (1.0f + std::tanh(0.7978845608f * (x + 0.044715f * x * x * x)));
}

int component_value(const PositionIndex& p, int component) {
    switch (component) {
    case 0: return p.t;
    case 1: return p.h;
    default: return p.w;
    }
}

}  // namespace

struct ToyVlm::Pass {
    bool keep_all_logits = false;
    bool keep_scores = false;
    // Outputs.
    std::vector<std::vector<float>> logits;  // last only unless keep_all_logits
    AttentionTensor last_attention;
    std::vector<std::vector<std::vector<std::vector<float>>>> scores;
};

void ModelConfig::validate() const {
    if (n_layers < 1 || n_heads < 1 || d_model < 1 || d_ff < 1 || patch_rows < 1 || patch_cols < 1 ||
        max_frames < 1) {
        throw std::invalid_argument("model dimensions and counts must be at least 1");
    }
    if (d_model % n_heads != 0) {
        throw std::invalid_argument("d_model must be divisible by n_heads");
    }
    if (head_dim() % 2 != 0 || head_dim() < 6) {
        throw std::invalid_argument("head_dim must be even and hold at least one rotary pair per axis");
    }
    if (vocab_size < kByteVocab + kNumSpecials) {
        throw std::invalid_argument("vocab_size must cover 256 bytes plus the reserved specials");
    }
}

std::string ModelConfig::to_json() const {
    nlohmann::json j = {{"n_layers", n_layers},     {"n_heads", n_heads},       {"d_model", d_model},
                        {"d_ff", d_ff},             {"vocab_size", vocab_size}, {"patch_grid", {patch_rows, patch_cols}},
                        {"max_frames", max_frames}, {"seed", seed}};
    return j.dump(2) + "\n";
}

ModelConfig ModelConfig::from_json(std::string_view text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError("model config", e.what());
    }
    ModelConfig c;
    try {
        c.n_layers = j.value("n_layers", c.n_layers);
        c.n_heads = j.value("n_heads", c.n_heads);
        c.d_model = j.value("d_model", c.d_model);
        c.d_ff = j.value("d_ff", c.d_ff);
        c.vocab_size = j.value("vocab_size", c.vocab_size);
        if (j.contains("patch_grid")) {
            c.patch_rows = j.at("patch_grid").at(0).get<int>();
            c.patch_cols = j.at("patch_grid").at(1).get<int>();
        }
        c.max_frames = j.value("max_frames", c.max_frames);
        c.seed = j.value("seed", c.seed);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("model config", e.what());
    }
    c.validate();
    return c;
}

ModelConfig ModelConfig::load(const std::filesystem::path& path) {
    return from_json(read_file(path));
}

TokenSequence tokenize(std::string_view text) {
    TokenSequence out;
    out.reserve(text.size());
    for (unsigned char c : text) {
        Token t;
        t.id = c;
        t.kind = TokenKind::Text;
        out.push_back(std::move(t));
    }
    return out;
}

std::string detokenize(std::span<const Token> tokens) {
    std::string out;
    for (const auto& t : tokens) {
        if (t.kind == TokenKind::Text) {
            out += static_cast<char>(static_cast<unsigned char>(t.id));
        } else if (t.kind == TokenKind::Timestamp) {
            out += t.surface;
        }
    }
    return out;
}

Token control_token(int id) {
    Token t;
    t.id = id;
    t.kind = TokenKind::Control;
    return t;
}

TokenSequence assign_positions(TokenSequence seq) {
    int running = 0;
    int run_base = 0;
    int run_first_frame = 0;
    bool in_video = false;
    for (auto& tok : seq) {
        if (tok.kind == TokenKind::Video) {
            const int frame = tok.frame_index.value_or(0);
            if (!in_video) {
                in_video = true;
                run_base = running;
                run_first_frame = frame;
            }
            tok.position = {run_base + (frame - run_first_frame), tok.patch_row, tok.patch_col};
            running = std::max(running, tok.position.t + 1);
        } else {
            in_video = false;
            tok.position = {running, running, running};
            ++running;
        }
    }
    return seq;
}

int next_position(std::span<const Token> seq) {
    int running = 0;
    for (const auto& tok : seq) {
        running = std::max(running, tok.position.t + 1);
    }
    return running;
}

ToyVlm::ToyVlm(ModelConfig config) : m_config(config) {
    m_config.validate();
    const auto d = static_cast<std::size_t>(m_config.d_model);
    const auto ff = static_cast<std::size_t>(m_config.d_ff);
    const auto vocab = static_cast<std::size_t>(m_config.vocab_size);

    WeightRng rng(m_config.seed);
    m_token_embedding = rng.fill(vocab * d, 1.0f);
    m_patch_projection = rng.fill(d * 3, 1.7f);
    const float in_bound = std::sqrt(3.0f / static_cast<float>(d));
    const float ff_bound = std::sqrt(3.0f / static_cast<float>(ff));
    for (int l = 0; l < m_config.n_layers; ++l) {
        Layer layer;
        layer.wq = rng.fill(d * d, in_bound);
        layer.wk = rng.fill(d * d, in_bound);
        layer.wv = rng.fill(d * d, in_bound);
        layer.wo = rng.fill(d * d, in_bound);
        layer.w1 = rng.fill(ff * d, in_bound);
        layer.w2 = rng.fill(d * ff, ff_bound);
        m_layers.push_back(std::move(layer));
    }
    m_unembedding = rng.fill(vocab * d, in_bound);

    const int hd = m_config.head_dim();
    const int pairs = hd / 2;
    const int per_axis = pairs / 3;
    const int t_pairs = pairs - 2 * per_axis;
    for (int i = 0; i < pairs; ++i) {
        m_inv_freq.push_back(std::pow(kRopeBase, -2.0 * i / hd));
        m_pair_component.push_back(i < t_pairs ? 0 : (i < t_pairs + per_axis ? 1 : 2));
    }
}

TokenSequence ToyVlm::encode_video(const VideoRef& video, std::span<const Frame> frames) const {
    const int rows = m_config.patch_rows;
    const int cols = m_config.patch_cols;
    if (static_cast<int>(frames.size()) > m_config.max_frames) {
        throw TooManyFrames("got " + std::to_string(frames.size()) + " frames, model accepts at most " +
                            std::to_string(m_config.max_frames));
    }
    if (static_cast<int>(frames.size()) != video.n_frames) {
        throw BadDimensions("video declares " + std::to_string(video.n_frames) + " frames but " +
                            std::to_string(frames.size()) + " were supplied");
    }
    TokenSequence out;
    out.reserve(frames.size() * rows * cols);
    for (std::size_t f = 0; f < frames.size(); ++f) {
        const Frame& frame = frames[f];
        if (frame.height != video.height || frame.width != video.width) {
            throw BadDimensions("frame size differs from the video resolution");
        }
        if (frame.channels != 3 || frame.data.size() != static_cast<std::size_t>(frame.height) * frame.width * 3) {
            throw BadDimensions("frames must be HWC with 3 channels");
        }
        if (frame.height % rows != 0 || frame.width % cols != 0) {
            throw BadDimensions("frame dimensions must be divisible by the patch grid");
        }
        const int ph = frame.height / rows;
        const int pw = frame.width / cols;
        for (int r = 0; r < rows; ++r) {
            for (int c = 0; c < cols; ++c) {
                std::array<double, 3> mean{};
                for (int y = r * ph; y < (r + 1) * ph; ++y) {
                    for (int x = c * pw; x < (c + 1) * pw; ++x) {
                        for (int ch = 0; ch < 3; ++ch) {
                            mean[ch] += frame.at(y, x, ch);
                        }
                    }
                }
                std::array<float, 3> m{};
                for (int ch = 0; ch < 3; ++ch) {
                    m[ch] = static_cast<float>(mean[ch] / (ph * pw));
                }
                Token tok;
                tok.id = kVideoId;
                tok.kind = TokenKind::Video;
                tok.frame_index = static_cast<int>(f);
                tok.patch_row = r;
                tok.patch_col = c;
                tok.embedding.resize(m_config.d_model);
                matvec(m_patch_projection, m, tok.embedding);
                out.push_back(std::move(tok));
            }
        }
    }
    return out;
}

std::vector<float> ToyVlm::embed(const Token& token) const {
    const auto d = static_cast<std::size_t>(m_config.d_model);
    if (!token.embedding.empty()) {
        return token.embedding;
    }
    auto row = [&](int id) {
        return std::span<const float>(m_token_embedding.data() + static_cast<std::size_t>(id) * d, d);
    };
    std::vector<float> out(row(token.id).begin(), row(token.id).end());
    if (token.kind == TokenKind::Timestamp && !token.surface.empty()) {
        const float inv = 1.0f / static_cast<float>(token.surface.size());
        for (unsigned char c : token.surface) {
            auto r = row(c);
            for (std::size_t i = 0; i < d; ++i) {
                out[i] += r[i] * inv;
            }
        }
    }
    return out;
}

void ToyVlm::run(std::span<const Token> seq, Pass& pass) const {
    const int n = static_cast<int>(seq.size());
    const int d = m_config.d_model;
    const int hd = m_config.head_dim();
    const int n_heads = m_config.n_heads;
    const int n_layers = m_config.n_layers;
    const float inv_sqrt = 1.0f / std::sqrt(static_cast<float>(hd));

    std::vector<std::vector<float>> x(n);
    for (int i = 0; i < n; ++i) {
        x[i] = embed(seq[i]);
    }

    // Per-position rotary cos/sin, [pos][pair].
    const int pairs = hd / 2;
    std::vector<float> cos_tab(static_cast<std::size_t>(n) * pairs);
    std::vector<float> sin_tab(static_cast<std::size_t>(n) * pairs);
    for (int i = 0; i < n; ++i) {
        for (int p = 0; p < pairs; ++p) {
            const double angle = component_value(seq[i].position, m_pair_component[p]) * m_inv_freq[p];
            cos_tab[static_cast<std::size_t>(i) * pairs + p] = static_cast<float>(std::cos(angle));
            sin_tab[static_cast<std::size_t>(i) * pairs + p] = static_cast<float>(std::sin(angle));
        }
    }
    auto rotate = [&](std::vector<float>& v, int pos) {
        for (int h = 0; h < n_heads; ++h) {
            float* head = v.data() + static_cast<std::size_t>(h) * hd;
            for (int p = 0; p < pairs; ++p) {
                const float c = cos_tab[static_cast<std::size_t>(pos) * pairs + p];
                const float s = sin_tab[static_cast<std::size_t>(pos) * pairs + p];
                const float a = head[2 * p];
                const float b = head[2 * p + 1];
                head[2 * p] = a * c - b * s;
                head[2 * p + 1] = a * s + b * c;
            }
        }
    };

    pass.last_attention = {n_layers, n_heads, n, std::vector<float>(static_cast<std::size_t>(n_layers) * n_heads * n)};
    if (pass.keep_scores) {
        pass.scores.assign(n_layers, std::vector<std::vector<std::vector<float>>>(
                                         n_heads, std::vector<std::vector<float>>(
                                                      n, std::vector<float>(n, -std::numeric_limits<float>::infinity()))));
    }

    std::vector<float> normed(d);
    std::vector<std::vector<float>> q(n, std::vector<float>(d));
    std::vector<std::vector<float>> k(n, std::vector<float>(d));
    std::vector<std::vector<float>> v(n, std::vector<float>(d));
    std::vector<float> concat(d);
    std::vector<float> proj(d);
    std::vector<float> hidden(m_config.d_ff);
    std::vector<double> logit_row(n);

    for (int l = 0; l < n_layers; ++l) {
        const Layer& layer = m_layers[l];
        for (int i = 0; i < n; ++i) {
            rms_norm(x[i], normed);
            matvec(layer.wq, normed, q[i]);
            matvec(layer.wk, normed, k[i]);
            matvec(layer.wv, normed, v[i]);
            rotate(q[i], i);
            rotate(k[i], i);
        }
        std::vector<std::vector<float>> attn_out(n, std::vector<float>(d, 0.0f));
        for (int h = 0; h < n_heads; ++h) {
            const std::size_t off = static_cast<std::size_t>(h) * hd;
            for (int i = 0; i < n; ++i) {
                double max_logit = -std::numeric_limits<double>::infinity();
                for (int j = 0; j <= i; ++j) {
                    float dot = 0.0f;
                    for (int e = 0; e < hd; ++e) {
                        dot += q[i][off + e] * k[j][off + e];
                    }
                    const float s = dot * inv_sqrt;
                    logit_row[j] = s;
                    max_logit = std::max(max_logit, logit_row[j]);
                    if (pass.keep_scores) {
                        pass.scores[l][h][i][j] = s;
                    }
                }
                double denom = 0.0;
                for (int j = 0; j <= i; ++j) {
                    logit_row[j] = std::exp(logit_row[j] - max_logit);
                    denom += logit_row[j];
                }
                float* out = attn_out[i].data() + off;
                for (int j = 0; j <= i; ++j) {
                    const double wgt = logit_row[j] / denom;
                    const auto wf = static_cast<float>(wgt);
                    for (int e = 0; e < hd; ++e) {
                        out[e] += wf * v[j][off + e];
                    }
                    if (i == n - 1) {
                        pass.last_attention.weights[(static_cast<std::size_t>(l) * n_heads + h) * n + j] = wf;
                    }
                }
            }
        }
        for (int i = 0; i < n; ++i) {
            matvec(layer.wo, attn_out[i], proj);
            for (int e = 0; e < d; ++e) {
                x[i][e] += proj[e];
            }
            rms_norm(x[i], normed);
            matvec(layer.w1, normed, hidden);
            for (auto& hv : hidden) {
                hv = gelu(hv);
            }
            matvec(layer.w2, hidden, proj);
            for (int e = 0; e < d; ++e) {
                x[i][e] += proj[e];
            }
        }
    }

    const int first = pass.keep_all_logits ? 0 : n - 1;
    pass.logits.clear();
    for (int i = first; i < n; ++i) {
        rms_norm(x[i], normed);
        std::vector<float> logits(m_config.vocab_size);
        matvec(m_unembedding, normed, logits);
        pass.logits.push_back(std::move(logits));
    }
}

ForwardResult ToyVlm::forward(std::span<const Token> seq) const {
    if (seq.empty()) {
        throw std::invalid_argument("forward needs a non-empty sequence");
    }
    Pass pass;
    run(seq, pass);
    return {std::move(pass.logits.back()), std::move(pass.last_attention)};
}

ForwardTrace ToyVlm::trace(std::span<const Token> seq) const {
    if (seq.empty()) {
        throw std::invalid_argument("trace needs a non-empty sequence");
    }
    Pass pass;
    pass.keep_all_logits = true;
    pass.keep_scores = true;
    run(seq, pass);
    return {std::move(pass.logits), std::move(pass.scores)};
}

int ToyVlm::argmax_token(std::span<const float> logits) {
    int best = -1;
    for (int id = 0; id < static_cast<int>(logits.size()); ++id) {
        if (id >= kByteVocab && id != kEosId) {
            continue;
        }
        if (best < 0 || logits[id] > logits[best]) {
            best = id;
        }
    }
    return best;
}

DecodeResult ToyVlm::greedy_decode(const TokenSequence& prompt, int max_new) const {
    if (max_new < 1) {
        throw std::invalid_argument("max_new must be at least 1");
    }
    if (prompt.empty()) {
        throw std::invalid_argument("greedy_decode needs a non-empty prompt");
    }
    DecodeResult result;
    TokenSequence seq = prompt;
    for (int step = 0; step < max_new; ++step) {
        ForwardResult fr = forward(seq);
        result.attention.push_back(std::move(fr.attention));
        const int id = argmax_token(fr.logits);
        if (id == kEosId) {
            result.stopped_at_eos = true;
            break;
        }
        Token tok;
        tok.id = id;
        tok.kind = TokenKind::Text;
        const int pos = next_position(seq);
        tok.position = {pos, pos, pos};
        seq.push_back(tok);
        result.generated.push_back(std::move(tok));
    }
    return result;
}

}  // namespace gramkit::vlm
