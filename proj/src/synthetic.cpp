// Copyright (C) 2026 The gramkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "gramkit/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <stdexcept>

#include "json.hpp"

namespace gramkit {

namespace {

constexpr int kVideoWidth = 640;
constexpr int kVideoHeight = 480;
constexpr double kVideoFps = 30.0;

const std::array<std::string_view, 8> kActions = {
    "opening the door",   "closing the door", "drinking coffee", "holding a book",
    "sitting on a chair", "washing a cup",    "putting on shoes", "turning on the light"};

int exact_count(double fraction, int n, const std::string& what) {
    if (!(fraction >= 0.0 && fraction <= 1.0)) {
        throw std::invalid_argument(what + ": fraction must lie in [0, 1]");
    }
    const double scaled = fraction * n;
    const double rounded = std::round(scaled);
    if (std::abs(scaled - rounded) > 1e-9) {
        throw std::invalid_argument(what + ": count * fraction must be integral");
    }
    return static_cast<int>(rounded);
}

// Two-group nested layout. `group` instances satisfy the flag predicate
// (time or action); pass[k] / joint[k] count instances meeting threshold k,
// thresholds ordered strictest first. Returns, per instance, whether it is in
// the group and the first threshold it meets (levels.size() = meets none).
struct NestedLayout {
    std::vector<bool> in_group;
    std::vector<int> level;
};

NestedLayout nested_layout(int n, int group, const std::vector<int>& pass, const std::vector<int>& joint,
                           const std::string& what) {
    const int m = static_cast<int>(pass.size());
    for (int k = 0; k < m; ++k) {
        const int outside = pass[k] - joint[k];
        if (joint[k] > group || outside < 0 || outside > n - group) {
            throw std::invalid_argument(what + ": targets are mutually inconsistent");
        }
        if (k > 0 && (joint[k] < joint[k - 1] || outside < pass[k - 1] - joint[k - 1])) {
            throw std::invalid_argument(what + ": targets must be monotone across thresholds");
        }
    }
    NestedLayout out;
    auto level_of = [&](int j, bool inside) {
        for (int k = 0; k < m; ++k) {
            const int cap = inside ? joint[k] : pass[k] - joint[k];
            if (j < cap) {
                return k;
            }
        }
        return m;
    };
    for (int j = 0; j < group; ++j) {
        out.in_group.push_back(true);
        out.level.push_back(level_of(j, true));
    }
    for (int j = 0; j < n - group; ++j) {
        out.in_group.push_back(false);
        out.level.push_back(level_of(j, false));
    }
    return out;
}

struct SpatialCounts {
    int time_ok = 0;
    std::vector<double> taus;  // strictest (largest) first
    std::vector<int> pass;
    std::vector<int> joint;
};

SpatialCounts spatial_counts(const SpatialTargets& t, const ThresholdConfig& th, int n, const std::string& what) {
    SpatialCounts c;
    c.time_ok = exact_count(t.t_acc, n, what + " t_acc");
    c.taus.assign(th.iou_thresholds.rbegin(), th.iou_thresholds.rend());
    for (double tau : c.taus) {
        auto acc = t.acc.find(tau);
        if (acc == t.acc.end()) {
            throw std::invalid_argument(what + ": no acc target for the configured IoU threshold");
        }
        auto ep = t.entity_pass.find(tau);
        const double pass = ep == t.entity_pass.end() ? acc->second : ep->second;
        c.joint.push_back(exact_count(acc->second, n, what + " acc"));
        c.pass.push_back(exact_count(pass, n, what + " entity_pass"));
    }
    return c;
}

struct TemporalCounts {
    int action_ok = 0;
    std::vector<double> deltas;  // strictest (smallest) first
    std::vector<int> within;
    std::vector<int> joint;
};

TemporalCounts temporal_counts(const TemporalTargets& t, const ThresholdConfig& th, int n) {
    TemporalCounts c;
    c.action_ok = exact_count(t.action_acc, n, "temporal action_acc");
    c.deltas = th.temporal_windows;
    for (double delta : c.deltas) {
        auto w = t.within.find(delta);
        auto a = t.acc.find(delta);
        if (w == t.within.end() || a == t.acc.end()) {
            throw std::invalid_argument("temporal: targets missing for a configured window");
        }
        c.within.push_back(exact_count(w->second, n, "temporal within"));
        c.joint.push_back(exact_count(a->second, n, "temporal acc"));
    }
    return c;
}

std::string instance_id(ScenarioCategory c, int i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "_%03d", i);
    return std::string(to_label(c)) + buf;
}

std::string capitalized(std::string_view s) {
    std::string out(s);
    if (!out.empty() && out[0] >= 'a' && out[0] <= 'z') {
        out[0] = static_cast<char>(out[0] - 'a' + 'A');
    }
    return out;
}

VideoRef make_video(const std::string& id, const TimeInterval& interval) {
    VideoRef v;
    v.path = "synthetic/" + id + ".mp4";
    v.fps = kVideoFps;
    v.width = kVideoWidth;
    v.height = kVideoHeight;
    v.n_frames = static_cast<int>(std::ceil((interval.end_s + 10.0) * kVideoFps));
    return v;
}

TimeInterval make_interval(FixtureRng& rng) {
    const double start = 0.5 * static_cast<double>(2 + rng.below(40));
    const double length = static_cast<double>(2 + rng.below(8));
    return {start, start + length};
}

// Track boxes march across the frame 200 px apart, so a prediction placed
// near the first box overlaps no other box of the same track.
EntityTrack make_track(EntityKind kind, int band, const TimeInterval& interval, FixtureRng& rng) {
    EntityTrack track;
    track.kind = kind;
    const int k = 2 + static_cast<int>(rng.below(2));
    const double length = interval.end_s - interval.start_s;
    for (int j = 0; j < k; ++j) {
        TimedBox tb;
        tb.timestamp_s = interval.start_s + length * (j + 1) / (k + 1);
        const double x = 20.0 + 200.0 * j;
        const double y = 10.0 + 150.0 * band + static_cast<double>(rng.below(20));
        const double w = 60.0 + static_cast<double>(rng.below(41));
        const double h = 60.0 + static_cast<double>(rng.below(41));
        tb.box = {x, y, x + w, y + h};
        track.boxes.push_back(tb);
    }
    return track;
}

// Horizontal shift of a box by d gives IoU (w - d) / (w + d).
BoundingBox box_with_iou(const BoundingBox& g, double target) {
    const double d = g.width() * (1.0 - target) / (1.0 + target);
    return {g.x_min + d, g.y_min, g.x_max + d, g.y_max};
}

double iou_for_level(const std::vector<double>& taus, int level) {
    if (level >= static_cast<int>(taus.size())) {
        return taus.back() / 2.0;
    }
    const double upper = level == 0 ? 1.0 : taus[level - 1];
    return (taus[level] + upper) / 2.0;
}

double deviation_for_level(const std::vector<double>& deltas, int level) {
    if (level >= static_cast<int>(deltas.size())) {
        return deltas.back() + 2.0;
    }
    const double lower = level == 0 ? 0.0 : deltas[level - 1];
    return (deltas[level] + lower) / 2.0;
}

std::map<double, double> read_fractions(const nlohmann::json& j) {
    std::map<double, double> out;
    for (const auto& [key, value] : j.items()) {
        out[std::stod(key)] = value.get<double>();
    }
    return out;
}

SpatialTargets read_spatial(const nlohmann::json& j, SpatialTargets base) {
    if (j.contains("t_acc")) {
        base.t_acc = j.at("t_acc").get<double>();
    }
    if (j.contains("acc")) {
        base.acc = read_fractions(j.at("acc"));
    }
    if (j.contains("entity_pass")) {
        base.entity_pass = read_fractions(j.at("entity_pass"));
    }
    return base;
}

}  // namespace

SyntheticSpec SyntheticSpec::uniform(int per_category, std::uint64_t seed) {
    SyntheticSpec spec;
    spec.seed = seed;
    for (ScenarioCategory c : kAllCategories) {
        spec.counts[c] = per_category;
    }
    return spec;
}

const SpatialTargets& SyntheticSpec::targets_for(ScenarioCategory category) const {
    auto it = spatial_overrides.find(category);
    return it == spatial_overrides.end() ? spatial : it->second;
}

void SyntheticSpec::validate() const {
    ThresholdConfig th = thresholds;
    th.validate();
    if (counts.empty()) {
        throw std::invalid_argument("synthetic spec has no categories");
    }
    for (const auto& [category, n] : counts) {
        const std::string what(to_label(category));
        if (n < 1) {
            throw std::invalid_argument(what + ": count must be at least 1");
        }
        if (is_spatial(category)) {
            SpatialCounts c = spatial_counts(targets_for(category), th, n, what);
            nested_layout(n, c.time_ok, c.pass, c.joint, what);
        } else {
            TemporalCounts c = temporal_counts(temporal, th, n);
            nested_layout(n, c.action_ok, c.within, c.joint, what);
        }
    }
}

SyntheticSpec SyntheticSpec::from_json(std::string_view text) {
    SyntheticSpec spec;
    try {
        const nlohmann::json j = nlohmann::json::parse(text);
        spec.seed = j.value("seed", spec.seed);
        if (j.contains("counts")) {
            for (const auto& [label, n] : j.at("counts").items()) {
                auto c = parse_category(label);
                if (!c) {
                    throw std::invalid_argument("unknown category '" + label + "'");
                }
                spec.counts[*c] = n.get<int>();
            }
        } else {
            spec = uniform(5, spec.seed);
        }
        if (j.contains("thresholds")) {
            const auto& th = j.at("thresholds");
            if (th.contains("tau")) {
                spec.thresholds.iou_thresholds = th.at("tau").get<std::vector<double>>();
            }
            if (th.contains("delta")) {
                spec.thresholds.temporal_windows = th.at("delta").get<std::vector<double>>();
            }
        }
        if (j.contains("spatial")) {
            spec.spatial = read_spatial(j.at("spatial"), spec.spatial);
        }
        if (j.contains("overrides")) {
            for (const auto& [label, t] : j.at("overrides").items()) {
                auto c = parse_category(label);
                if (!c) {
                    throw std::invalid_argument("unknown category '" + label + "'");
                }
                spec.spatial_overrides[*c] = read_spatial(t, spec.spatial);
            }
        }
        if (j.contains("temporal")) {
            const auto& t = j.at("temporal");
            spec.temporal.action_acc = t.value("action_acc", spec.temporal.action_acc);
            if (t.contains("within")) {
                spec.temporal.within = read_fractions(t.at("within"));
            }
            if (t.contains("acc")) {
                spec.temporal.acc = read_fractions(t.at("acc"));
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("synthetic spec", e.what());
    }
    spec.validate();
    return spec;
}

SyntheticFixture generate_fixture(const SyntheticSpec& spec) {
    spec.validate();
    ThresholdConfig th = spec.thresholds;
    th.validate();
    FixtureRng rng(spec.seed);
    SyntheticFixture fx;

    for (ScenarioCategory category : kAllCategories) {
        auto found = spec.counts.find(category);
        if (found == spec.counts.end()) {
            continue;
        }
        const int n = found->second;
        const std::string what(to_label(category));

        NestedLayout layout;
        std::vector<double> levels_at;
        if (is_spatial(category)) {
            SpatialCounts c = spatial_counts(spec.targets_for(category), th, n, what);
            layout = nested_layout(n, c.time_ok, c.pass, c.joint, what);
            levels_at = c.taus;
        } else {
            TemporalCounts c = temporal_counts(spec.temporal, th, n);
            layout = nested_layout(n, c.action_ok, c.within, c.joint, what);
            levels_at = c.deltas;
        }
        std::vector<int> slots(n);
        for (int i = 0; i < n; ++i) {
            slots[i] = i;
        }
        rng.shuffle(slots);

        for (int i = 0; i < n; ++i) {
            const int slot = slots[i];
            const bool flag = layout.in_group[slot];
            const int level = layout.level[slot];

            TestInstance inst;
            inst.id = instance_id(category, i);
            inst.category = category;
            inst.action_interval = make_interval(rng);
            inst.video = make_video(inst.id, inst.action_interval);
            inst.action_label = std::string(kActions[rng.below(kActions.size())]);

            Prediction pred;
            pred.instance_id = inst.id;

            if (is_spatial(category)) {
                inst.question = "Who or what is involved in '" + inst.action_label +
                                "'? Give the time and a bounding box for each entity.";
                int band = 0;
                const double target = iou_for_level(levels_at, level);
                for (EntityKind kind : required_kinds(category)) {
                    inst.tracks.push_back(make_track(kind, band++, inst.action_interval, rng));
                    pred.boxes[kind] = box_with_iou(inst.tracks.back().boxes.front().box, target);
                }
                const TimeInterval& iv = inst.action_interval;
                if (flag) {
                    if (i % 2 == 0) {
                        pred.time = TimePoint{iv.midpoint()};
                    } else {
                        pred.time = TimeInterval{iv.start_s + 0.5, iv.end_s - 0.5};
                    }
                } else if (i % 2 == 0) {
                    pred.time = TimePoint{iv.end_s + 2.5};
                } else {
                    pred.time = TimeInterval{iv.end_s + 1.0, iv.end_s + 4.0};
                }
                pred.answer_text = "Step 1. The action happens around the stated time. Answer: see boxes.";
            } else {
                inst.question = "When does '" + inst.action_label + "' start, and which action comes first?";
                const double dev = deviation_for_level(levels_at, level);
                const double onset = inst.action_interval.start_s;
                const bool before = (i % 2 == 1) && onset >= dev;
                pred.time = TimePoint{before ? onset - dev : onset + dev};
                if (flag) {
                    pred.action_label = capitalized(inst.action_label) + ".";
                } else {
                    pred.action_label = std::string("not ") + inst.action_label;
                }
                pred.answer_text = "The action " + *pred.action_label;
            }
            validate(inst);
            fx.instances.push_back(std::move(inst));
            fx.predictions.push_back(std::move(pred));
        }
    }
    return fx;
}

std::vector<vlm::Frame> make_synthetic_frames(const VideoRef& video, std::uint64_t seed) {
    FixtureRng rng(seed);
    const double phase = rng.unit() * 2.0 * std::numbers::pi;
    const double freq = 1.0 + static_cast<double>(rng.below(3));
    const int cell = 4 + static_cast<int>(rng.below(5));
    const double drift = 0.05 + 0.1 * rng.unit();

    std::vector<vlm::Frame> frames;
    for (int f = 0; f < video.n_frames; ++f) {
        vlm::Frame frame;
        frame.height = video.height;
        frame.width = video.width;
        frame.channels = 3;
        frame.data.resize(static_cast<std::size_t>(video.height) * video.width * 3);
        // Moving checker cell that marks where "the action" is in this frame.
        const int hot_x = (f * cell * 2) % std::max(1, video.width);
        for (int y = 0; y < video.height; ++y) {
            for (int x = 0; x < video.width; ++x) {
                const bool checker = ((x / cell) + (y / cell) + f) % 2 == 0;
                const bool hot = x >= hot_x && x < hot_x + 2 * cell && y < 2 * cell;
                for (int c = 0; c < 3; ++c) {
                    const double grad = 0.5 + 0.25 * std::sin(2.0 * std::numbers::pi * freq * x / video.width +
                                                              phase + drift * f + 0.7 * c);
                    double value = grad + (checker ? 0.15 : -0.15) + (hot ? 0.35 : 0.0);
                    frame.data[(static_cast<std::size_t>(y) * video.width + x) * 3 + c] =
                        static_cast<float>(std::clamp(value, 0.0, 1.0));
                }
            }
        }
        frames.push_back(std::move(frame));
    }
    return frames;
}

}  // namespace gramkit
