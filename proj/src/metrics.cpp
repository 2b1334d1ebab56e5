// Copyright (C) 2026 The gramkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "gramkit/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <thread>
#include <variant>

namespace gramkit {

namespace {

bool is_trailing_punct(char c) {
    switch (c) {
    case '.':
    case ',':
    case '!':
    case '?':
    case ';':
    case ':':
        return true;
    default:
        return false;
    }
}

double percent(int count, int total) {
    return total == 0 ? 0.0 : 100.0 * static_cast<double>(count) / static_cast<double>(total);
}

struct InstanceResult {
    bool has_prediction = false;
    std::optional<SgrOutcome> sgr;
    std::optional<TgrOutcome> tgr;
};

InstanceResult score_one(const TestInstance& inst, const Prediction* pred, const ThresholdConfig& cfg,
                         const ActionMatcher& matcher) {
    InstanceResult r;
    if (pred == nullptr) {
        return r;
    }
    r.has_prediction = true;
    if (is_spatial(inst.category)) {
        r.sgr = score_sgr(inst, *pred, cfg);
    } else {
        try {
            r.tgr = score_tgr(inst, *pred, cfg, matcher);
        } catch (const MissingField&) {
            // Scored as wrong on every predicate, excluded from MAD.
        }
    }
    return r;
}

}  // namespace

void ThresholdConfig::validate() {
    std::sort(iou_thresholds.begin(), iou_thresholds.end());
    iou_thresholds.erase(std::unique(iou_thresholds.begin(), iou_thresholds.end()), iou_thresholds.end());
    std::sort(temporal_windows.begin(), temporal_windows.end());
    temporal_windows.erase(std::unique(temporal_windows.begin(), temporal_windows.end()),
                           temporal_windows.end());
    if (iou_thresholds.empty() || temporal_windows.empty()) {
        throw std::invalid_argument("threshold lists must not be empty");
    }
    for (double tau : iou_thresholds) {
        if (!(tau > 0.0 && tau <= 1.0)) {
            throw std::invalid_argument("IoU thresholds must lie in (0, 1]");
        }
    }
    for (double delta : temporal_windows) {
        if (!(delta > 0.0)) {
            throw std::invalid_argument("temporal windows must be positive");
        }
    }
}

double iou(const BoundingBox& a, const BoundingBox& b) {
    const double iw = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
    const double ih = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
    const double inter = (iw > 0.0 && ih > 0.0) ? iw * ih : 0.0;
    const double uni = a.area() + b.area() - inter;
    if (!(uni > 0.0)) {
        return 0.0;
    }
    return std::clamp(inter / uni, 0.0, 1.0);
}

double x_iou(const BoundingBox& pred, std::span<const BoundingBox> gt) {
    if (gt.empty()) {
        throw EmptyGroundTruth("x_iou needs at least one ground-truth box");
    }
    double best = 0.0;
    for (const auto& g : gt) {
        best = std::max(best, iou(pred, g));
    }
    return best;
}

std::string normalize_action_label(std::string_view label) {
    std::string out;
    bool pending_space = false;
    for (char c : label) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) {
            out += ' ';
            pending_space = false;
        }
        out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    while (!out.empty() && (is_trailing_punct(out.back()) || out.back() == ' ')) {
        out.pop_back();
    }
    return out;
}

bool action_match(std::string_view pred_label, std::string_view gt_label) {
    return normalize_action_label(pred_label) == normalize_action_label(gt_label);
}

SgrOutcome score_sgr(const TestInstance& inst, const Prediction& pred, const ThresholdConfig& cfg) {
    if (!is_spatial(inst.category)) {
        throw CategoryMismatch("instance '" + inst.id + "' is not a spatial scenario");
    }
    SgrOutcome out;
    out.time_ok = pred.time.has_value() && inst.action_interval.contains(normalize_time(pred));

    std::vector<BoundingBox> gt;
    for (EntityKind kind : required_kinds(inst.category)) {
        double value = 0.0;
        auto it = pred.boxes.find(kind);
        const EntityTrack* track = inst.track(kind);
        if (it != pred.boxes.end() && track != nullptr) {
            gt.clear();
            for (const auto& tb : track->boxes) {
                gt.push_back(tb.box);
            }
            value = x_iou(it->second, gt);
        }
        out.per_entity_iou[kind] = value;
    }

    for (double tau : cfg.iou_thresholds) {
        bool all = true;
        auto& pass = out.pass_at[tau];
        for (const auto& [kind, value] : out.per_entity_iou) {
            pass[kind] = value >= tau;
            all = all && pass[kind];
        }
        out.acc_at[tau] = out.time_ok && all;
    }
    return out;
}

TgrOutcome score_tgr(const TestInstance& inst, const Prediction& pred, const ThresholdConfig& cfg,
                     const ActionMatcher& matcher) {
    if (inst.category != ScenarioCategory::TemporalGR) {
        throw CategoryMismatch("instance '" + inst.id + "' is not a temporal scenario");
    }
    if (!pred.action_label) {
        throw MissingField("prediction for '" + pred.instance_id + "' has no action_label");
    }
    if (!pred.time) {
        throw MissingField("prediction for '" + pred.instance_id + "' has no time");
    }
    TgrOutcome out;
    out.action_ok = matcher(*pred.action_label, inst.action_label);
    out.abs_dev = std::abs(normalize_time(pred) - inst.action_interval.start_s);
    for (double delta : cfg.temporal_windows) {
        out.within_at[delta] = out.abs_dev <= delta;
        out.correct_at[delta] = out.action_ok && out.within_at[delta];
    }
    return out;
}

double mad(std::span<const TgrOutcome> outcomes) {
    if (outcomes.empty()) {
        throw EmptyInput("mad of an empty outcome list");
    }
    double sum = 0.0;
    for (const auto& o : outcomes) {
        sum += o.abs_dev;
    }
    return sum / static_cast<double>(outcomes.size());
}

std::vector<CategoryReport> aggregate(std::span<const TestInstance> instances,
                                      const std::map<std::string, Prediction>& predictions,
                                      const ThresholdConfig& cfg, const ActionMatcher& matcher,
                                      unsigned workers) {
    std::vector<InstanceResult> results(instances.size());
    auto score_range = [&](std::size_t begin, std::size_t stride) {
        for (std::size_t i = begin; i < instances.size(); i += stride) {
            auto it = predictions.find(instances[i].id);
            const Prediction* pred = it == predictions.end() ? nullptr : &it->second;
            results[i] = score_one(instances[i], pred, cfg, matcher);
        }
    };
    workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(1, instances.size()))));
    if (workers == 1) {
        score_range(0, 1);
    } else {
        std::vector<std::jthread> pool;
        for (unsigned w = 0; w < workers; ++w) {
            pool.emplace_back(score_range, w, workers);
        }
    }

    std::vector<CategoryReport> reports;
    for (ScenarioCategory category : kAllCategories) {
        int time_ok = 0;
        int action_ok = 0;
        std::map<double, std::map<EntityKind, int>> entity_pass;
        std::map<double, int> acc;
        std::map<double, std::pair<int, int>> window;
        std::vector<TgrOutcome> timed;
        CategoryReport rep;
        rep.category = category;
        bool present = false;

        for (std::size_t i = 0; i < instances.size(); ++i) {
            if (instances[i].category != category) {
                continue;
            }
            present = true;
            const InstanceResult& r = results[i];
            if (!r.has_prediction) {
                ++rep.n_missing;
                continue;
            }
            ++rep.n_scored;
            if (r.sgr) {
                time_ok += r.sgr->time_ok ? 1 : 0;
                for (const auto& [tau, pass] : r.sgr->pass_at) {
                    for (const auto& [kind, ok] : pass) {
                        entity_pass[tau][kind] += ok ? 1 : 0;
                    }
                }
                for (const auto& [tau, ok] : r.sgr->acc_at) {
                    acc[tau] += ok ? 1 : 0;
                }
            }
            if (r.tgr) {
                action_ok += r.tgr->action_ok ? 1 : 0;
                for (double delta : cfg.temporal_windows) {
                    window[delta].first += r.tgr->within_at.at(delta) ? 1 : 0;
                    window[delta].second += r.tgr->correct_at.at(delta) ? 1 : 0;
                }
                timed.push_back(*r.tgr);
            }
        }
        if (!present) {
            continue;
        }

        const int total = rep.total();
        if (is_spatial(category)) {
            rep.t_acc = percent(time_ok, total);
            for (double tau : cfg.iou_thresholds) {
                for (EntityKind kind : required_kinds(category)) {
                    rep.per_entity_rate[tau][kind] = percent(entity_pass[tau][kind], total);
                }
                rep.acc[tau] = percent(acc[tau], total);
            }
        } else {
            rep.action_acc = percent(action_ok, total);
            if (!timed.empty()) {
                rep.mad = mad(timed);
            }
            for (double delta : cfg.temporal_windows) {
                rep.acc_by_window[delta] = {percent(window[delta].first, total),
                                            percent(window[delta].second, total)};
            }
        }
        reports.push_back(std::move(rep));
    }
    return reports;
}

}  // namespace gramkit
