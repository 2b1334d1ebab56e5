// Copyright (C) 2026 The gramkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "gramkit/datamodel.hpp"

namespace gramkit {

class EmptyGroundTruth : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class CategoryMismatch : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class MissingField : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class EmptyInput : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// IoU thresholds (tau) for spatial scenarios and onset windows (delta, seconds)
/// for the temporal scenario. Both lists are kept sorted ascending and unique.
struct ThresholdConfig {
    std::vector<double> iou_thresholds{0.25, 0.5};
    std::vector<double> temporal_windows{2.0, 4.0, 6.0};

    /// Sorts, deduplicates and checks ranges; throws std::invalid_argument.
    void validate();
};

/// |a ∩ b| / |a ∪ b|, or 0 when the union is empty.
double iou(const BoundingBox& a, const BoundingBox& b);

/// Best IoU of `pred` against any ground-truth box. Throws EmptyGroundTruth.
double x_iou(const BoundingBox& pred, std::span<const BoundingBox> gt);

struct SgrOutcome {
    bool time_ok = false;
    std::map<EntityKind, double> per_entity_iou;
    std::map<double, std::map<EntityKind, bool>> pass_at;
    std::map<double, bool> acc_at;
};

struct TgrOutcome {
    bool action_ok = false;
    double abs_dev = 0.0;
    /// |t̂ - onset| <= delta, regardless of the action label.
    std::map<double, bool> within_at;
    /// action_ok && within_at[delta].
    std::map<double, bool> correct_at;
};

/// Replaceable label comparison used by the temporal scorer.
using ActionMatcher = std::function<bool(std::string_view pred_label, std::string_view gt_label)>;

/// Case-insensitive match after trimming, collapsing internal whitespace and
/// stripping trailing punctuation.
bool action_match(std::string_view pred_label, std::string_view gt_label);
std::string normalize_action_label(std::string_view label);

SgrOutcome score_sgr(const TestInstance& inst, const Prediction& pred, const ThresholdConfig& cfg);

TgrOutcome score_tgr(const TestInstance& inst, const Prediction& pred, const ThresholdConfig& cfg,
                     const ActionMatcher& matcher = action_match);

/// Mean absolute onset deviation. Throws EmptyInput.
double mad(std::span<const TgrOutcome> outcomes);

struct CategoryReport {
    ScenarioCategory category = ScenarioCategory::PersonGR;
    int n_scored = 0;
    int n_missing = 0;
    // Spatial categories.
    double t_acc = 0.0;
    std::map<double, std::map<EntityKind, double>> per_entity_rate;
    std::map<double, double> acc;
    // Temporal category.
    double action_acc = 0.0;
    /// Mean over predictions that carry a time; empty when there are none.
    std::optional<double> mad;
    /// delta -> (time accuracy, joint accuracy).
    std::map<double, std::pair<double, double>> acc_by_window;

    int total() const { return n_scored + n_missing; }
};

/// Scores every instance against the prediction sharing its id and reduces
/// per category, in the fixed order of kAllCategories. Instances without a
/// prediction count as failing every predicate. Scoring is spread over
/// `workers` threads; the result does not depend on the worker count.
std::vector<CategoryReport> aggregate(std::span<const TestInstance> instances,
                                      const std::map<std::string, Prediction>& predictions,
                                      const ThresholdConfig& cfg,
                                      const ActionMatcher& matcher = action_match,
                                      unsigned workers = 1);

}  // namespace gramkit
