// Copyright (C) 2026 The gramkit Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <vector>

#include "gramkit/metrics.hpp"
#include "gramkit/synthetic.hpp"
#include "oracles.hpp"

using namespace gramkit;

namespace {

TestInstance spatial(const std::string& id, ScenarioCategory cat, TimeInterval iv = {2.0, 5.0}) {
    TestInstance inst;
    inst.id = id;
    inst.category = cat;
    inst.video = {"v.mp4", 30.0, 640, 480, 300};
    inst.action_label = "opening the door";
    inst.action_interval = iv;
    for (auto kind : required_kinds(cat)) {
        inst.tracks.push_back({kind, {{iv.start_s, {0, 0, 100, 100}}}});
    }
    return inst;
}

TestInstance temporal(const std::string& id, double onset) {
    TestInstance inst;
    inst.id = id;
    inst.category = ScenarioCategory::TemporalGR;
    inst.video = {"v.mp4", 30.0, 640, 480, 300};
    inst.action_label = "opening the door";
    inst.action_interval = {onset, onset + 3.0};
    return inst;
}

// A box sharing the full height of (0,0,100,100) with IoU exactly `target`.
BoundingBox box_with_iou(double target) {
    // Width w overlapping [0,100]: IoU = w / 100 for w <= 100.
    return {0, 0, 100.0 * target, 100};
}

Prediction pred_for(const std::string& id, double t, std::map<EntityKind, BoundingBox> boxes = {}) {
    Prediction p;
    p.instance_id = id;
    p.time = TimePoint{t};
    p.boxes = std::move(boxes);
    return p;
}

BoundingBox random_box(std::mt19937_64& rng, int grid) {
    std::uniform_int_distribution<int> d(0, grid);
    int a = d(rng), b = d(rng), c = d(rng), e = d(rng);
    return {double(std::min(a, b)), double(std::min(c, e)), double(std::max(a, b)), double(std::max(c, e))};
}

}  // namespace

TEST(Iou, Examples) {
    BoundingBox a{0, 0, 10, 10};
    EXPECT_DOUBLE_EQ(iou(a, a), 1.0);
    EXPECT_DOUBLE_EQ(iou(a, {20, 20, 30, 30}), 0.0);
    EXPECT_NEAR(iou(a, {5, 0, 15, 10}), 1.0 / 3.0, 1e-12);
    EXPECT_DOUBLE_EQ(iou({3, 3, 3, 3}, {3, 3, 3, 3}), 0.0);
}

TEST(Iou, PixelOracleAndSymmetry) {
    std::mt19937_64 rng(7);
    for (int i = 0; i < 300; ++i) {
        auto a = random_box(rng, 40);
        auto b = random_box(rng, 40);
        oracle::IntBox ia{int(a.x_min), int(a.y_min), int(a.x_max), int(a.y_max)};
        oracle::IntBox ib{int(b.x_min), int(b.y_min), int(b.x_max), int(b.y_max)};
        EXPECT_NEAR(iou(a, b), oracle::pixel_count_iou(ia, ib), 1e-9);
        EXPECT_EQ(iou(a, b), iou(b, a));
        EXPECT_GE(iou(a, b), 0.0);
        EXPECT_LE(iou(a, b), 1.0);
    }
}

TEST(XIou, Examples) {
    std::vector<BoundingBox> gt{{50, 50, 60, 60}, {1, 1, 2, 2}, {0, 0, 10, 10}, {3, 3, 9, 9}, {70, 0, 80, 5}};
    EXPECT_DOUBLE_EQ(x_iou({0, 0, 10, 10}, gt), 1.0);
    std::vector<BoundingBox> disjoint{{20, 20, 30, 30}, {40, 40, 50, 50}};
    EXPECT_DOUBLE_EQ(x_iou({0, 0, 10, 10}, disjoint), 0.0);
    std::vector<BoundingBox> two{{5, 0, 15, 10}, {0, 0, 10, 5}};
    EXPECT_DOUBLE_EQ(x_iou({0, 0, 10, 10}, two), 0.5);
    EXPECT_THROW(x_iou({0, 0, 1, 1}, {}), EmptyGroundTruth);
}

TEST(XIou, DominatesEveryMemberAndIsAttained) {
    std::mt19937_64 rng(11);
    for (int i = 0; i < 100; ++i) {
        auto pred = random_box(rng, 50);
        std::vector<BoundingBox> gt(1 + rng() % 6);
        for (auto& g : gt) {
            g = random_box(rng, 50);
        }
        double x = x_iou(pred, gt);
        bool attained = false;
        for (const auto& g : gt) {
            EXPECT_GE(x, iou(pred, g));
            attained = attained || x == iou(pred, g);
        }
        EXPECT_TRUE(attained);
    }
}

TEST(ScoreSgr, AllConditionsSatisfied) {
    auto inst = spatial("a", ScenarioCategory::PersonGR);
    auto out = score_sgr(inst, pred_for("a", 3.0, {{EntityKind::Person, box_with_iou(0.6)}}), ThresholdConfig{});
    EXPECT_TRUE(out.time_ok);
    EXPECT_NEAR(out.per_entity_iou.at(EntityKind::Person), 0.6, 1e-12);
    EXPECT_TRUE(out.acc_at.at(0.5));
    EXPECT_TRUE(out.acc_at.at(0.25));
}

TEST(ScoreSgr, TimeOutsideIntervalFailsEveryThreshold) {
    auto inst = spatial("a", ScenarioCategory::PersonGR);
    auto out = score_sgr(inst, pred_for("a", 6.0, {{EntityKind::Person, {0, 0, 100, 100}}}), ThresholdConfig{});
    EXPECT_FALSE(out.time_ok);
    EXPECT_TRUE(out.pass_at.at(0.5).at(EntityKind::Person));
    for (const auto& [tau, ok] : out.acc_at) {
        EXPECT_FALSE(ok) << tau;
    }
}

TEST(ScoreSgr, ConjunctionOverRequiredEntities) {
    auto inst = spatial("a", ScenarioCategory::PersonObjectCoGR);
    auto out = score_sgr(inst,
                         pred_for("a", 3.0,
                                  {{EntityKind::Person, box_with_iou(0.3)}, {EntityKind::Object, box_with_iou(0.2)}}),
                         ThresholdConfig{});
    EXPECT_TRUE(out.time_ok);
    EXPECT_TRUE(out.pass_at.at(0.25).at(EntityKind::Person));
    EXPECT_FALSE(out.pass_at.at(0.25).at(EntityKind::Object));
    EXPECT_FALSE(out.acc_at.at(0.25));
}

TEST(ScoreSgr, InclusiveIntervalAndMissingPieces) {
    auto inst = spatial("a", ScenarioCategory::PersonGR);
    EXPECT_TRUE(score_sgr(inst, pred_for("a", 2.0), ThresholdConfig{}).time_ok);
    EXPECT_TRUE(score_sgr(inst, pred_for("a", 5.0), ThresholdConfig{}).time_ok);
    auto missing_box = score_sgr(inst, pred_for("a", 3.0), ThresholdConfig{});
    EXPECT_EQ(missing_box.per_entity_iou.at(EntityKind::Person), 0.0);
    EXPECT_FALSE(missing_box.acc_at.at(0.25));
    Prediction no_time = pred_for("a", 0.0, {{EntityKind::Person, {0, 0, 100, 100}}});
    no_time.time.reset();
    EXPECT_FALSE(score_sgr(inst, no_time, ThresholdConfig{}).time_ok);
}

TEST(ScoreSgr, RejectsTemporalInstance) {
    EXPECT_THROW(score_sgr(temporal("t", 3.0), pred_for("t", 3.0), ThresholdConfig{}), CategoryMismatch);
    EXPECT_THROW(score_tgr(spatial("s", ScenarioCategory::ObjectGR), pred_for("s", 3.0), ThresholdConfig{}),
                 CategoryMismatch);
}

TEST(ScoreTgr, Examples) {
    auto inst = temporal("t", 10.0);
    auto exact = pred_for("t", 10.0);
    exact.action_label = "opening the door";
    auto out = score_tgr(inst, exact, ThresholdConfig{});
    EXPECT_EQ(out.abs_dev, 0.0);
    for (double d : {2.0, 4.0, 6.0}) {
        EXPECT_TRUE(out.correct_at.at(d));
    }

    auto two = pred_for("t", 12.0);
    two.action_label = "Opening the door.";
    out = score_tgr(inst, two, ThresholdConfig{});
    EXPECT_EQ(out.abs_dev, 2.0);
    EXPECT_TRUE(out.correct_at.at(2.0));

    auto wrong = pred_for("t", 10.0);
    wrong.action_label = "closing the door";
    out = score_tgr(inst, wrong, ThresholdConfig{});
    EXPECT_FALSE(out.action_ok);
    for (const auto& [d, ok] : out.correct_at) {
        EXPECT_FALSE(ok);
        EXPECT_TRUE(out.within_at.at(d));
    }
}

TEST(ScoreTgr, MissingFieldsRaise) {
    auto inst = temporal("t", 10.0);
    EXPECT_THROW(score_tgr(inst, pred_for("t", 10.0), ThresholdConfig{}), MissingField);
    auto no_time = pred_for("t", 10.0);
    no_time.action_label = "x";
    no_time.time.reset();
    EXPECT_THROW(score_tgr(inst, no_time, ThresholdConfig{}), MissingField);
}

TEST(ScoreTgr, PluggableMatcher) {
    auto inst = temporal("t", 10.0);
    auto p = pred_for("t", 10.0);
    p.action_label = "someone opens a door";
    EXPECT_FALSE(score_tgr(inst, p, ThresholdConfig{}).action_ok);
    auto always = [](std::string_view, std::string_view) { return true; };
    EXPECT_TRUE(score_tgr(inst, p, ThresholdConfig{}, always).action_ok);
}

TEST(ActionMatch, Examples) {
    EXPECT_TRUE(action_match("Opening the door.", "opening the door"));
    EXPECT_FALSE(action_match("closing door", "opening door"));
    EXPECT_TRUE(action_match(" drinking  coffee ", "drinking coffee"));
    EXPECT_EQ(normalize_action_label("  Drinking\tCOFFEE!? "), "drinking coffee");
}

TEST(Mad, Examples) {
    auto with = [](std::vector<double> devs) {
        std::vector<TgrOutcome> v;
        for (double d : devs) {
            TgrOutcome o;
            o.abs_dev = d;
            v.push_back(o);
        }
        return v;
    };
    EXPECT_EQ(mad(with({0, 0, 0})), 0.0);
    EXPECT_NEAR(mad(with({2, 0, 2})), 4.0 / 3.0, 1e-12);
    EXPECT_EQ(mad(with({7.5})), 7.5);
    EXPECT_THROW(mad(with({})), EmptyInput);
}

TEST(Thresholds, ValidateSortsAndRejects) {
    ThresholdConfig cfg{{0.5, 0.25, 0.5}, {6, 2, 4}};
    cfg.validate();
    EXPECT_EQ(cfg.iou_thresholds, (std::vector<double>{0.25, 0.5}));
    EXPECT_EQ(cfg.temporal_windows, (std::vector<double>{2, 4, 6}));
    ThresholdConfig bad{{0.0}, {2}};
    EXPECT_THROW(bad.validate(), std::invalid_argument);
    ThresholdConfig bad2{{0.5}, {-1}};
    EXPECT_THROW(bad2.validate(), std::invalid_argument);
}

TEST(Aggregate, TwoOfThreePersonInstances) {
    std::vector<TestInstance> insts{spatial("a", ScenarioCategory::PersonGR), spatial("b", ScenarioCategory::PersonGR),
                                    spatial("c", ScenarioCategory::PersonGR)};
    std::map<std::string, Prediction> preds{
        {"a", pred_for("a", 3.0, {{EntityKind::Person, {0, 0, 100, 100}}})},
        {"b", pred_for("b", 3.0, {{EntityKind::Person, {0, 0, 100, 100}}})},
        {"c", pred_for("c", 3.0, {{EntityKind::Person, {0, 0, 10, 100}}})},
    };
    auto reports = aggregate(insts, preds, ThresholdConfig{});
    ASSERT_EQ(reports.size(), 1u);
    EXPECT_NEAR(reports[0].acc.at(0.25), 200.0 / 3.0, 1e-9);
    EXPECT_EQ(oracle::one_decimal(reports[0].acc.at(0.25)), "66.7");
    EXPECT_EQ(reports[0].t_acc, 100.0);
}

TEST(Aggregate, AllMissing) {
    auto fx = generate_fixture(SyntheticSpec::uniform(5, 5));
    auto reports = aggregate(fx.instances, {}, ThresholdConfig{});
    ASSERT_EQ(reports.size(), 5u);
    for (const auto& r : reports) {
        EXPECT_EQ(r.n_missing, 5);
        EXPECT_EQ(r.n_scored, 0);
        EXPECT_EQ(r.t_acc, 0.0);
        EXPECT_EQ(r.action_acc, 0.0);
        EXPECT_FALSE(r.mad.has_value());
        for (const auto& [tau, v] : r.acc) {
            EXPECT_EQ(v, 0.0);
        }
        for (const auto& [d, v] : r.acc_by_window) {
            EXPECT_EQ(v.first, 0.0);
            EXPECT_EQ(v.second, 0.0);
        }
    }
}

TEST(Aggregate, FixedCategoryOrder) {
    auto fx = generate_fixture(SyntheticSpec::uniform(5, 9));
    std::reverse(fx.instances.begin(), fx.instances.end());
    auto reports = aggregate(fx.instances, {}, ThresholdConfig{});
    ASSERT_EQ(reports.size(), kAllCategories.size());
    for (std::size_t i = 0; i < reports.size(); ++i) {
        EXPECT_EQ(reports[i].category, kAllCategories[i]);
    }
}

TEST(Aggregate, TemporalMissingFieldScoresWrong) {
    std::vector<TestInstance> insts{temporal("t1", 10.0), temporal("t2", 10.0)};
    auto good = pred_for("t1", 11.0);
    good.action_label = "opening the door";
    std::map<std::string, Prediction> preds{{"t1", good}, {"t2", pred_for("t2", 10.0)}};
    auto r = aggregate(insts, preds, ThresholdConfig{}).at(0);
    EXPECT_EQ(r.action_acc, 50.0);
    ASSERT_TRUE(r.mad.has_value());
    EXPECT_EQ(*r.mad, 1.0);
    EXPECT_EQ(r.acc_by_window.at(2.0).second, 50.0);
}

// Mixed categories against an independent recount, across several seeds.
TEST(Aggregate, MatchesBruteForceRecount) {
    ThresholdConfig cfg;
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        auto spec = SyntheticSpec::uniform(5, seed);
        auto fx = generate_fixture(spec);
        fx.predictions.erase(fx.predictions.begin() + 3);  // one missing
        std::map<std::string, Prediction> idx;
        for (const auto& p : fx.predictions) {
            idx[p.instance_id] = p;
        }
        auto reports = aggregate(fx.instances, idx, cfg);
        auto want = oracle::naive_rescore(fx.instances, fx.predictions, cfg.iou_thresholds, cfg.temporal_windows);
        for (const auto& r : reports) {
            const auto& row = want.at(std::string(to_label(r.category)));
            EXPECT_EQ(std::to_string(r.total()), row.at("N"));
            EXPECT_EQ(std::to_string(r.n_missing), row.at("Missing"));
            if (is_spatial(r.category)) {
                EXPECT_EQ(oracle::one_decimal(r.t_acc), row.at("T/Acc."));
                EXPECT_EQ(oracle::one_decimal(r.acc.at(0.25)), row.at("Acc@0.25"));
                EXPECT_EQ(oracle::one_decimal(r.acc.at(0.5)), row.at("Acc@0.5"));
            } else {
                EXPECT_EQ(oracle::one_decimal(r.action_acc), row.at("A/Acc."));
                EXPECT_EQ(oracle::one_decimal(r.mad.value()), row.at("MAD"));
                EXPECT_EQ(oracle::one_decimal(r.acc_by_window.at(4.0).second), row.at("Acc@4s"));
                EXPECT_EQ(oracle::one_decimal(r.acc_by_window.at(6.0).first), row.at("Time Acc@6s"));
            }
        }
    }
}

TEST(Aggregate, PermutationInvariantAndWorkerIndependent) {
    auto fx = generate_fixture(SyntheticSpec::uniform(10, 21));
    std::map<std::string, Prediction> idx;
    for (const auto& p : fx.predictions) {
        idx[p.instance_id] = p;
    }
    auto base = aggregate(fx.instances, idx, ThresholdConfig{});
    std::mt19937_64 rng(3);
    for (int i = 0; i < 5; ++i) {
        std::shuffle(fx.instances.begin(), fx.instances.end(), rng);
        for (unsigned workers : {1u, 3u}) {
            auto r = aggregate(fx.instances, idx, ThresholdConfig{}, action_match, workers);
            ASSERT_EQ(r.size(), base.size());
            for (std::size_t c = 0; c < r.size(); ++c) {
                EXPECT_EQ(r[c].t_acc, base[c].t_acc);
                EXPECT_EQ(r[c].acc, base[c].acc);
                EXPECT_EQ(r[c].per_entity_rate, base[c].per_entity_rate);
                EXPECT_EQ(r[c].action_acc, base[c].action_acc);
                EXPECT_EQ(r[c].mad, base[c].mad);
                EXPECT_EQ(r[c].acc_by_window, base[c].acc_by_window);
            }
        }
    }
}

// Conjunction and threshold ordering properties over random predictions.
TEST(Aggregate, MonotonicityAndConjunctionBounds) {
    std::mt19937_64 rng(99);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        auto fx = generate_fixture(SyntheticSpec::uniform(10, seed));
        std::map<std::string, Prediction> idx;
        for (auto p : fx.predictions) {
            for (auto& [kind, box] : p.boxes) {
                double dx = std::uniform_real_distribution<double>(-60, 60)(rng);
                box.x_min = std::max(0.0, box.x_min + dx);
                box.x_max = std::max(box.x_min, box.x_max + dx);
            }
            idx[p.instance_id] = p;
        }
        for (const auto& r : aggregate(fx.instances, idx, ThresholdConfig{})) {
            if (is_spatial(r.category)) {
                EXPECT_LE(r.acc.at(0.5), r.acc.at(0.25));
                for (const auto& [tau, acc] : r.acc) {
                    EXPECT_LE(acc, r.t_acc);
                    for (const auto& [kind, rate] : r.per_entity_rate.at(tau)) {
                        EXPECT_LE(acc, rate);
                    }
                }
            } else {
                EXPECT_LE(r.acc_by_window.at(2.0).second, r.acc_by_window.at(4.0).second);
                EXPECT_LE(r.acc_by_window.at(4.0).second, r.acc_by_window.at(6.0).second);
                EXPECT_LE(r.acc_by_window.at(2.0).first, r.acc_by_window.at(4.0).first);
                EXPECT_LE(r.acc_by_window.at(4.0).first, r.acc_by_window.at(6.0).first);
            }
        }
    }
}

TEST(Aggregate, ZeroDeviationMadIsZero) {
    std::vector<TestInstance> insts;
    std::map<std::string, Prediction> preds;
    for (int i = 0; i < 4; ++i) {
        auto id = "t" + std::to_string(i);
        insts.push_back(temporal(id, 1.5 * i));
        auto p = pred_for(id, 1.5 * i);
        p.action_label = "opening the door";
        preds[id] = p;
    }
    EXPECT_EQ(aggregate(insts, preds, ThresholdConfig{}).at(0).mad.value(), 0.0);
}
