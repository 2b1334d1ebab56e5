// Copyright (C) 2026 The gramkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string_view>
#include <vector>

#include "gramkit/datamodel.hpp"
#include "gramkit/metrics.hpp"
#include "gramkit/toyvlm.hpp"

namespace gramkit {

/// Target fractions for one spatial category. `entity_pass[tau]` is the
/// fraction whose every required entity reaches tau; when a tau is absent it
/// defaults to `acc[tau]`.
struct SpatialTargets {
    double t_acc = 0.6;
    std::map<double, double> entity_pass;
    std::map<double, double> acc{{0.25, 0.4}, {0.5, 0.2}};
};

struct TemporalTargets {
    double action_acc = 0.6;
    std::map<double, double> within{{2.0, 0.4}, {4.0, 0.6}, {6.0, 0.8}};
    std::map<double, double> acc{{2.0, 0.2}, {4.0, 0.4}, {6.0, 0.6}};
};

/// Recipe for a benchmark + prediction pair with exactly known scores.
struct SyntheticSpec {
    std::uint64_t seed = 0;
    std::map<ScenarioCategory, int> counts;
    SpatialTargets spatial;
    std::map<ScenarioCategory, SpatialTargets> spatial_overrides;
    TemporalTargets temporal;
    /// Thresholds the targets are expressed in.
    ThresholdConfig thresholds;

    /// 5 instances in every category with default targets.
    static SyntheticSpec uniform(int per_category, std::uint64_t seed);
    const SpatialTargets& targets_for(ScenarioCategory category) const;
    /// Throws std::invalid_argument when counts or fractions are inconsistent.
    void validate() const;

    static SyntheticSpec from_json(std::string_view text);
};

struct SyntheticFixture {
    std::vector<TestInstance> instances;
    std::vector<Prediction> predictions;
};

SyntheticFixture generate_fixture(const SyntheticSpec& spec);

/// Gradient and checkerboard frames keyed by seed, values in [0, 1].
std::vector<vlm::Frame> make_synthetic_frames(const VideoRef& video, std::uint64_t seed);

/// Small deterministic helper built on the raw engine output.
class FixtureRng {
public:
    explicit FixtureRng(std::uint64_t seed) : m_engine(seed) {}
    std::uint64_t next() { return m_engine(); }
    /// Uniform integer in [0, bound).
    std::uint64_t below(std::uint64_t bound) { return m_engine() % bound; }
    double unit() { return static_cast<double>(m_engine() >> 11) * 0x1.0p-53; }
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[below(i)]);
        }
    }

private:
    std::mt19937_64 m_engine;
};

}  // namespace gramkit
