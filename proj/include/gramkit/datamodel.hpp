// Copyright (C) 2026 The gramkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace gramkit {

/// Raised when a document is not well-formed. `where()` carries a
/// "file:line" or "file:line: field" location string.
class ParseError : public std::runtime_error {
public:
    ParseError(std::string where, const std::string& what)
        : std::runtime_error(where + ": " + what), m_where(std::move(where)) {}
    const std::string& where() const noexcept { return m_where; }

private:
    std::string m_where;
};

/// Raised when a well-formed document violates a schema invariant.
class SchemaError : public std::runtime_error {
public:
    SchemaError(std::string instance_id, std::string field, const std::string& what)
        : std::runtime_error("instance '" + instance_id + "', field '" + field + "': " + what),
          m_instance_id(std::move(instance_id)),
          m_field(std::move(field)) {}
    const std::string& instance_id() const noexcept { return m_instance_id; }
    const std::string& field() const noexcept { return m_field; }

private:
    std::string m_instance_id;
    std::string m_field;
};

class MissingTime : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Axis-aligned box in absolute pixel coordinates.
struct BoundingBox {
    double x_min = 0.0;
    double y_min = 0.0;
    double x_max = 0.0;
    double y_max = 0.0;

    bool valid() const {
        return x_min >= 0.0 && y_min >= 0.0 && x_min <= x_max && y_min <= y_max;
    }
    double width() const { return x_max - x_min; }
    double height() const { return y_max - y_min; }
    double area() const { return width() * height(); }

    bool operator==(const BoundingBox&) const = default;
};

struct TimeInterval {
    double start_s = 0.0;
    double end_s = 0.0;

    bool valid() const { return start_s >= 0.0 && start_s <= end_s; }
    /// Closed-interval membership.
    bool contains(double t) const { return t >= start_s && t <= end_s; }
    double midpoint() const { return (start_s + end_s) / 2.0; }

    bool operator==(const TimeInterval&) const = default;
};

struct TimePoint {
    double seconds = 0.0;
    bool operator==(const TimePoint&) const = default;
};

using PredictedTime = std::variant<TimePoint, TimeInterval>;

enum class EntityKind { Person, Object, LeftHand, RightHand };

inline constexpr std::array<EntityKind, 4> kAllEntityKinds = {
    EntityKind::Person, EntityKind::Object, EntityKind::LeftHand, EntityKind::RightHand};

std::string_view to_label(EntityKind kind);
std::optional<EntityKind> parse_entity_kind(std::string_view label);

enum class ScenarioCategory { PersonGR, ObjectGR, PersonObjectCoGR, HandObjectCoGR, TemporalGR };

inline constexpr std::array<ScenarioCategory, 5> kAllCategories = {
    ScenarioCategory::PersonGR, ScenarioCategory::ObjectGR, ScenarioCategory::PersonObjectCoGR,
    ScenarioCategory::HandObjectCoGR, ScenarioCategory::TemporalGR};

std::string_view to_label(ScenarioCategory category);
std::optional<ScenarioCategory> parse_category(std::string_view label);

/// Entity kinds a category must carry, in canonical (report column) order.
std::span<const EntityKind> required_kinds(ScenarioCategory category);

inline bool is_spatial(ScenarioCategory category) {
    return category != ScenarioCategory::TemporalGR;
}

struct TimedBox {
    double timestamp_s = 0.0;
    BoundingBox box;
    bool operator==(const TimedBox&) const = default;
};

struct EntityTrack {
    EntityKind kind = EntityKind::Person;
    std::vector<TimedBox> boxes;
    bool operator==(const EntityTrack&) const = default;
};

/// Metadata only; frames are never decoded from `path`.
struct VideoRef {
    std::string path;
    double fps = 1.0;
    int width = 0;
    int height = 0;
    int n_frames = 1;
    bool operator==(const VideoRef&) const = default;
};

struct TestInstance {
    std::string id;
    ScenarioCategory category = ScenarioCategory::PersonGR;
    VideoRef video;
    std::string question;
    std::string action_label;
    TimeInterval action_interval;
    std::vector<EntityTrack> tracks;

    const EntityTrack* track(EntityKind kind) const;
    bool operator==(const TestInstance&) const = default;
};

struct Prediction {
    std::string instance_id;
    std::string answer_text;
    std::map<EntityKind, BoundingBox> boxes;
    std::optional<PredictedTime> time;
    std::optional<std::string> action_label;
    bool operator==(const Prediction&) const = default;
};

/// Throws SchemaError naming the instance id and offending field.
void validate(const TestInstance& instance);

/// Point prediction as-is; interval predictions collapse to their midpoint.
double normalize_time(const Prediction& pred);

// Benchmark documents: a single JSON list of instance records.
std::vector<TestInstance> parse_benchmark(std::string_view text, const std::string& source = "<memory>");
std::vector<TestInstance> load_benchmark(const std::filesystem::path& path);
std::string dump_benchmark(std::span<const TestInstance> instances);
void save_benchmark(const std::filesystem::path& path, std::span<const TestInstance> instances);

// Prediction files: one JSON record per line.
std::vector<Prediction> parse_predictions(std::string_view text, const std::string& source = "<memory>");
std::vector<Prediction> load_predictions(const std::filesystem::path& path);
std::string dump_predictions(std::span<const Prediction> predictions);
void save_predictions(const std::filesystem::path& path, std::span<const Prediction> predictions);

/// Writes to a sibling temp file then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);
std::string read_file(const std::filesystem::path& path);

}  // namespace gramkit
