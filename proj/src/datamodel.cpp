// Copyright (C) 2026 The gramkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "gramkit/datamodel.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <system_error>

#include "json.hpp"

namespace gramkit {

using nlohmann::json;

namespace {

constexpr double kPixelSlack = 0.5;

constexpr std::array<EntityKind, 1> kPersonOnly = {EntityKind::Person};
constexpr std::array<EntityKind, 1> kObjectOnly = {EntityKind::Object};
constexpr std::array<EntityKind, 2> kPersonObject = {EntityKind::Person, EntityKind::Object};
constexpr std::array<EntityKind, 3> kHandsObject = {EntityKind::LeftHand, EntityKind::RightHand,
                                                    EntityKind::Object};

int line_of_offset(std::string_view text, std::size_t offset) {
    offset = std::min(offset, text.size());
    return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(offset), '\n'));
}

// Field accessors that report the JSON path on type errors.
class Reader {
public:
    Reader(const json& node, std::string where) : m_node(node), m_where(std::move(where)) {}

    const json& at(const std::string& key) const {
        if (!m_node.is_object()) {
            fail("expected an object");
        }
        auto it = m_node.find(key);
        if (it == m_node.end()) {
            fail("missing field '" + key + "'");
        }
        return *it;
    }
    bool has(const std::string& key) const {
        return m_node.is_object() && m_node.contains(key) && !m_node.at(key).is_null();
    }
    std::string string(const std::string& key) const {
        const json& v = at(key);
        if (!v.is_string()) {
            fail_field(key, "expected a string");
        }
        return v.get<std::string>();
    }
    double number(const std::string& key) const { return as_number(at(key), key); }
    int integer(const std::string& key) const {
        const json& v = at(key);
        if (!v.is_number_integer()) {
            fail_field(key, "expected an integer");
        }
        return v.get<int>();
    }
    const json& array(const std::string& key) const {
        const json& v = at(key);
        if (!v.is_array()) {
            fail_field(key, "expected a list");
        }
        return v;
    }
    double as_number(const json& v, const std::string& key) const {
        if (!v.is_number()) {
            fail_field(key, "expected a number");
        }
        return v.get<double>();
    }
    Reader child(const std::string& key) const { return Reader(at(key), m_where + "." + key); }
    Reader element(const json& node, const std::string& key, std::size_t i) const {
        return Reader(node, m_where + "." + key + "[" + std::to_string(i) + "]");
    }
    const std::string& where() const { return m_where; }

    [[noreturn]] void fail(const std::string& what) const { throw ParseError(m_where, what); }
    [[noreturn]] void fail_field(const std::string& key, const std::string& what) const {
        throw ParseError(m_where + "." + key, what);
    }

private:
    const json& m_node;
    std::string m_where;
};

std::array<double, 4> read_quad(const Reader& r, const json& v, const std::string& key) {
    if (!v.is_array() || v.size() != 4) {
        r.fail_field(key, "expected [x_min, y_min, x_max, y_max]");
    }
    std::array<double, 4> out{};
    for (std::size_t i = 0; i < 4; ++i) {
        out[i] = r.as_number(v[i], key);
    }
    return out;
}

BoundingBox to_box(const std::array<double, 4>& q) { return {q[0], q[1], q[2], q[3]}; }

json box_json(const BoundingBox& b) { return json::array({b.x_min, b.y_min, b.x_max, b.y_max}); }

TimeInterval read_interval(const Reader& r, const json& v, const std::string& key) {
    if (!v.is_array() || v.size() != 2) {
        r.fail_field(key, "expected [start, end]");
    }
    return {r.as_number(v[0], key), r.as_number(v[1], key)};
}

TestInstance read_instance(const json& node, const std::string& where) {
    Reader r(node, where);
    TestInstance inst;
    inst.id = r.string("id");
    auto category = parse_category(r.string("category"));
    if (!category) {
        r.fail_field("category", "unknown category '" + r.string("category") + "'");
    }
    inst.category = *category;

    Reader video = r.child("video");
    inst.video.path = video.string("path");
    inst.video.fps = video.number("fps");
    inst.video.width = video.integer("width");
    inst.video.height = video.integer("height");
    inst.video.n_frames = video.integer("n_frames");

    inst.question = r.string("question");
    inst.action_label = r.string("action_label");
    inst.action_interval = read_interval(r, r.at("action_interval"), "action_interval");

    const json& tracks = r.array("tracks");
    for (std::size_t i = 0; i < tracks.size(); ++i) {
        Reader tr = r.element(tracks[i], "tracks", i);
        EntityTrack track;
        auto kind = parse_entity_kind(tr.string("kind"));
        if (!kind) {
            tr.fail_field("kind", "unknown entity kind '" + tr.string("kind") + "'");
        }
        track.kind = *kind;
        const json& boxes = tr.array("boxes");
        for (std::size_t j = 0; j < boxes.size(); ++j) {
            Reader br = tr.element(boxes[j], "boxes", j);
            TimedBox tb;
            tb.timestamp_s = br.number("t");
            tb.box = to_box(read_quad(br, br.at("box"), "box"));
            track.boxes.push_back(tb);
        }
        inst.tracks.push_back(std::move(track));
    }
    return inst;
}

json instance_json(const TestInstance& inst) {
    json tracks = json::array();
    for (const auto& track : inst.tracks) {
        json boxes = json::array();
        for (const auto& tb : track.boxes) {
            boxes.push_back({{"t", tb.timestamp_s}, {"box", box_json(tb.box)}});
        }
        tracks.push_back({{"kind", std::string(to_label(track.kind))}, {"boxes", std::move(boxes)}});
    }
    json out;
    out["id"] = inst.id;
    out["category"] = std::string(to_label(inst.category));
    out["video"] = {{"path", inst.video.path},
                    {"fps", inst.video.fps},
                    {"width", inst.video.width},
                    {"height", inst.video.height},
                    {"n_frames", inst.video.n_frames}};
    out["question"] = inst.question;
    out["action_label"] = inst.action_label;
    out["action_interval"] = json::array({inst.action_interval.start_s, inst.action_interval.end_s});
    out["tracks"] = std::move(tracks);
    return out;
}

Prediction read_prediction(const json& node, const std::string& where) {
    Reader r(node, where);
    Prediction pred;
    pred.instance_id = r.string("instance_id");
    if (r.has("answer_text")) {
        pred.answer_text = r.string("answer_text");
    }
    if (r.has("boxes")) {
        Reader boxes = r.child("boxes");
        const json& obj = r.at("boxes");
        if (!obj.is_object()) {
            r.fail_field("boxes", "expected an object keyed by entity kind");
        }
        for (const auto& [label, value] : obj.items()) {
            auto kind = parse_entity_kind(label);
            if (!kind) {
                throw SchemaError(pred.instance_id, "boxes." + label, "unknown entity kind");
            }
            BoundingBox box = to_box(read_quad(boxes, value, label));
            if (!box.valid()) {
                throw SchemaError(pred.instance_id, "boxes." + label,
                                  "box must satisfy 0 <= x_min <= x_max and 0 <= y_min <= y_max");
            }
            pred.boxes[*kind] = box;
        }
    }
    if (r.has("time")) {
        Reader time = r.child("time");
        const json& obj = r.at("time");
        if (obj.is_object() && obj.contains("point")) {
            double t = time.number("point");
            if (t < 0.0) {
                throw SchemaError(pred.instance_id, "time.point", "negative time");
            }
            pred.time = TimePoint{t};
        } else if (obj.is_object() && obj.contains("interval")) {
            TimeInterval iv = read_interval(time, obj.at("interval"), "interval");
            if (!iv.valid()) {
                throw SchemaError(pred.instance_id, "time.interval",
                                  "interval must satisfy 0 <= start <= end");
            }
            pred.time = iv;
        } else {
            r.fail_field("time", "expected {\"point\": s} or {\"interval\": [a, b]}");
        }
    }
    if (r.has("action_label")) {
        pred.action_label = r.string("action_label");
    }
    return pred;
}

json prediction_json(const Prediction& pred) {
    json out;
    out["instance_id"] = pred.instance_id;
    out["answer_text"] = pred.answer_text;
    json boxes = json::object();
    for (const auto& [kind, box] : pred.boxes) {
        boxes[std::string(to_label(kind))] = box_json(box);
    }
    out["boxes"] = std::move(boxes);
    if (pred.time) {
        if (const auto* p = std::get_if<TimePoint>(&*pred.time)) {
            out["time"] = {{"point", p->seconds}};
        } else {
            const auto& iv = std::get<TimeInterval>(*pred.time);
            out["time"] = {{"interval", json::array({iv.start_s, iv.end_s})}};
        }
    } else {
        out["time"] = nullptr;
    }
    out["action_label"] = pred.action_label ? json(*pred.action_label) : json(nullptr);
    return out;
}

}  // namespace

std::string_view to_label(EntityKind kind) {
    switch (kind) {
    case EntityKind::Person: return "P";
    case EntityKind::Object: return "O";
    case EntityKind::LeftHand: return "LH";
    case EntityKind::RightHand: return "RH";
    }
    return "?";
}

std::optional<EntityKind> parse_entity_kind(std::string_view label) {
    for (EntityKind kind : kAllEntityKinds) {
        if (to_label(kind) == label) {
            return kind;
        }
    }
    return std::nullopt;
}

std::string_view to_label(ScenarioCategory category) {
    switch (category) {
    case ScenarioCategory::PersonGR: return "person_gr";
    case ScenarioCategory::ObjectGR: return "object_gr";
    case ScenarioCategory::PersonObjectCoGR: return "person_object_gr";
    case ScenarioCategory::HandObjectCoGR: return "hand_object_gr";
    case ScenarioCategory::TemporalGR: return "temporal_gr";
    }
    return "?";
}

std::optional<ScenarioCategory> parse_category(std::string_view label) {
    for (ScenarioCategory c : kAllCategories) {
        if (to_label(c) == label) {
            return c;
        }
    }
    return std::nullopt;
}

std::span<const EntityKind> required_kinds(ScenarioCategory category) {
    switch (category) {
    case ScenarioCategory::PersonGR: return kPersonOnly;
    case ScenarioCategory::ObjectGR: return kObjectOnly;
    case ScenarioCategory::PersonObjectCoGR: return kPersonObject;
    case ScenarioCategory::HandObjectCoGR: return kHandsObject;
    case ScenarioCategory::TemporalGR: return {};
    }
    return {};
}

const EntityTrack* TestInstance::track(EntityKind kind) const {
    for (const auto& t : tracks) {
        if (t.kind == kind) {
            return &t;
        }
    }
    return nullptr;
}

void validate(const TestInstance& inst) {
    const std::string& id = inst.id;
    if (id.empty()) {
        throw SchemaError(id, "id", "empty id");
    }
    if (!(inst.video.fps > 0.0)) {
        throw SchemaError(id, "video.fps", "fps must be positive");
    }
    if (inst.video.n_frames < 1) {
        throw SchemaError(id, "video.n_frames", "n_frames must be at least 1");
    }
    if (inst.video.width < 1 || inst.video.height < 1) {
        throw SchemaError(id, "video", "width and height must be positive");
    }
    if (!inst.action_interval.valid()) {
        throw SchemaError(id, "action_interval", "interval must satisfy 0 <= start <= end");
    }

    std::span<const EntityKind> required = required_kinds(inst.category);
    std::multiset<EntityKind> have;
    for (const auto& t : inst.tracks) {
        have.insert(t.kind);
    }
    std::multiset<EntityKind> want(required.begin(), required.end());
    if (have != want) {
        std::string expected;
        for (EntityKind k : required) {
            expected += (expected.empty() ? "" : ",") + std::string(to_label(k));
        }
        throw SchemaError(id, "tracks",
                          "category " + std::string(to_label(inst.category)) +
                              " requires exactly the entity kinds {" + expected + "}, each once");
    }

    const double w = inst.video.width + kPixelSlack;
    const double h = inst.video.height + kPixelSlack;
    for (const auto& track : inst.tracks) {
        const std::string field = "tracks[" + std::string(to_label(track.kind)) + "]";
        if (track.boxes.empty()) {
            throw SchemaError(id, field + ".boxes", "track needs at least one box");
        }
        for (std::size_t j = 0; j < track.boxes.size(); ++j) {
            const TimedBox& tb = track.boxes[j];
            const std::string bf = field + ".boxes[" + std::to_string(j) + "]";
            if (!inst.action_interval.contains(tb.timestamp_s)) {
                throw SchemaError(id, bf + ".t", "timestamp outside the action interval");
            }
            if (j > 0 && !(tb.timestamp_s > track.boxes[j - 1].timestamp_s)) {
                throw SchemaError(id, bf + ".t", "timestamps must be strictly increasing");
            }
            if (!tb.box.valid()) {
                throw SchemaError(id, bf + ".box",
                                  "box must satisfy 0 <= x_min <= x_max and 0 <= y_min <= y_max");
            }
            if (tb.box.x_max > w || tb.box.y_max > h) {
                throw SchemaError(id, bf + ".box", "box exceeds the video resolution");
            }
        }
    }
}

double normalize_time(const Prediction& pred) {
    if (!pred.time) {
        throw MissingTime("prediction for '" + pred.instance_id + "' has no time");
    }
    if (const auto* p = std::get_if<TimePoint>(&*pred.time)) {
        return p->seconds;
    }
    return std::get<TimeInterval>(*pred.time).midpoint();
}

std::vector<TestInstance> parse_benchmark(std::string_view text, const std::string& source) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(source + ":" + std::to_string(line_of_offset(text, e.byte)), e.what());
    }
    if (!doc.is_array()) {
        throw ParseError(source + ":1", "benchmark document must be a list of instance records");
    }
    std::vector<TestInstance> out;
    out.reserve(doc.size());
    std::set<std::string> seen;
    for (std::size_t i = 0; i < doc.size(); ++i) {
        TestInstance inst = read_instance(doc[i], source + ": [" + std::to_string(i) + "]");
        validate(inst);
        if (!seen.insert(inst.id).second) {
            throw SchemaError(inst.id, "id", "duplicate instance id");
        }
        out.push_back(std::move(inst));
    }
    return out;
}

std::vector<TestInstance> load_benchmark(const std::filesystem::path& path) {
    return parse_benchmark(read_file(path), path.string());
}

std::string dump_benchmark(std::span<const TestInstance> instances) {
    json doc = json::array();
    for (const auto& inst : instances) {
        doc.push_back(instance_json(inst));
    }
    return doc.dump(2) + "\n";
}

void save_benchmark(const std::filesystem::path& path, std::span<const TestInstance> instances) {
    write_file_atomic(path, dump_benchmark(instances));
}

std::vector<Prediction> parse_predictions(std::string_view text, const std::string& source) {
    std::vector<Prediction> out;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos) {
            end = text.size();
        }
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string_view::npos) {
            continue;
        }
        const std::string where = source + ":" + std::to_string(line_no);
        json record;
        try {
            record = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError(where, e.what());
        }
        out.push_back(read_prediction(record, where));
    }
    return out;
}

std::vector<Prediction> load_predictions(const std::filesystem::path& path) {
    return parse_predictions(read_file(path), path.string());
}

std::string dump_predictions(std::span<const Prediction> predictions) {
    std::string out;
    for (const auto& p : predictions) {
        out += prediction_json(p).dump();
        out += '\n';
    }
    return out;
}

void save_predictions(const std::filesystem::path& path, std::span<const Prediction> predictions) {
    write_file_atomic(path, dump_predictions(predictions));
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ParseError(path.string(), "cannot open file");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw std::runtime_error("cannot write " + tmp.string());
        }
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) {
            throw std::runtime_error("short write to " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace gramkit
