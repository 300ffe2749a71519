#include "exsearch/jsonl.hpp"

#include <fstream>
#include <initializer_list>

namespace exsearch {
namespace {

using nlohmann::json;

const json& require(const json& j, const char* field, std::size_t line) {
    auto it = j.find(field);
    if (it == j.end()) throw SchemaError(line, field, std::string("missing required field \"") + field + "\"");
    return *it;
}

std::string require_string(const json& j, const char* field, std::size_t line) {
    const json& v = require(j, field, line);
    if (!v.is_string()) throw SchemaError(line, field, std::string("field \"") + field + "\" must be a string");
    return v.get<std::string>();
}

double require_number(const json& j, const char* field, std::size_t line) {
    const json& v = require(j, field, line);
    if (!v.is_number()) throw SchemaError(line, field, std::string("field \"") + field + "\" must be a number");
    return v.get<double>();
}

std::vector<std::string> string_list(const json& v, const char* field, std::size_t line) {
    if (!v.is_array()) throw SchemaError(line, field, std::string("field \"") + field + "\" must be an array");
    std::vector<std::string> out;
    for (const auto& e : v) {
        if (!e.is_string())
            throw SchemaError(line, field, std::string("field \"") + field + "\" must hold strings");
        out.push_back(e.get<std::string>());
    }
    return out;
}

std::optional<std::vector<std::string>> optional_list(const json& j, const char* field, std::size_t line) {
    auto it = j.find(field);
    if (it == j.end() || it->is_null()) return std::nullopt;
    return string_list(*it, field, line);
}

void require_object(const json& j, std::size_t line) {
    if (!j.is_object()) throw SchemaError(line, "", "record must be a JSON object");
}

json collect_extra(const json& j, std::initializer_list<const char*> known) {
    json extra = json::object();
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool is_known = false;
        for (const char* k : known) is_known = is_known || it.key() == k;
        if (!is_known) extra[it.key()] = it.value();
    }
    return extra;
}

void merge_extra(json& out, const json& extra) {
    for (auto it = extra.begin(); it != extra.end(); ++it) {
        if (!out.contains(it.key())) out[it.key()] = it.value();
    }
}

constexpr std::initializer_list<const char*> kTrajectoryFields = {
    "id", "sample", "question", "steps", "answer", "budget", "terminated"};
constexpr std::initializer_list<const char*> kWeightedFields = {
    "id", "sample", "question", "steps", "answer", "budget", "terminated", "log_weight", "weight", "weight_mode"};

} // namespace

json trajectory_to_json(const Trajectory& t) {
    json steps = json::array();
    for (const auto& s : t.steps) {
        json retrieved = json::array();
        for (const auto& p : s.retrieved) retrieved.push_back({{"id", p.id}, {"score", p.score}, {"rank", p.rank}});
        json step = {{"sub_query", s.sub_query}, {"retrieved", retrieved}, {"evidence", s.evidence}};
        if (s.selected) step["selected"] = *s.selected;
        steps.push_back(std::move(step));
    }
    return {{"question", t.question}, {"steps", steps}, {"budget", t.budget}, {"terminated", t.terminated}};
}

Trajectory trajectory_from_json(const json& j, std::size_t line) {
    Trajectory t;
    t.question = require_string(j, "question", line);
    const json& steps = require(j, "steps", line);
    if (!steps.is_array()) throw SchemaError(line, "steps", "field \"steps\" must be an array");
    int hop = 0;
    for (const auto& s : steps) {
        if (!s.is_object()) throw SchemaError(line, "steps", "each step must be an object");
        Step step;
        step.hop = ++hop;
        step.sub_query = require_string(s, "sub_query", line);
        step.evidence = require_string(s, "evidence", line);
        const json& retrieved = require(s, "retrieved", line);
        if (!retrieved.is_array()) throw SchemaError(line, "retrieved", "field \"retrieved\" must be an array");
        for (const auto& p : retrieved) {
            if (!p.is_object()) throw SchemaError(line, "retrieved", "retrieved entries must be objects");
            ScoredPassage sp;
            sp.id = require_string(p, "id", line);
            sp.score = require_number(p, "score", line);
            sp.rank = static_cast<int>(require_number(p, "rank", line));
            step.retrieved.push_back(std::move(sp));
        }
        step.selected = optional_list(s, "selected", line);
        t.steps.push_back(std::move(step));
    }
    t.budget = j.contains("budget") ? j.at("budget").get<int>() : std::max<int>(5, static_cast<int>(t.steps.size()));
    t.terminated = j.contains("terminated") ? j.at("terminated").get<bool>() : true;
    try {
        validate(t);
    } catch (const std::invalid_argument& e) {
        throw SchemaError(line, "steps", e.what());
    }
    return t;
}

json JsonCodec<Passage>::encode(const Passage& p) {
    return {{"id", p.id}, {"title", p.title}, {"text", p.text}};
}

Passage JsonCodec<Passage>::decode(const json& j, std::size_t line) {
    require_object(j, line);
    Passage p;
    p.id = require_string(j, "id", line);
    p.text = require_string(j, "text", line);
    if (j.contains("title")) p.title = require_string(j, "title", line);
    if (p.id.empty()) throw SchemaError(line, "id", "passage id must be non-empty");
    if (p.text.empty()) throw SchemaError(line, "text", "passage text must be non-empty");
    return p;
}

json JsonCodec<Example>::encode(const Example& e) {
    json j = {{"id", e.id}, {"question", e.question}, {"answers", e.gold_answers}};
    if (e.gold_passages) j["gold_passages"] = *e.gold_passages;
    if (e.gold_subqueries) j["gold_subqueries"] = *e.gold_subqueries;
    if (e.gold_evidence) j["gold_evidence"] = *e.gold_evidence;
    merge_extra(j, e.extra);
    return j;
}

Example JsonCodec<Example>::decode(const json& j, std::size_t line) {
    require_object(j, line);
    Example e;
    e.id = require_string(j, "id", line);
    e.question = require_string(j, "question", line);
    e.gold_answers = string_list(require(j, "answers", line), "answers", line);
    if (e.gold_answers.empty()) throw SchemaError(line, "answers", "field \"answers\" must be non-empty");
    e.gold_passages = optional_list(j, "gold_passages", line);
    e.gold_subqueries = optional_list(j, "gold_subqueries", line);
    e.gold_evidence = optional_list(j, "gold_evidence", line);
    e.extra = collect_extra(j, {"id", "question", "answers", "gold_passages", "gold_subqueries", "gold_evidence"});
    return e;
}

json JsonCodec<TrajectoryRecord>::encode(const TrajectoryRecord& r) {
    json j = trajectory_to_json(r.trajectory);
    j["id"] = r.id;
    j["sample"] = r.sample;
    if (r.answer) j["answer"] = *r.answer;
    merge_extra(j, r.extra);
    return j;
}

TrajectoryRecord JsonCodec<TrajectoryRecord>::decode(const json& j, std::size_t line) {
    require_object(j, line);
    TrajectoryRecord r;
    r.id = require_string(j, "id", line);
    r.trajectory = trajectory_from_json(j, line);
    if (j.contains("sample")) r.sample = static_cast<int>(require_number(j, "sample", line));
    if (j.contains("answer") && !j.at("answer").is_null()) r.answer = require_string(j, "answer", line);
    r.extra = collect_extra(j, kTrajectoryFields);
    return r;
}

json JsonCodec<WeightedTrajectory>::encode(const WeightedTrajectory& w) {
    json j = trajectory_to_json(w.trajectory);
    j["id"] = w.id;
    j["sample"] = w.sample;
    j["answer"] = w.answer;
    j["log_weight"] = w.log_weight;
    j["weight"] = w.weight;
    j["weight_mode"] = std::string(to_string(w.weight_mode));
    merge_extra(j, w.extra);
    return j;
}

WeightedTrajectory JsonCodec<WeightedTrajectory>::decode(const json& j, std::size_t line) {
    require_object(j, line);
    WeightedTrajectory w;
    w.id = require_string(j, "id", line);
    w.trajectory = trajectory_from_json(j, line);
    if (j.contains("sample")) w.sample = static_cast<int>(require_number(j, "sample", line));
    w.answer = j.contains("answer") && j.at("answer").is_string() ? j.at("answer").get<std::string>() : "";
    w.log_weight = require_number(j, "log_weight", line);
    w.weight = require_number(j, "weight", line);
    if (w.weight < 0.0 || w.weight > 1.0) throw SchemaError(line, "weight", "field \"weight\" must lie in [0,1]");
    try {
        w.weight_mode = weight_mode_from_string(require_string(j, "weight_mode", line));
    } catch (const std::invalid_argument& e) {
        throw SchemaError(line, "weight_mode", e.what());
    }
    w.extra = collect_extra(j, kWeightedFields);
    return w;
}

template <typename T>
std::vector<T> read_jsonl_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    return read_jsonl<T>(in);
}

template <typename T>
void write_jsonl_file(const std::filesystem::path& path, const std::vector<T>& records) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    write_jsonl(out, records);
    if (!out) throw IoError("write failed for " + path.string());
}

template std::vector<Passage> read_jsonl_file<Passage>(const std::filesystem::path&);
template std::vector<Example> read_jsonl_file<Example>(const std::filesystem::path&);
template std::vector<TrajectoryRecord> read_jsonl_file<TrajectoryRecord>(const std::filesystem::path&);
template std::vector<WeightedTrajectory> read_jsonl_file<WeightedTrajectory>(const std::filesystem::path&);
template void write_jsonl_file<Passage>(const std::filesystem::path&, const std::vector<Passage>&);
template void write_jsonl_file<Example>(const std::filesystem::path&, const std::vector<Example>&);
template void write_jsonl_file<TrajectoryRecord>(const std::filesystem::path&, const std::vector<TrajectoryRecord>&);
template void write_jsonl_file<WeightedTrajectory>(const std::filesystem::path&,
                                                   const std::vector<WeightedTrajectory>&);

} // namespace exsearch
