#pragma once

#include <cstddef>
#include <filesystem>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "exsearch/errors.hpp"
#include "exsearch/types.hpp"

namespace exsearch {

/// JSON encoding for the record types that travel as JSON lines. `decode`
/// throws SchemaError carrying `line`.
template <typename T>
struct JsonCodec;

template <>
struct JsonCodec<Passage> {
    static nlohmann::json encode(const Passage& value);
    static Passage decode(const nlohmann::json& j, std::size_t line);
};

template <>
struct JsonCodec<Example> {
    static nlohmann::json encode(const Example& value);
    static Example decode(const nlohmann::json& j, std::size_t line);
};

template <>
struct JsonCodec<TrajectoryRecord> {
    static nlohmann::json encode(const TrajectoryRecord& value);
    static TrajectoryRecord decode(const nlohmann::json& j, std::size_t line);
};

template <>
struct JsonCodec<WeightedTrajectory> {
    static nlohmann::json encode(const WeightedTrajectory& value);
    static WeightedTrajectory decode(const nlohmann::json& j, std::size_t line);
};

nlohmann::json trajectory_to_json(const Trajectory& trajectory);
Trajectory trajectory_from_json(const nlohmann::json& j, std::size_t line);

/// Blank lines are skipped; line numbers in errors count them.
template <typename T>
std::vector<T> read_jsonl(std::istream& in) {
    std::vector<T> out;
    std::string text;
    std::size_t line = 0;
    while (std::getline(in, text)) {
        ++line;
        if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(text);
        } catch (const nlohmann::json::parse_error& e) {
            throw SchemaError(line, "", std::string("invalid JSON: ") + e.what());
        }
        out.push_back(JsonCodec<T>::decode(j, line));
    }
    return out;
}

template <typename T>
void write_jsonl(std::ostream& out, const std::vector<T>& records) {
    for (const auto& r : records) out << JsonCodec<T>::encode(r).dump() << '\n';
}

template <typename T>
std::vector<T> read_jsonl_file(const std::filesystem::path& path);

template <typename T>
void write_jsonl_file(const std::filesystem::path& path, const std::vector<T>& records);

} // namespace exsearch
