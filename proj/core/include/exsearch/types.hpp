#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace exsearch {

struct Passage {
    std::string id;
    std::string title;
    std::string text;

    bool operator==(const Passage&) const = default;
};

struct ScoredPassage {
    std::string id;
    double score = 0.0;
    int rank = 0; // 1-based

    bool operator==(const ScoredPassage&) const = default;
};

/// One think -> search -> record iteration.
struct Step {
    std::string sub_query;
    std::vector<ScoredPassage> retrieved;
    // Re-ranked subset of `retrieved` ids; absent unless the rank action ran.
    std::optional<std::vector<std::string>> selected;
    std::string evidence;
    int hop = 1;

    bool operator==(const Step&) const = default;
};

struct Trajectory {
    std::string question;
    std::vector<Step> steps;
    bool terminated = true;
    int budget = 5;

    bool operator==(const Trajectory&) const = default;
};

/// Throws std::invalid_argument when hop numbering, the step budget or the
/// selected-subset rule is violated.
void validate(const Trajectory& trajectory);

enum class WeightMode { PosteriorLogprob, RewardEm, RewardAcc, RewardF1 };

std::string_view to_string(WeightMode mode);
WeightMode weight_mode_from_string(std::string_view name);

/// A trajectory as stored on disk: the trajectory itself plus the record
/// identity (example id, sample index) and the answer it produced.
struct TrajectoryRecord {
    std::string id;
    int sample = 0;
    Trajectory trajectory;
    std::optional<std::string> answer;
    nlohmann::json extra = nlohmann::json::object(); // unknown fields, kept verbatim

    bool operator==(const TrajectoryRecord&) const = default;
};

struct WeightedTrajectory {
    std::string id;
    int sample = 0;
    Trajectory trajectory;
    std::string answer;
    double log_weight = 0.0;
    double weight = 0.0;
    WeightMode weight_mode = WeightMode::PosteriorLogprob;
    nlohmann::json extra = nlohmann::json::object();

    bool operator==(const WeightedTrajectory&) const = default;
};

struct Example {
    std::string id;
    std::string question;
    std::vector<std::string> gold_answers;
    std::optional<std::vector<std::string>> gold_passages;
    std::optional<std::vector<std::string>> gold_subqueries;
    // Per-hop intermediate answers, used by warm-up formatting when present.
    std::optional<std::vector<std::string>> gold_evidence;
    nlohmann::json extra = nlohmann::json::object();

    bool operator==(const Example&) const = default;
};

} // namespace exsearch
