#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "exsearch/types.hpp"

namespace exsearch {

/// Lowercase, punctuation to spaces, drop the articles a/an/the, collapse
/// whitespace.
std::string normalize_answer(std::string_view text);

// The answer metrics below throw EmptyGolds when `golds` is empty.
int exact_match(std::string_view pred, std::span<const std::string> golds);
double token_f1(std::string_view pred, std::span<const std::string> golds);
/// Cover-EM: some normalized gold occurs as a contiguous token run in the
/// normalized prediction.
int accuracy(std::string_view pred, std::span<const std::string> golds);

/// A passage counts as correct when some normalized gold occurs as a
/// contiguous token run in its normalized title + text.
bool passage_contains_answer(const Passage& passage, std::span<const std::string> golds);

double recall_at_k(std::span<const Passage> ranked, std::span<const std::string> golds, std::size_t k);
double precision_at_k(std::span<const Passage> ranked, std::span<const std::string> golds, std::size_t k);

/// Ranked pool of a trajectory: hop order, then rank (or selection) order,
/// first occurrence kept. Ids unknown to `lookup` are skipped.
template <typename Lookup>
std::vector<Passage> trajectory_pool(const Trajectory& t, Lookup&& lookup, bool use_selection = true) {
    std::vector<Passage> pool;
    std::vector<std::string> seen;
    auto add = [&](const std::string& id) {
        for (const auto& s : seen)
            if (s == id) return;
        seen.push_back(id);
        if (const Passage* p = lookup(id)) pool.push_back(*p);
    };
    for (const Step& step : t.steps) {
        if (use_selection && step.selected) {
            for (const auto& id : *step.selected) add(id);
        } else {
            for (const auto& sp : step.retrieved) add(sp.id);
        }
    }
    return pool;
}

struct Prediction {
    std::string id;
    std::string answer;
    // Passages the run retrieved for this example, already pooled.
    std::optional<std::vector<Passage>> ranked;
};

struct ExampleScores {
    std::string id;
    bool predicted = false;
    double em = 0.0;
    double f1 = 0.0;
    double acc = 0.0;
    std::map<std::size_t, double> recall_at;
    std::map<std::size_t, double> precision_at;
};

struct MetricsReport {
    double em = 0.0;
    double f1 = 0.0;
    double acc = 0.0;
    std::map<std::size_t, double> recall_at;
    std::map<std::size_t, double> precision_at;
    std::size_t n_examples = 0;
    std::size_t n_missing = 0;
    std::vector<ExampleScores> per_example; // dataset order
};

/// Means over the dataset; examples without a prediction score zero. Throws
/// UnknownId for a prediction whose id is not in the dataset.
MetricsReport evaluate_run(std::span<const Prediction> predictions, std::span<const Example> dataset,
                           std::span<const std::size_t> ks);

nlohmann::json report_to_json(const MetricsReport& report);
std::string report_to_csv(const MetricsReport& report);

} // namespace exsearch
