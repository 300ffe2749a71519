#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "exsearch/policy.hpp"
#include "exsearch/retrieval.hpp"
#include "exsearch/types.hpp"

namespace exsearch {

inline constexpr std::string_view kAbstainAnswer = "ABSTAIN";
inline constexpr double kDefaultEnumerationCap = 1e6;

enum AnswerChoice : int { kCopyLastEvidence = 0, kAbstain = 1 };

/// Categorical heads of the reference policy.
///
/// think_logits has one row per hop 1..T+1, each over the relations followed
/// by STOP; record_logits covers retrieved positions 1..K; answer_logits is
/// (copy-last-evidence, abstain). T and K are implied by the shapes.
struct TabularPolicyParams {
    std::vector<std::string> relations;
    std::vector<std::vector<double>> think_logits;
    std::vector<double> record_logits;
    std::array<double, 2> answer_logits{0.0, 0.0};
    double temperature = 1.0;

    static TabularPolicyParams uniform(std::vector<std::string> relations, int budget, std::size_t k);

    int budget() const noexcept { return static_cast<int>(think_logits.size()) - 1; }
    std::size_t k() const noexcept { return record_logits.size(); }
    std::size_t stop_index() const noexcept { return relations.size(); }

    /// Throws std::invalid_argument on shape errors, non-finite logits or a
    /// non-positive temperature.
    void validate() const;

    bool operator==(const TabularPolicyParams&) const = default;
};

nlohmann::json params_to_json(const TabularPolicyParams& params);
TabularPolicyParams params_from_json(const nlohmann::json& j);

/// softmax(logits / temperature), max-shifted.
std::vector<double> softmax(std::span<const double> logits, double temperature = 1.0);

/// Object entity named by a fact passage: the last whitespace-separated word.
std::string passage_object(const Passage& passage);

/// Exactly tractable policy over a synthetic world. Thinking conditions on
/// the hop and the last recorded evidence only.
class TabularPolicy final : public Policy {
public:
    TabularPolicy(TabularPolicyParams params, const Retriever& retriever);

    PolicyDecision propose_subquery(const PolicyState& state, Rng& rng) const override;
    PolicyDecision extract_evidence(const PolicyState& state, std::string_view sub_query,
                                    std::span<const RetrievedPassage> retrieved, Rng& rng) const override;
    PolicyDecision answer(std::string_view question, const Trajectory& trajectory, Rng& rng) const override;
    double score_answer(std::string_view question, const Trajectory& trajectory, std::string_view y) const override;
    std::string rank(std::string_view question, std::string_view sub_query,
                     std::span<const RetrievedPassage> retrieved) const override;

    const TabularPolicyParams& params() const noexcept { return params_; }
    const Retriever& retriever() const noexcept { return *retriever_; }

private:
    TabularPolicyParams params_;
    const Retriever* retriever_;
};

/// Entity the next sub-query starts from: the last non-empty evidence, or
/// the question's start entity.
std::string current_entity(std::string_view question, const Trajectory& history);

/// Probability of each answer choice under `params` and its text given `trajectory`.
std::array<std::pair<std::string, double>, 2> answer_distribution(const TabularPolicyParams& params,
                                                                  const Trajectory& trajectory);

/// log of the answer mass on exactly `y`; kLogProbFloor when there is none.
double answer_log_prob(const TabularPolicyParams& params, const Trajectory& trajectory, std::string_view y);

/// Decisions behind a trajectory, recovered by replaying it against the
/// retriever.
struct TrajectoryReplay {
    double log_prob = 0.0; // log p(z | x), excluding the answer
    // (hop, choice) for each think decision; choice == stop_index() for STOP.
    std::vector<std::pair<int, std::size_t>> think;
    // Per recorded step: positions (0-based) consistent with the evidence and
    // their share of the step's evidence probability.
    std::vector<std::vector<std::pair<std::size_t, double>>> record;
};

/// Throws UnrealizableTrajectory when a sub-query, retrieval or evidence
/// could not have been produced.
TrajectoryReplay replay_trajectory(const TabularPolicyParams& params, const Retriever& retriever,
                                   const Trajectory& trajectory);

double trajectory_log_prob(const TabularPolicyParams& params, const Retriever& retriever,
                           const Trajectory& trajectory, const std::optional<std::string>& answer = std::nullopt);

struct EnumeratedTrajectory {
    Trajectory trajectory;
    std::string answer;
    double log_prob = 0.0; // joint log p(z, answer | x)
};

struct SearchPath {
    Trajectory trajectory;
    double log_prob = 0.0; // log p(z | x)
};

/// Upper bound on the number of leaves of a full enumeration.
double enumeration_bound(const TabularPolicyParams& params);

/// Every search trajectory with non-zero probability, without answers.
/// Throws EnumerationTooLarge when enumeration_bound exceeds `cap`.
std::vector<SearchPath> enumerate_search_paths(const TabularPolicyParams& params, std::string_view question,
                                               const Retriever& retriever, double cap = kDefaultEnumerationCap);

/// Every (trajectory, answer) leaf with its joint log-probability.
std::vector<EnumeratedTrajectory> enumerate_trajectories(const TabularPolicyParams& params, const Example& example,
                                                         const Retriever& retriever,
                                                         double cap = kDefaultEnumerationCap);

/// log p(y | x) by exhaustive enumeration; kLogProbFloor when y is unreachable.
double exact_marginal(const TabularPolicyParams& params, const Example& example, const Retriever& retriever,
                      std::string_view y, double cap = kDefaultEnumerationCap);

/// log(sum(exp(v))), max-shifted; kLogProbFloor for an empty range.
double log_sum_exp(std::span<const double> values);

} // namespace exsearch
