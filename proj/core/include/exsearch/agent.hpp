#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "exsearch/policy.hpp"
#include "exsearch/retrieval.hpp"
#include "exsearch/types.hpp"

namespace exsearch {

struct AgentConfig {
    int budget = 5;            // maximal number of think -> search -> record iterations
    std::size_t k = 5;         // passages retrieved per sub-query
    bool rerank = false;
    std::size_t rerank_keep = 3;
    bool dedup_subqueries = false;

    /// Throws std::invalid_argument when budget < 1, k < 1 or rerank_keep is
    /// outside 1..k.
    void validate() const;
};

struct Episode {
    Trajectory trajectory;
    std::string answer;
    double log_prob = 0.0; // sum of the decision log-probs, answer included
};

/// Runs one search episode. Empty retrievals record empty evidence and the
/// loop continues; the budget is enforced here, not by the policy.
Episode run_episode(std::string_view question, const Policy& policy, const Retriever& retriever,
                    const AgentConfig& config, Rng& rng);

/// 1-based positions named in "[i] > [j] > ..." text, in order, including
/// duplicates and out-of-range values.
std::vector<int> parse_ranking(std::string_view text);

/// Keeps the first `m` valid, distinct positions of `ranking_output`
/// mapped to ids; when none survive, falls back to the retriever's top-m.
/// A partially valid ranking is padded from the retriever order up to m.
std::vector<std::string> select_ranked(std::string_view ranking_output, std::span<const std::string> retrieved_ids,
                                       std::size_t m);

/// Asks the policy for a ranking of `retrieved` and applies select_ranked.
std::vector<std::string> rank_documents(const Policy& policy, std::string_view question, std::string_view sub_query,
                                        std::span<const RetrievedPassage> retrieved, std::size_t m);

} // namespace exsearch
