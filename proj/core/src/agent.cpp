#include "exsearch/agent.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <stdexcept>

namespace exsearch {

void AgentConfig::validate() const {
    if (budget < 1) throw std::invalid_argument("agent budget must be at least 1");
    if (k < 1) throw std::invalid_argument("retrieval size k must be at least 1");
    if (rerank_keep < 1 || rerank_keep > k) throw std::invalid_argument("rerank_keep must lie in 1..k");
}

std::vector<int> parse_ranking(std::string_view text) {
    std::vector<int> out;
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] != '[') continue;
        std::size_t j = i + 1;
        long value = 0;
        while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j])) && value < 1'000'000) {
            value = value * 10 + (text[j] - '0');
            ++j;
        }
        if (j > i + 1 && j < text.size() && text[j] == ']') {
            out.push_back(static_cast<int>(value));
            i = j;
        }
    }
    return out;
}

std::vector<std::string> select_ranked(std::string_view ranking_output, std::span<const std::string> retrieved_ids,
                                       std::size_t m) {
    m = std::min(m, retrieved_ids.size());
    std::vector<std::string> out;
    std::set<int> used;
    for (int pos : parse_ranking(ranking_output)) {
        if (out.size() == m) break;
        if (pos < 1 || pos > static_cast<int>(retrieved_ids.size())) continue;
        if (!used.insert(pos).second) continue;
        out.push_back(retrieved_ids[static_cast<std::size_t>(pos - 1)]);
    }
    for (std::size_t i = 0; i < retrieved_ids.size() && out.size() < m; ++i) {
        if (used.insert(static_cast<int>(i) + 1).second) out.push_back(retrieved_ids[i]);
    }
    return out;
}

std::vector<std::string> rank_documents(const Policy& policy, std::string_view question, std::string_view sub_query,
                                        std::span<const RetrievedPassage> retrieved, std::size_t m) {
    std::vector<std::string> ids;
    ids.reserve(retrieved.size());
    for (const auto& r : retrieved) ids.push_back(r.passage.id);
    return select_ranked(policy.rank(question, sub_query, retrieved), ids, m);
}

Episode run_episode(std::string_view question, const Policy& policy, const Retriever& retriever,
                    const AgentConfig& config, Rng& rng) {
    config.validate();
    Episode ep;
    Trajectory& t = ep.trajectory;
    t.question = std::string(question);
    t.budget = config.budget;
    t.terminated = false;

    for (int hop = 1; hop <= config.budget; ++hop) {
        PolicyState state{question, &t, hop};
        PolicyDecision think = policy.propose_subquery(state, rng);
        ep.log_prob += think.log_prob;
        if (think.is_stop()) break;
        if (config.dedup_subqueries) {
            bool repeat = std::any_of(t.steps.begin(), t.steps.end(),
                                      [&](const Step& s) { return s.sub_query == think.text; });
            if (repeat) break;
        }

        Step step;
        step.hop = hop;
        step.sub_query = think.text;
        step.retrieved = retriever.retrieve(step.sub_query, config.k);

        std::vector<RetrievedPassage> candidates;
        for (const auto& hit : step.retrieved) {
            if (const Passage* p = retriever.passage(hit.id)) candidates.push_back(RetrievedPassage{*p, hit.score, hit.rank});
        }
        if (config.rerank && !candidates.empty()) {
            auto selected = rank_documents(policy, question, step.sub_query, candidates, config.rerank_keep);
            std::vector<RetrievedPassage> kept;
            for (const auto& id : selected) {
                auto it = std::find_if(candidates.begin(), candidates.end(),
                                       [&](const RetrievedPassage& r) { return r.passage.id == id; });
                kept.push_back(*it);
            }
            candidates = std::move(kept);
            step.selected = std::move(selected);
        }

        if (!candidates.empty()) {
            PolicyDecision record = policy.extract_evidence(state, step.sub_query, candidates, rng);
            ep.log_prob += record.log_prob;
            step.evidence = std::move(record.text);
        }
        t.steps.push_back(std::move(step));
    }
    t.terminated = true;

    PolicyDecision final_answer = policy.answer(question, t, rng);
    ep.log_prob += final_answer.log_prob;
    ep.answer = std::move(final_answer.text);
    return ep;
}

} // namespace exsearch
