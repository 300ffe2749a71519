#include "exsearch/tabular_policy.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "exsearch/errors.hpp"
#include "exsearch/synthetic_world.hpp"

namespace exsearch {
namespace {

constexpr int kParamsVersion = 1;

std::size_t sample_index(std::span<const double> probs, Rng& rng) {
    double u = rng.uniform();
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        acc += probs[i];
        if (u < acc) return i;
    }
    // Rounding left u above the running sum; take the last outcome with mass.
    for (std::size_t i = probs.size(); i-- > 0;)
        if (probs[i] > 0.0) return i;
    return 0;
}

double safe_log(double p) { return p > 0.0 ? std::log(p) : kLogProbFloor; }

std::vector<std::string> words(std::string_view s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ' ' || c == '\t' || c == '\n') {
            if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

std::string make_subquery(const std::string& entity, const std::string& relation) {
    return entity.empty() ? relation : entity + " " + relation;
}

// Record distribution over the first min(|retrieved|, K) positions.
std::vector<double> record_distribution(const TabularPolicyParams& params, std::size_t available) {
    const std::size_t n = std::min(available, params.k());
    if (n == 0) return {};
    return softmax(std::span<const double>(params.record_logits.data(), n), params.temperature);
}

std::vector<RetrievedPassage> resolve(const Retriever& retriever, const std::vector<ScoredPassage>& hits) {
    std::vector<RetrievedPassage> out;
    out.reserve(hits.size());
    for (const auto& h : hits) {
        const Passage* p = retriever.passage(h.id);
        if (!p) throw UnrealizableTrajectory("retriever returned unknown passage '" + h.id + "'");
        out.push_back(RetrievedPassage{*p, h.score, h.rank});
    }
    return out;
}

} // namespace

TabularPolicyParams TabularPolicyParams::uniform(std::vector<std::string> relations, int budget, std::size_t k) {
    if (budget < 1) throw std::invalid_argument("budget must be at least 1");
    if (k < 1) throw std::invalid_argument("k must be at least 1");
    TabularPolicyParams p;
    p.think_logits.assign(static_cast<std::size_t>(budget) + 1, std::vector<double>(relations.size() + 1, 0.0));
    p.relations = std::move(relations);
    p.record_logits.assign(k, 0.0);
    return p;
}

void TabularPolicyParams::validate() const {
    if (relations.empty()) throw std::invalid_argument("policy needs at least one relation");
    if (think_logits.size() < 2) throw std::invalid_argument("think_logits needs rows for hops 1..T+1 with T >= 1");
    for (const auto& row : think_logits) {
        if (row.size() != relations.size() + 1)
            throw std::invalid_argument("think_logits rows must cover every relation plus STOP");
        for (double v : row)
            if (!std::isfinite(v)) throw std::invalid_argument("think_logits must be finite");
    }
    if (record_logits.empty()) throw std::invalid_argument("record_logits must cover at least one position");
    for (double v : record_logits)
        if (!std::isfinite(v)) throw std::invalid_argument("record_logits must be finite");
    for (double v : answer_logits)
        if (!std::isfinite(v)) throw std::invalid_argument("answer_logits must be finite");
    if (!(temperature > 0.0) || !std::isfinite(temperature)) throw std::invalid_argument("temperature must be > 0");
}

nlohmann::json params_to_json(const TabularPolicyParams& p) {
    return {{"version", kParamsVersion},
            {"relations", p.relations},
            {"think_logits", p.think_logits},
            {"record_logits", p.record_logits},
            {"answer_logits", p.answer_logits},
            {"temperature", p.temperature}};
}

TabularPolicyParams params_from_json(const nlohmann::json& j) {
    TabularPolicyParams p;
    try {
        if (j.contains("version") && j.at("version").get<int>() != kParamsVersion)
            throw std::invalid_argument("unsupported params version");
        p.relations = j.at("relations").get<std::vector<std::string>>();
        p.think_logits = j.at("think_logits").get<std::vector<std::vector<double>>>();
        p.record_logits = j.at("record_logits").get<std::vector<double>>();
        p.answer_logits = j.at("answer_logits").get<std::array<double, 2>>();
        p.temperature = j.value("temperature", 1.0);
        p.validate();
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(1, "", std::string("invalid policy params: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw SchemaError(1, "", std::string("invalid policy params: ") + e.what());
    }
    return p;
}

std::vector<double> softmax(std::span<const double> logits, double temperature) {
    std::vector<double> out(logits.size());
    if (logits.empty()) return out;
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : logits) mx = std::max(mx, v / temperature);
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] / temperature - mx);
        sum += out[i];
    }
    for (double& v : out) v /= sum;
    return out;
}

double log_sum_exp(std::span<const double> values) {
    if (values.empty()) return kLogProbFloor;
    double mx = *std::max_element(values.begin(), values.end());
    if (mx <= kLogProbFloor) return kLogProbFloor;
    double sum = 0.0;
    for (double v : values) sum += std::exp(v - mx);
    return mx + std::log(sum);
}

std::string passage_object(const Passage& passage) {
    auto w = words(passage.text);
    return w.empty() ? std::string() : w.back();
}

std::string current_entity(std::string_view question, const Trajectory& history) {
    for (auto it = history.steps.rbegin(); it != history.steps.rend(); ++it) {
        if (!it->evidence.empty()) return it->evidence;
    }
    if (auto start = chain_start_entity(question)) return *start;
    auto w = words(question);
    return w.empty() ? std::string() : w.front();
}

std::array<std::pair<std::string, double>, 2> answer_distribution(const TabularPolicyParams& params,
                                                                  const Trajectory& trajectory) {
    auto probs = softmax(params.answer_logits, params.temperature);
    std::string last = trajectory.steps.empty() ? std::string() : trajectory.steps.back().evidence;
    return {std::make_pair(std::move(last), probs[kCopyLastEvidence]),
            std::make_pair(std::string(kAbstainAnswer), probs[kAbstain])};
}

double answer_log_prob(const TabularPolicyParams& params, const Trajectory& trajectory, std::string_view y) {
    double mass = 0.0;
    for (const auto& [text, p] : answer_distribution(params, trajectory))
        if (text == y) mass += p;
    return safe_log(mass);
}

TabularPolicy::TabularPolicy(TabularPolicyParams params, const Retriever& retriever)
    : params_(std::move(params)), retriever_(&retriever) {
    params_.validate();
}

PolicyDecision TabularPolicy::propose_subquery(const PolicyState& state, Rng& rng) const {
    const int row = std::clamp(state.hop, 1, static_cast<int>(params_.think_logits.size())) - 1;
    auto probs = softmax(params_.think_logits[static_cast<std::size_t>(row)], params_.temperature);
    std::size_t choice = sample_index(probs, rng);
    if (choice == params_.stop_index())
        return PolicyDecision{PolicyDecision::Kind::Stop, "STOP", safe_log(probs[choice])};
    static const Trajectory kEmpty{};
    const Trajectory& history = state.history ? *state.history : kEmpty;
    return PolicyDecision{PolicyDecision::Kind::SubQuery,
                          make_subquery(current_entity(state.question, history), params_.relations[choice]),
                          safe_log(probs[choice])};
}

PolicyDecision TabularPolicy::extract_evidence(const PolicyState&, std::string_view,
                                               std::span<const RetrievedPassage> retrieved, Rng& rng) const {
    if (retrieved.empty()) throw NoDocuments("cannot record evidence from an empty retrieval");
    auto probs = record_distribution(params_, retrieved.size());
    std::size_t pos = sample_index(probs, rng);
    std::string evidence = passage_object(retrieved[pos].passage);
    // Positions naming the same object yield the same evidence.
    double mass = 0.0;
    for (std::size_t j = 0; j < probs.size(); ++j)
        if (passage_object(retrieved[j].passage) == evidence) mass += probs[j];
    return PolicyDecision{PolicyDecision::Kind::Evidence, std::move(evidence), safe_log(mass)};
}

PolicyDecision TabularPolicy::answer(std::string_view, const Trajectory& trajectory, Rng& rng) const {
    auto dist = answer_distribution(params_, trajectory);
    std::array<double, 2> probs{dist[0].second, dist[1].second};
    std::size_t choice = sample_index(probs, rng);
    std::string text = dist[choice].first;
    return PolicyDecision{PolicyDecision::Kind::Answer, text, answer_log_prob(params_, trajectory, text)};
}

double TabularPolicy::score_answer(std::string_view, const Trajectory& trajectory, std::string_view y) const {
    return answer_log_prob(params_, trajectory, y);
}

std::string TabularPolicy::rank(std::string_view, std::string_view sub_query,
                                std::span<const RetrievedPassage> retrieved) const {
    // Structural match: subject and relation of the fact against the sub-query.
    auto q = words(sub_query);
    std::vector<std::pair<int, std::size_t>> order;
    for (std::size_t i = 0; i < retrieved.size(); ++i) {
        auto w = words(retrieved[i].passage.text);
        int score = 0;
        if (q.size() >= 2 && w.size() >= 2) score = (w[0] == q[0] ? 2 : 0) + (w[1] == q[1] ? 1 : 0);
        order.emplace_back(-score, i);
    }
    std::stable_sort(order.begin(), order.end());
    std::string out;
    for (const auto& [neg, i] : order) {
        if (!out.empty()) out += " > ";
        out += "[" + std::to_string(i + 1) + "]";
    }
    return out;
}

TrajectoryReplay replay_trajectory(const TabularPolicyParams& params, const Retriever& retriever,
                                   const Trajectory& trajectory) {
    if (static_cast<int>(trajectory.steps.size()) > params.budget())
        throw UnrealizableTrajectory("trajectory has more steps than the policy budget");
    TrajectoryReplay out;
    Trajectory history;
    history.question = trajectory.question;
    for (const Step& step : trajectory.steps) {
        const int hop = static_cast<int>(history.steps.size()) + 1;
        const std::string entity = current_entity(trajectory.question, history);
        std::size_t choice = params.relations.size();
        for (std::size_t r = 0; r < params.relations.size(); ++r) {
            if (make_subquery(entity, params.relations[r]) == step.sub_query) {
                choice = r;
                break;
            }
        }
        if (choice == params.relations.size())
            throw UnrealizableTrajectory("sub-query '" + step.sub_query + "' at hop " + std::to_string(hop) +
                                         " is not producible from entity '" + entity + "'");
        auto think = softmax(params.think_logits[static_cast<std::size_t>(hop - 1)], params.temperature);
        out.log_prob += safe_log(think[choice]);
        out.think.emplace_back(hop, choice);

        auto hits = retriever.retrieve(step.sub_query, params.k());
        if (hits.size() != step.retrieved.size())
            throw UnrealizableTrajectory("retrieval at hop " + std::to_string(hop) + " disagrees with the retriever");
        for (std::size_t i = 0; i < hits.size(); ++i) {
            if (hits[i].id != step.retrieved[i].id)
                throw UnrealizableTrajectory("retrieval at hop " + std::to_string(hop) +
                                             " disagrees with the retriever");
        }

        std::vector<const Passage*> candidates;
        if (step.selected) {
            for (const auto& id : *step.selected) candidates.push_back(retriever.passage(id));
        } else {
            for (const auto& h : hits) candidates.push_back(retriever.passage(h.id));
        }
        if (candidates.empty()) {
            if (!step.evidence.empty())
                throw UnrealizableTrajectory("evidence recorded at hop " + std::to_string(hop) +
                                             " without retrieved passages");
            out.record.emplace_back();
        } else {
            auto probs = record_distribution(params, candidates.size());
            double mass = 0.0;
            std::vector<std::pair<std::size_t, double>> positions;
            for (std::size_t j = 0; j < probs.size(); ++j) {
                if (candidates[j] && passage_object(*candidates[j]) == step.evidence) {
                    positions.emplace_back(j, probs[j]);
                    mass += probs[j];
                }
            }
            if (positions.empty())
                throw UnrealizableTrajectory("evidence '" + step.evidence + "' at hop " + std::to_string(hop) +
                                             " names no retrieved passage");
            for (auto& [j, share] : positions) share /= mass;
            out.log_prob += safe_log(mass);
            out.record.push_back(std::move(positions));
        }
        history.steps.push_back(step);
    }
    if (static_cast<int>(trajectory.steps.size()) < params.budget()) {
        const std::size_t hop = trajectory.steps.size() + 1;
        auto think = softmax(params.think_logits[hop - 1], params.temperature);
        out.log_prob += safe_log(think[params.stop_index()]);
        out.think.emplace_back(static_cast<int>(hop), params.stop_index());
    }
    return out;
}

double trajectory_log_prob(const TabularPolicyParams& params, const Retriever& retriever,
                           const Trajectory& trajectory, const std::optional<std::string>& answer) {
    double lp = replay_trajectory(params, retriever, trajectory).log_prob;
    if (answer) lp += answer_log_prob(params, trajectory, *answer);
    return lp;
}

double enumeration_bound(const TabularPolicyParams& params) {
    // Per hop: every relation times every record position, plus the answer pair at each leaf.
    const double branch = static_cast<double>(params.relations.size()) * static_cast<double>(params.k());
    double leaves = 0.0;
    double level = 1.0;
    for (int t = 0; t <= params.budget(); ++t) {
        leaves += level;
        level *= branch;
    }
    return 2.0 * leaves;
}

std::vector<SearchPath> enumerate_search_paths(const TabularPolicyParams& params, std::string_view question,
                                               const Retriever& retriever, double cap) {
    params.validate();
    const double bound = enumeration_bound(params);
    if (bound > cap) throw EnumerationTooLarge(bound, cap);

    std::map<std::string, std::vector<RetrievedPassage>, std::less<>> cache;
    auto lookup = [&](const std::string& q) -> const std::vector<RetrievedPassage>& {
        auto it = cache.find(q);
        if (it == cache.end()) it = cache.emplace(q, resolve(retriever, retriever.retrieve(q, params.k()))).first;
        return it->second;
    };

    std::vector<SearchPath> out;
    Trajectory current;
    current.question = std::string(question);
    current.budget = params.budget();

    auto recurse = [&](auto& self, double lp) -> void {
        const int hop = static_cast<int>(current.steps.size()) + 1;
        if (hop > params.budget()) {
            out.push_back(SearchPath{current, lp});
            return;
        }
        auto think = softmax(params.think_logits[static_cast<std::size_t>(hop - 1)], params.temperature);
        if (think[params.stop_index()] > 0.0) out.push_back(SearchPath{current, lp + std::log(think[params.stop_index()])});
        const std::string entity = current_entity(question, current);
        for (std::size_t r = 0; r < params.relations.size(); ++r) {
            if (!(think[r] > 0.0)) continue;
            Step step;
            step.hop = hop;
            step.sub_query = make_subquery(entity, params.relations[r]);
            const auto& hits = lookup(step.sub_query);
            for (const auto& h : hits) step.retrieved.push_back(ScoredPassage{h.passage.id, h.score, h.rank});
            const double think_lp = std::log(think[r]);
            if (hits.empty()) {
                current.steps.push_back(step);
                self(self, lp + think_lp);
                current.steps.pop_back();
                continue;
            }
            auto probs = record_distribution(params, hits.size());
            // Merge positions that yield the same evidence text, keeping first-seen order.
            std::vector<std::pair<std::string, double>> outcomes;
            for (std::size_t j = 0; j < probs.size(); ++j) {
                std::string e = passage_object(hits[j].passage);
                auto it = std::find_if(outcomes.begin(), outcomes.end(), [&](const auto& o) { return o.first == e; });
                if (it == outcomes.end()) {
                    outcomes.emplace_back(std::move(e), probs[j]);
                } else {
                    it->second += probs[j];
                }
            }
            for (const auto& [evidence, p] : outcomes) {
                if (!(p > 0.0)) continue;
                step.evidence = evidence;
                current.steps.push_back(step);
                self(self, lp + think_lp + std::log(p));
                current.steps.pop_back();
            }
        }
    };
    recurse(recurse, 0.0);
    return out;
}

std::vector<EnumeratedTrajectory> enumerate_trajectories(const TabularPolicyParams& params, const Example& example,
                                                         const Retriever& retriever, double cap) {
    std::vector<EnumeratedTrajectory> out;
    for (auto& path : enumerate_search_paths(params, example.question, retriever, cap)) {
        auto dist = answer_distribution(params, path.trajectory);
        if (dist[0].first == dist[1].first) {
            out.push_back({path.trajectory, dist[0].first, path.log_prob + safe_log(dist[0].second + dist[1].second)});
            continue;
        }
        for (const auto& [text, p] : dist) {
            if (p > 0.0) out.push_back({path.trajectory, text, path.log_prob + std::log(p)});
        }
    }
    return out;
}

double exact_marginal(const TabularPolicyParams& params, const Example& example, const Retriever& retriever,
                      std::string_view y, double cap) {
    std::vector<double> terms;
    for (const auto& path : enumerate_search_paths(params, example.question, retriever, cap)) {
        double a = answer_log_prob(params, path.trajectory, y);
        if (a > kLogProbFloor) terms.push_back(path.log_prob + a);
    }
    return log_sum_exp(terms);
}

} // namespace exsearch
