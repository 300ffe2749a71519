#include "exsearch/synthetic_world.hpp"

#include <algorithm>
#include <map>
#include <set>

#include <fmt/format.h>

#include "exsearch/errors.hpp"
#include "exsearch/rng.hpp"

namespace exsearch {
namespace {

constexpr int kMaxGenerationAttempts = 64;

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

using FactMap = std::map<std::pair<std::string, std::string>, std::string, std::less<>>;

FactMap index_facts(const SyntheticWorld& world) {
    FactMap m;
    for (const auto& f : world.facts) m.emplace(std::make_pair(f.subject, f.relation), f.object);
    return m;
}

// Entities visited along `path` from `start`, or empty when the walk breaks
// or revisits an entity.
std::vector<std::string> walk(const FactMap& facts, const std::string& start, const std::vector<std::string>& path) {
    std::vector<std::string> visited{start};
    for (const auto& r : path) {
        auto it = facts.find(std::make_pair(visited.back(), r));
        if (it == facts.end()) return {};
        if (std::find(visited.begin(), visited.end(), it->second) != visited.end()) return {};
        visited.push_back(it->second);
    }
    return visited;
}

std::vector<std::vector<std::string>> all_paths(const std::vector<std::string>& relations, int hops) {
    std::vector<std::vector<std::string>> paths{{}};
    for (int h = 0; h < hops; ++h) {
        std::vector<std::vector<std::string>> next;
        for (const auto& p : paths) {
            for (const auto& r : relations) {
                auto q = p;
                q.push_back(r);
                next.push_back(std::move(q));
            }
        }
        paths = std::move(next);
    }
    return paths;
}

bool has_chain(const SyntheticWorld& world) {
    FactMap facts = index_facts(world);
    for (const auto& path : all_paths(world.relations, world.hop_count)) {
        for (const auto& e : world.entities) {
            if (!walk(facts, e, path).empty()) return true;
        }
    }
    return false;
}

} // namespace

std::optional<std::string> SyntheticWorld::follow(std::string_view subject, std::string_view relation) const {
    for (const auto& f : facts) {
        if (f.subject == subject && f.relation == relation) return f.object;
    }
    return std::nullopt;
}

SyntheticWorld generate_world(int n_entities, int n_relations, int hop_count, double fact_density,
                              std::uint64_t seed) {
    if (hop_count < 1) throw InfeasibleWorld("hop_count must be at least 1");
    if (n_entities < hop_count + 1)
        throw InfeasibleWorld("need at least hop_count + 1 entities for a " + std::to_string(hop_count) + "-hop chain");
    if (n_relations < 1) throw InfeasibleWorld("need at least one relation");
    if (!(fact_density > 0.0 && fact_density <= 1.0)) throw InfeasibleWorld("fact_density must lie in (0, 1]");

    SyntheticWorld world;
    world.hop_count = hop_count;
    world.seed = seed;
    for (int i = 0; i < n_entities; ++i) world.entities.push_back("ent" + std::to_string(i));
    for (int i = 0; i < n_relations; ++i) world.relations.push_back("rel" + std::to_string(i));

    for (int attempt = 0; attempt < kMaxGenerationAttempts; ++attempt) {
        Rng rng(splitmix64(seed) + static_cast<std::uint64_t>(attempt));
        world.facts.clear();
        for (const auto& s : world.entities) {
            for (const auto& r : world.relations) {
                if (rng.uniform() >= fact_density) continue;
                // Uniform over the other entities.
                auto pick = rng.below(world.entities.size() - 1);
                const std::string& o = world.entities[pick];
                world.facts.push_back(Fact{s, r, o == s ? world.entities.back() : o});
            }
        }
        std::sort(world.facts.begin(), world.facts.end());
        if (has_chain(world)) return world;
    }
    throw InfeasibleWorld("no " + std::to_string(hop_count) + "-hop chain after " +
                          std::to_string(kMaxGenerationAttempts) + " attempts");
}

std::string fact_passage_id(const Fact& fact) {
    // The hash prefix decides tie order in retrieval, so a passage's rank among
    // equally scored facts of one subject does not follow its relation name.
    const auto h = static_cast<std::uint32_t>(splitmix64(fnv1a(fact.subject + "\t" + fact.relation + "\t" + fact.object)));
    return fmt::format("f:{:08x}:{}:{}", h, fact.subject, fact.relation);
}

std::vector<Passage> render_corpus(const SyntheticWorld& world) {
    std::vector<Passage> out;
    out.reserve(world.facts.size());
    for (const auto& f : world.facts)
        out.push_back(Passage{fact_passage_id(f), f.subject, f.subject + " " + f.relation + " " + f.object});
    return out;
}

std::string chain_question(std::string_view start, const std::vector<std::string>& relations) {
    std::string q = "Starting from " + std::string(start) + ", follow ";
    for (std::size_t i = 0; i < relations.size(); ++i) {
        if (i > 0) q += " then ";
        q += relations[i];
    }
    return q + ". Which entity is reached?";
}

std::optional<std::string> chain_start_entity(std::string_view question) {
    constexpr std::string_view prefix = "Starting from ";
    if (question.substr(0, prefix.size()) != prefix) return std::nullopt;
    auto rest = question.substr(prefix.size());
    auto comma = rest.find(',');
    if (comma == std::string_view::npos || comma == 0) return std::nullopt;
    return std::string(rest.substr(0, comma));
}

std::vector<Example> make_questions(const SyntheticWorld& world, int n, std::uint64_t seed,
                                    std::vector<std::string> relation_path) {
    if (n < 1) throw InfeasibleWorld("question count must be at least 1");
    FactMap facts = index_facts(world);
    Rng rng(splitmix64(seed ^ 0x5157u));

    auto chains_for = [&](const std::vector<std::string>& path) {
        std::vector<std::vector<std::string>> chains;
        for (const auto& e : world.entities) {
            auto visited = walk(facts, e, path);
            if (!visited.empty()) chains.push_back(std::move(visited));
        }
        return chains;
    };

    if (relation_path.empty()) {
        auto paths = all_paths(world.relations, world.hop_count);
        shuffle(paths, rng);
        std::size_t best = 0;
        for (const auto& p : paths) {
            auto count = chains_for(p).size();
            if (count > best) {
                best = count;
                relation_path = p;
            }
        }
        if (relation_path.empty()) throw InfeasibleWorld("world has no chain of the requested length");
    }

    auto chains = chains_for(relation_path);
    if (static_cast<int>(chains.size()) < n)
        throw InfeasibleWorld("requested " + std::to_string(n) + " questions but only " +
                              std::to_string(chains.size()) + " distinct chains exist");
    shuffle(chains, rng);
    chains.resize(static_cast<std::size_t>(n));

    std::vector<Example> out;
    for (const auto& visited : chains) {
        Example ex;
        ex.id = "q:" + visited.front();
        for (const auto& r : relation_path) ex.id += ":" + r;
        ex.question = chain_question(visited.front(), relation_path);
        ex.gold_answers = {visited.back()};
        std::vector<std::string> passages, subqueries, evidence;
        for (std::size_t h = 0; h < relation_path.size(); ++h) {
            passages.push_back(fact_passage_id(Fact{visited[h], relation_path[h], visited[h + 1]}));
            subqueries.push_back(visited[h] + " " + relation_path[h]);
            evidence.push_back(visited[h + 1]);
        }
        ex.gold_passages = std::move(passages);
        ex.gold_subqueries = std::move(subqueries);
        ex.gold_evidence = std::move(evidence);
        out.push_back(std::move(ex));
    }
    return out;
}

nlohmann::json world_to_json(const SyntheticWorld& world) {
    nlohmann::json facts = nlohmann::json::array();
    for (const auto& f : world.facts) facts.push_back({f.subject, f.relation, f.object});
    return {{"entities", world.entities}, {"relations", world.relations}, {"facts", facts},
            {"seed", world.seed},         {"hop_count", world.hop_count}};
}

SyntheticWorld world_from_json(const nlohmann::json& j) {
    SyntheticWorld w;
    w.entities = j.at("entities").get<std::vector<std::string>>();
    w.relations = j.at("relations").get<std::vector<std::string>>();
    for (const auto& f : j.at("facts")) w.facts.push_back(Fact{f.at(0), f.at(1), f.at(2)});
    std::sort(w.facts.begin(), w.facts.end());
    w.seed = j.at("seed").get<std::uint64_t>();
    w.hop_count = j.at("hop_count").get<int>();
    return w;
}

} // namespace exsearch
