#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "exsearch/types.hpp"

namespace exsearch {

struct Fact {
    std::string subject;
    std::string relation;
    std::string object;

    auto operator<=>(const Fact&) const = default;
};

/// Entity/relation fact graph. Facts are functional: at most one object per
/// (subject, relation), kept sorted.
struct SyntheticWorld {
    std::vector<std::string> entities;
    std::vector<std::string> relations;
    std::vector<Fact> facts;
    int hop_count = 1;
    std::uint64_t seed = 0;

    /// Object of (subject, relation), if the fact exists.
    std::optional<std::string> follow(std::string_view subject, std::string_view relation) const;

    bool operator==(const SyntheticWorld&) const = default;
};

/// Throws InfeasibleWorld when no `hop_count`-hop chain appears within a
/// bounded number of retries, or when the size preconditions fail.
SyntheticWorld generate_world(int n_entities, int n_relations, int hop_count, double fact_density,
                              std::uint64_t seed);

/// "f:<hash>:<subject>:<relation>", stable across runs.
std::string fact_passage_id(const Fact& fact);

/// One passage per fact: title is the subject, text "<subject> <relation> <object>".
std::vector<Passage> render_corpus(const SyntheticWorld& world);

/// Chain questions over a single relation path, so every question in a set
/// shares one reasoning pattern. When `relation_path` is empty the path with
/// the most chains is used (ties broken by `seed`). Throws InfeasibleWorld
/// when fewer than `n` distinct chains exist.
std::vector<Example> make_questions(const SyntheticWorld& world, int n, std::uint64_t seed,
                                    std::vector<std::string> relation_path = {});

std::string chain_question(std::string_view start, const std::vector<std::string>& relations);

/// Start entity named by a chain question, if the text has that shape.
std::optional<std::string> chain_start_entity(std::string_view question);

nlohmann::json world_to_json(const SyntheticWorld& world);
SyntheticWorld world_from_json(const nlohmann::json& j);

} // namespace exsearch
