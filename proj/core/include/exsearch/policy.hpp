#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "exsearch/rng.hpp"
#include "exsearch/types.hpp"

namespace exsearch {

/// Log-probability floor standing in for log(0).
inline constexpr double kLogProbFloor = -1e9;

/// Conditioning context of the think action.
struct PolicyState {
    std::string_view question;
    const Trajectory* history = nullptr;
    int hop = 1; // == history->steps.size() + 1
};

struct RetrievedPassage {
    Passage passage;
    double score = 0.0;
    int rank = 0;
};

struct PolicyDecision {
    enum class Kind { SubQuery, Stop, Evidence, Answer };

    Kind kind = Kind::Stop;
    std::string text;
    double log_prob = 0.0; // natural log; 0 when the backend does not report it

    bool is_stop() const noexcept { return kind == Kind::Stop; }
};

/// Decision-making backend of the search loop.
class Policy {
public:
    virtual ~Policy() = default;

    virtual PolicyDecision propose_subquery(const PolicyState& state, Rng& rng) const = 0;

    /// Throws NoDocuments when `retrieved` is empty.
    virtual PolicyDecision extract_evidence(const PolicyState& state, std::string_view sub_query,
                                            std::span<const RetrievedPassage> retrieved, Rng& rng) const = 0;

    virtual PolicyDecision answer(std::string_view question, const Trajectory& trajectory, Rng& rng) const = 0;

    /// log p(y | x, z); kLogProbFloor when y has no mass.
    virtual double score_answer(std::string_view question, const Trajectory& trajectory, std::string_view y) const = 0;

    /// Raw ranking output in the "[i] > [j] > ..." form.
    virtual std::string rank(std::string_view question, std::string_view sub_query,
                             std::span<const RetrievedPassage> retrieved) const = 0;
};

} // namespace exsearch
