#include "exsearch/types.hpp"

#include <algorithm>
#include <stdexcept>

namespace exsearch {

void validate(const Trajectory& trajectory) {
    if (trajectory.budget < 1) throw std::invalid_argument("trajectory budget must be positive");
    if (static_cast<int>(trajectory.steps.size()) > trajectory.budget)
        throw std::invalid_argument("trajectory has more steps than its budget");
    for (std::size_t i = 0; i < trajectory.steps.size(); ++i) {
        const Step& step = trajectory.steps[i];
        if (step.hop != static_cast<int>(i) + 1)
            throw std::invalid_argument("hop indices must run 1..n in order");
        for (std::size_t r = 0; r < step.retrieved.size(); ++r) {
            if (step.retrieved[r].rank != static_cast<int>(r) + 1)
                throw std::invalid_argument("retrieved ranks must run 1..K without gaps");
        }
        if (step.selected) {
            for (const auto& id : *step.selected) {
                auto hit = std::find_if(step.retrieved.begin(), step.retrieved.end(),
                                        [&](const ScoredPassage& p) { return p.id == id; });
                if (hit == step.retrieved.end())
                    throw std::invalid_argument("selected id '" + id + "' is not among retrieved passages");
            }
        }
    }
}

std::string_view to_string(WeightMode mode) {
    switch (mode) {
    case WeightMode::PosteriorLogprob: return "posterior-logprob";
    case WeightMode::RewardEm: return "reward-em";
    case WeightMode::RewardAcc: return "reward-acc";
    case WeightMode::RewardF1: return "reward-f1";
    }
    return "posterior-logprob";
}

WeightMode weight_mode_from_string(std::string_view name) {
    if (name == "posterior-logprob") return WeightMode::PosteriorLogprob;
    if (name == "reward-em") return WeightMode::RewardEm;
    if (name == "reward-acc") return WeightMode::RewardAcc;
    if (name == "reward-f1") return WeightMode::RewardF1;
    throw std::invalid_argument("unknown weight mode '" + std::string(name) + "'");
}

} // namespace exsearch
