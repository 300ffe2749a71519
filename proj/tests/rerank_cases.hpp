#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace exsearch::testing {

// Model output, passage count n, keep m, expected ids (passage i is the letter 'a' + i - 1).
struct RankCase {
    std::string output;
    std::size_t n;
    std::size_t m;
    std::vector<std::string> expected;
};

inline std::vector<RankCase> rerank_cases() {
    return {
        {"[2] > [1] > [3]", 3, 2, {"b", "a"}},  // plain ranking, truncated
        {"[2] > [1] > [3]", 3, 3, {"b", "a", "c"}},  // full ranking
        {"[9] > [1]", 3, 2, {"a", "b"}},  // out of range dropped, filled
        {"", 3, 2, {"a", "b"}},  // empty output
        {"no ranking here", 3, 3, {"a", "b", "c"}},  // nothing parseable
        {"[2] > [2] > [3]", 3, 2, {"b", "c"}},  // duplicate dropped
        {"[0] > [3]", 3, 1, {"c"}},  // zero is out of range
        {"[3]>[1]", 3, 2, {"c", "a"}},  // no spaces
        {"[-1] > [2]", 3, 2, {"b", "a"}},  // negative ignored
        {"[1] > [2] > [3] > [4]", 4, 5, {"a", "b", "c", "d"}},  // m above n
        {"[4] > [9] > [4]", 5, 3, {"d", "a", "b"}},  // partial, then padded
        {"[2 > [1]", 3, 2, {"a", "b"}},  // broken bracket skipped
    };
}

inline std::vector<std::string> letter_ids(std::size_t n) {
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < n; ++i) ids.push_back(std::string(1, static_cast<char>('a' + i)));
    return ids;
}

} // namespace exsearch::testing
