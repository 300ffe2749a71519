#include "exsearch/transcript.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "exsearch/errors.hpp"

namespace exsearch {
namespace {

enum class Tag { None, Think, Search, Record, Rank, Final };

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

bool starts_with_ci(std::string_view s, std::string_view prefix) {
    if (s.size() < prefix.size()) return false;
    for (std::size_t i = 0; i < prefix.size(); ++i) {
        if (std::tolower(static_cast<unsigned char>(s[i])) != std::tolower(static_cast<unsigned char>(prefix[i])))
            return false;
    }
    return true;
}

// Splits a line into its tag and payload.
std::pair<Tag, std::string_view> classify(std::string_view line) {
    std::string_view s = trim(line);
    struct Entry {
        std::string_view text;
        Tag tag;
        bool any_case;
    };
    static constexpr Entry kTags[] = {
        {"<THINK>", Tag::Think, false},  {"<SEARCH>", Tag::Search, false}, {"<RECORD>", Tag::Record, false},
        {"<RANK>", Tag::Rank, false},    {"<FINAL>", Tag::Final, true},    {"<FINIAL>", Tag::Final, true},
    };
    for (const auto& e : kTags) {
        bool hit = e.any_case ? starts_with_ci(s, e.text) : s.substr(0, e.text.size()) == e.text;
        if (hit) return {e.tag, trim(s.substr(e.text.size()))};
    }
    return {Tag::None, s};
}

std::vector<int> bracket_numbers(std::string_view s) {
    std::vector<int> out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] != '[') continue;
        std::size_t j = i + 1;
        int value = 0;
        while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j])) && j - i <= 9) {
            value = value * 10 + (s[j] - '0');
            ++j;
        }
        if (j > i + 1 && j < s.size() && s[j] == ']') {
            out.push_back(value);
            i = j;
        }
    }
    return out;
}

std::string one_line(std::string_view s) {
    std::string out(s);
    std::replace(out.begin(), out.end(), '\n', ' ');
    std::replace(out.begin(), out.end(), '\r', ' ');
    return out;
}

void emit(std::string& out, std::string_view tag, std::string_view payload) {
    out += tag;
    if (!payload.empty()) {
        out += ' ';
        out += one_line(payload);
    }
    out += '\n';
}

} // namespace

std::string render_transcript(const Trajectory& trajectory, const std::optional<std::string>& answer) {
    std::string out;
    for (const Step& step : trajectory.steps) {
        emit(out, kThinkTag, step.sub_query);
        std::string cites;
        auto cite = [&](int rank) {
            if (!cites.empty()) cites += ' ';
            cites += '[' + std::to_string(rank) + ']';
        };
        if (step.selected) {
            for (const auto& id : *step.selected) {
                for (const auto& p : step.retrieved) {
                    if (p.id == id) {
                        cite(p.rank);
                        break;
                    }
                }
            }
        } else {
            for (const auto& p : step.retrieved) cite(p.rank);
        }
        emit(out, kSearchTag, cites);
        emit(out, kRecordTag, step.evidence);
    }
    if (answer) emit(out, kFinalTag, *answer);
    return out;
}

std::optional<std::string> extract_final_answer(std::string_view payload, const std::vector<std::string>& following) {
    if (!trim(payload).empty()) return std::string(trim(payload));
    std::optional<std::string> output_line;
    std::optional<std::string> last_line;
    for (const auto& raw : following) {
        auto [tag, body] = classify(raw);
        if (tag != Tag::None || body.empty()) continue;
        if (starts_with_ci(body, "Output:")) output_line = std::string(trim(body.substr(7)));
        last_line = std::string(body);
    }
    if (output_line && !output_line->empty()) return output_line;
    return last_line;
}

ParsedTranscript parse_transcript(std::string_view text) {
    std::vector<std::string> lines;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(start, end - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        lines.emplace_back(line);
        start = end + 1;
    }

    ParsedTranscript out;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        auto [tag, payload] = classify(lines[i]);
        switch (tag) {
        case Tag::None:
            if (!payload.empty()) ++out.skipped_lines;
            break;
        case Tag::Think:
            if (payload.empty()) throw MalformedAction("<THINK> without a sub-query on line " + std::to_string(i + 1));
            out.steps.push_back(ParsedStep{static_cast<int>(out.steps.size()) + 1, std::string(payload), {}, {}, {}});
            break;
        case Tag::Search:
            if (out.steps.empty()) {
                ++out.skipped_lines;
                break;
            }
            out.steps.back().citations = bracket_numbers(payload);
            break;
        case Tag::Rank: {
            if (payload.empty()) throw MalformedAction("<RANK> without a ranking on line " + std::to_string(i + 1));
            if (out.steps.empty()) {
                ++out.skipped_lines;
                break;
            }
            out.steps.back().ranking = bracket_numbers(payload);
            break;
        }
        case Tag::Record:
            if (out.steps.empty()) {
                ++out.skipped_lines;
                break;
            }
            out.steps.back().evidence = std::string(payload);
            break;
        case Tag::Final: {
            std::vector<std::string> rest(lines.begin() + static_cast<std::ptrdiff_t>(i) + 1, lines.end());
            out.answer = extract_final_answer(payload, rest);
            if (!out.answer) throw MalformedAction("<FINAL> without an answer on line " + std::to_string(i + 1));
            return out;
        }
        }
    }
    return out;
}

Trajectory to_trajectory(const ParsedTranscript& parsed, std::string question, int budget) {
    Trajectory t;
    t.question = std::move(question);
    t.budget = std::max<int>(budget, static_cast<int>(parsed.steps.size()));
    t.terminated = true;
    for (const auto& ps : parsed.steps) {
        Step step;
        step.hop = ps.hop;
        step.sub_query = ps.sub_query;
        step.evidence = ps.evidence;
        int max_cite = 0;
        bool is_prefix = true;
        for (std::size_t i = 0; i < ps.citations.size(); ++i) {
            max_cite = std::max(max_cite, ps.citations[i]);
            is_prefix = is_prefix && ps.citations[i] == static_cast<int>(i) + 1;
        }
        for (int r = 1; r <= max_cite; ++r) step.retrieved.push_back(ScoredPassage{std::to_string(r), 0.0, r});
        if (!is_prefix) {
            std::vector<std::string> selected;
            std::set<int> seen;
            for (int c : ps.citations) {
                if (c >= 1 && seen.insert(c).second) selected.push_back(std::to_string(c));
            }
            step.selected = std::move(selected);
        }
        t.steps.push_back(std::move(step));
    }
    return t;
}

std::vector<int> redundant_hops(const ParsedTranscript& parsed) {
    std::vector<int> out;
    std::set<std::string> queries;
    std::set<std::string> evidence;
    for (const auto& s : parsed.steps) {
        bool repeat = queries.count(s.sub_query) > 0 || (!s.evidence.empty() && evidence.count(s.evidence) > 0);
        if (repeat) out.push_back(s.hop);
        queries.insert(s.sub_query);
        if (!s.evidence.empty()) evidence.insert(s.evidence);
    }
    return out;
}

} // namespace exsearch
