#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "exsearch/types.hpp"

namespace exsearch {

// Canonical action tags. <FINAL> is also accepted as <Final> or <FINIAL> on parse.
inline constexpr std::string_view kThinkTag = "<THINK>";
inline constexpr std::string_view kSearchTag = "<SEARCH>";
inline constexpr std::string_view kRecordTag = "<RECORD>";
inline constexpr std::string_view kRankTag = "<RANK>";
inline constexpr std::string_view kFinalTag = "<FINAL>";

/// Renders the interleaved action transcript, one LF-terminated line per
/// action. <SEARCH> cites the 1-based ranks of the selected passages when a
/// selection exists, otherwise of every retrieved passage.
std::string render_transcript(const Trajectory& trajectory, const std::optional<std::string>& answer);

struct ParsedStep {
    int hop = 1;
    std::string sub_query;
    std::vector<int> citations;
    std::optional<std::vector<int>> ranking; // from a <RANK> line
    std::string evidence;
};

struct ParsedTranscript {
    std::vector<ParsedStep> steps;
    std::optional<std::string> answer;
    std::size_t skipped_lines = 0; // lines outside the action grammar
};

/// Parses a whole transcript. Throws MalformedAction when <THINK> or <RANK>
/// carries no payload, or when <FINAL> has neither a payload nor trailing
/// answer text. An empty <SEARCH> or <RECORD> payload encodes an empty
/// retrieval and is accepted.
ParsedTranscript parse_transcript(std::string_view text);

/// Rebuilds a trajectory from a parsed transcript. Passage ids are the
/// citation numbers as strings and scores are zero; citations that are not
/// exactly 1..n become a selection over placeholder ranks 1..max.
Trajectory to_trajectory(const ParsedTranscript& parsed, std::string question, int budget);

/// Hops (1-based) whose sub-query or recorded evidence repeats an earlier hop.
std::vector<int> redundant_hops(const ParsedTranscript& parsed);

/// Answer text of a <FINAL> block: the tag payload when present, otherwise
/// the last "Output:" line, otherwise the last non-tag line.
std::optional<std::string> extract_final_answer(std::string_view payload, const std::vector<std::string>& following);

} // namespace exsearch
