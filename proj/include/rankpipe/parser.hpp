#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rankpipe/core.hpp"

namespace rankpipe {

enum class GradingFormatClass { NoValidAnswer, NonIntegerAnswer, ValidAnswer };
enum class RerankFormatClass { NoValidAnswer, DegenerateList, ValidAnswer };

/// Contents of the first well-nested <think> and <answer> pairs.
/// Unclosed or absent tags yield absent fields; absence is data.
struct TaggedSections {
    std::optional<std::string> think;
    std::optional<std::string> answer;
};

TaggedSections extract_tagged_sections(std::string_view text);

struct ParsedGradingResponse {
    std::optional<std::string> think_text;
    std::optional<std::string> answer_raw;
    std::optional<int> grade;  // present iff format_class == ValidAnswer
    GradingFormatClass format_class = GradingFormatClass::NoValidAnswer;
};

struct ParsedRerankResponse {
    std::optional<std::string> think_text;
    std::optional<std::string> answer_raw;
    std::optional<std::vector<std::string>> ids;
    RerankFormatClass format_class = RerankFormatClass::NoValidAnswer;
};

/**
 * Classifies a grading response. The grade is accepted whenever the answer
 * parses as a bare base-10 integer; range checking is the caller's concern
 * (an out-of-range integer is still format-valid and scores 0 task reward
 * downstream).
 */
ParsedGradingResponse parse_grading(std::string_view text);

/**
 * Classifies a re-ranking response against the target set. The answer must
 * be a bracketed, comma-separated id list; ids match set ids exactly after
 * whitespace trimming. A parseable list that is not a complete permutation
 * of the set (duplicate, unknown, or missing ids) is DegenerateList.
 */
ParsedRerankResponse parse_rerank(std::string_view text, const CandidateSet& set);

/// parse_rerank against a plain id list.
ParsedRerankResponse parse_rerank_ids(std::string_view text,
                                      const std::vector<std::string>& set_ids);

const char* to_string(GradingFormatClass c);
const char* to_string(RerankFormatClass c);

}  // namespace rankpipe
