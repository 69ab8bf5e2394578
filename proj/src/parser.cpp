#include "rankpipe/parser.hpp"

#include <cctype>
#include <charconv>
#include <limits>

namespace rankpipe {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) {
        s.remove_prefix(1);
    }
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) {
        s.remove_suffix(1);
    }
    return s;
}

// First well-nested <tag>...</tag> pair; case-sensitive literal match.
std::optional<std::string> first_tag_pair(std::string_view text,
                                          std::string_view open,
                                          std::string_view close) {
    const auto start = text.find(open);
    if (start == std::string_view::npos) return std::nullopt;
    const auto body_begin = start + open.size();
    const auto end = text.find(close, body_begin);
    if (end == std::string_view::npos) return std::nullopt;
    return std::string(text.substr(body_begin, end - body_begin));
}

std::optional<long long> parse_integer(std::string_view s) {
    s = trim(s);
    if (s.empty()) return std::nullopt;
    long long value = 0;
    const char* begin = s.data();
    const char* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec == std::errc::result_out_of_range && ptr == end) {
        // Still a bare integer, just a huge one; saturate.
        return s.front() == '-' ? std::numeric_limits<long long>::min()
                                : std::numeric_limits<long long>::max();
    }
    if (ec != std::errc() || ptr != end) return std::nullopt;
    return value;
}

int saturate_to_int(long long v) {
    if (v > std::numeric_limits<int>::max()) return std::numeric_limits<int>::max();
    if (v < std::numeric_limits<int>::min()) return std::numeric_limits<int>::min();
    return static_cast<int>(v);
}

// Bracketed, comma-separated id tokens; no nested structures, tokens
// whitespace-trimmed and non-empty. nullopt when the text is not a list.
std::optional<std::vector<std::string>> parse_id_list(std::string_view s) {
    s = trim(s);
    if (s.size() < 2 || s.front() != '[' || s.back() != ']') return std::nullopt;
    std::string_view inner = s.substr(1, s.size() - 2);
    if (inner.find('[') != std::string_view::npos ||
        inner.find(']') != std::string_view::npos) {
        return std::nullopt;
    }

    std::vector<std::string> ids;
    if (trim(inner).empty()) return ids;  // "[]" is a (degenerate) empty list

    std::size_t pos = 0;
    while (true) {
        const auto comma = inner.find(',', pos);
        std::string_view token = comma == std::string_view::npos
                                     ? inner.substr(pos)
                                     : inner.substr(pos, comma - pos);
        token = trim(token);
        if (token.empty()) return std::nullopt;
        ids.emplace_back(token);
        if (comma == std::string_view::npos) break;
        pos = comma + 1;
    }
    return ids;
}

}  // namespace

TaggedSections extract_tagged_sections(std::string_view text) {
    TaggedSections out;
    out.think = first_tag_pair(text, "<think>", "</think>");
    out.answer = first_tag_pair(text, "<answer>", "</answer>");
    return out;
}

ParsedGradingResponse parse_grading(std::string_view text) {
    ParsedGradingResponse out;
    auto sections = extract_tagged_sections(text);
    out.think_text = std::move(sections.think);
    out.answer_raw = std::move(sections.answer);
    if (!out.answer_raw) {
        out.format_class = GradingFormatClass::NoValidAnswer;
        return out;
    }
    if (auto value = parse_integer(*out.answer_raw)) {
        out.grade = saturate_to_int(*value);
        out.format_class = GradingFormatClass::ValidAnswer;
    } else {
        out.format_class = GradingFormatClass::NonIntegerAnswer;
    }
    return out;
}

ParsedRerankResponse parse_rerank_ids(std::string_view text,
                                      const std::vector<std::string>& set_ids) {
    ParsedRerankResponse out;
    auto sections = extract_tagged_sections(text);
    out.think_text = std::move(sections.think);
    out.answer_raw = std::move(sections.answer);
    if (!out.answer_raw) {
        out.format_class = RerankFormatClass::NoValidAnswer;
        return out;
    }
    auto ids = parse_id_list(*out.answer_raw);
    if (!ids) {
        out.format_class = RerankFormatClass::NoValidAnswer;
        return out;
    }
    out.ids = std::move(*ids);
    out.format_class = is_permutation_of_ids(*out.ids, set_ids)
                           ? RerankFormatClass::ValidAnswer
                           : RerankFormatClass::DegenerateList;
    return out;
}

ParsedRerankResponse parse_rerank(std::string_view text, const CandidateSet& set) {
    std::vector<std::string> set_ids;
    set_ids.reserve(set.candidates.size());
    for (const auto& c : set.candidates) set_ids.push_back(c.id);
    return parse_rerank_ids(text, set_ids);
}

const char* to_string(GradingFormatClass c) {
    switch (c) {
        case GradingFormatClass::NoValidAnswer: return "NoValidAnswer";
        case GradingFormatClass::NonIntegerAnswer: return "NonIntegerAnswer";
        case GradingFormatClass::ValidAnswer: return "ValidAnswer";
    }
    return "?";
}

const char* to_string(RerankFormatClass c) {
    switch (c) {
        case RerankFormatClass::NoValidAnswer: return "NoValidAnswer";
        case RerankFormatClass::DegenerateList: return "DegenerateList";
        case RerankFormatClass::ValidAnswer: return "ValidAnswer";
    }
    return "?";
}

}  // namespace rankpipe
