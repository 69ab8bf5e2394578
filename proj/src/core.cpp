#include "rankpipe/core.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace rankpipe {

namespace {

bool blank(const std::string& s) {
    return std::all_of(s.begin(), s.end(),
                       [](unsigned char c) { return std::isspace(c); });
}

bool rate_ok(double r) { return std::isfinite(r) && r >= 0.0 && r <= 1.0; }

}  // namespace

std::vector<std::string> validate_candidate_set(const CandidateSet& set) {
    std::vector<std::string> violations;

    if (blank(set.query.text)) {
        violations.push_back("query text is empty");
    }
    if (set.candidates.empty()) {
        violations.push_back("candidate set is empty");
    }

    std::unordered_set<std::string> seen;
    for (const auto& c : set.candidates) {
        if (!seen.insert(c.id).second) {
            violations.push_back("duplicate id " + c.id);
        }
        if (!rate_ok(c.side.click_through_rate)) {
            violations.push_back("candidate " + c.id +
                                 ": click_through_rate out of [0,1]");
        }
        if (!rate_ok(c.side.completion_rate)) {
            violations.push_back("candidate " + c.id +
                                 ": completion_rate out of [0,1]");
        }
        if (c.relevance_grade) {
            if (c.relevance_grade->value < 1 || c.relevance_grade->value > 4) {
                violations.push_back("candidate " + c.id +
                                     ": relevance grade out of [1,4]");
            }
            if (c.relevance_grade->dimension != GradeDimension::Relevance) {
                violations.push_back("candidate " + c.id +
                                     ": relevance grade carries wrong dimension");
            }
        }
        if (c.quality_grade) {
            if (c.quality_grade->value < 1 || c.quality_grade->value > 4) {
                violations.push_back("candidate " + c.id +
                                     ": quality grade out of [1,4]");
            }
            if (c.quality_grade->dimension != GradeDimension::Quality) {
                violations.push_back("candidate " + c.id +
                                     ": quality grade carries wrong dimension");
            }
        }
    }
    return violations;
}

bool is_permutation_of_ids(const std::vector<std::string>& ranking_ids,
                           const std::vector<std::string>& set_ids) {
    if (ranking_ids.size() != set_ids.size()) return false;
    std::unordered_map<std::string, int> counts;
    for (const auto& id : set_ids) ++counts[id];
    for (const auto& id : ranking_ids) {
        auto it = counts.find(id);
        if (it == counts.end() || it->second == 0) return false;
        --it->second;
    }
    return true;
}

bool is_permutation(const Ranking& ranking, const CandidateSet& set) {
    std::vector<std::string> set_ids;
    set_ids.reserve(set.candidates.size());
    for (const auto& c : set.candidates) set_ids.push_back(c.id);
    return is_permutation_of_ids(ranking.ids, set_ids);
}

const char* to_string(IntentDimension d) {
    switch (d) {
        case IntentDimension::HighFreshness: return "HighFreshness";
        case IntentDimension::Authoritativeness: return "Authoritativeness";
        case IntentDimension::PersonalExperience: return "PersonalExperience";
    }
    return "?";
}

const char* to_string(QueryType t) {
    switch (t) {
        case QueryType::Complex: return "Complex";
        case QueryType::BroadNeeds: return "BroadNeeds";
        case QueryType::Simple: return "Simple";
    }
    return "?";
}

const char* to_string(GradeDimension d) {
    return d == GradeDimension::Relevance ? "Relevance" : "Quality";
}

std::optional<IntentDimension> intent_dimension_from_string(const std::string& s) {
    if (s == "HighFreshness") return IntentDimension::HighFreshness;
    if (s == "Authoritativeness") return IntentDimension::Authoritativeness;
    if (s == "PersonalExperience") return IntentDimension::PersonalExperience;
    return std::nullopt;
}

std::optional<QueryType> query_type_from_string(const std::string& s) {
    if (s == "Complex") return QueryType::Complex;
    if (s == "BroadNeeds") return QueryType::BroadNeeds;
    if (s == "Simple") return QueryType::Simple;
    return std::nullopt;
}

}  // namespace rankpipe
