#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace rankpipe {

/// Routing signals attached to sub-queries and carried through to re-ranking.
enum class IntentDimension { HighFreshness, Authoritativeness, PersonalExperience };

using IntentSet = std::set<IntentDimension>;

enum class QueryType { Complex, BroadNeeds, Simple };

/// Axis a four-tier grade applies to.
enum class GradeDimension { Relevance, Quality };

/**
 * Four-tier grade for a cover image. Values 1..4, where 1..2 form the
 * unfavorable band and 3..4 the favorable band.
 */
struct Grade {
    int value = 1;
    GradeDimension dimension = GradeDimension::Relevance;

    friend bool operator==(const Grade&, const Grade&) = default;
};

/// True iff the grade sits in the unfavorable band {1,2}.
inline bool grade_in_low_band(int value) { return value <= 2; }

/// True iff exactly one of the two grade values falls in the unfavorable band.
inline bool crosses_boundary(int a, int b) {
    return grade_in_low_band(a) != grade_in_low_band(b);
}

/**
 * A user query together with the session history that preceded it,
 * oldest entry first.
 */
struct Query {
    std::string text;
    std::vector<std::string> session;

    friend bool operator==(const Query&, const Query&) = default;
};

struct SubQuery {
    std::string text;
    IntentSet dimensions;

    friend bool operator==(const SubQuery&, const SubQuery&) = default;
};

/// Behavioral and temporal signals beyond title/content.
struct SideInfo {
    std::int64_t publish_time = 0;      // seconds since epoch
    double click_through_rate = 0.0;    // [0,1]
    double completion_rate = 0.0;       // [0,1]

    friend bool operator==(const SideInfo&, const SideInfo&) = default;
};

/**
 * One retrievable document. Cover grades are optional: candidates exist
 * both before and after the visual-assessment stage, and an absent grade
 * means "no visual signal", never a default value.
 */
struct Candidate {
    std::string id;
    std::string title;
    std::string content;
    SideInfo side;
    std::optional<std::string> cover_image_ref;
    std::optional<Grade> relevance_grade;
    std::optional<Grade> quality_grade;
    IntentSet source_subquery_dimensions;

    friend bool operator==(const Candidate&, const Candidate&) = default;
};

struct CandidateSet {
    Query query;
    std::vector<Candidate> candidates;

    friend bool operator==(const CandidateSet&, const CandidateSet&) = default;
};

/// An ordered list of candidate ids. Ids are opaque strings, never positions.
struct Ranking {
    std::vector<std::string> ids;

    friend bool operator==(const Ranking&, const Ranking&) = default;
};

/**
 * Checks every CandidateSet invariant and returns one message per violation.
 * An empty result means the set is well formed. Violations are data, not
 * failures; nothing here throws.
 */
std::vector<std::string> validate_candidate_set(const CandidateSet& set);

/// True iff ranking.ids is exactly a permutation of the set's candidate ids.
bool is_permutation(const Ranking& ranking, const CandidateSet& set);

/// Same check against a plain id list (used where no full set is at hand).
bool is_permutation_of_ids(const std::vector<std::string>& ranking_ids,
                           const std::vector<std::string>& set_ids);

const char* to_string(IntentDimension d);
const char* to_string(QueryType t);
const char* to_string(GradeDimension d);

std::optional<IntentDimension> intent_dimension_from_string(const std::string& s);
std::optional<QueryType> query_type_from_string(const std::string& s);

}  // namespace rankpipe
