#pragma once

#include <string>
#include <utility>
#include <vector>

#include "rankpipe/core.hpp"

namespace rankpipe {

class Backend;
struct RetryPolicy;

/// A classified query decomposed into executable sub-queries.
struct SubQueryPlan {
    Query original;
    QueryType query_type = QueryType::Simple;
    std::vector<SubQuery> subqueries;
};

/**
 * Plan invariant checks: non-empty sub-query list, non-empty texts, no two
 * sub-queries with identical text, Simple plans carry exactly one
 * sub-query, and only Simple sub-queries may omit intent dimensions.
 * Returns one message per violation.
 */
std::vector<std::string> validate_plan(const SubQueryPlan& plan);

/**
 * Deterministic keyword heuristics, the offline stand-in for a model
 * planner: comparison cues ("vs", "which is", "or ... better") classify as
 * Complex; guide-like suffixes, "travel", or single-token queries as
 * BroadNeeds; everything else as Simple. Sub-queries are templated from
 * the original text with fixed dimension defaults.
 */
SubQueryPlan rule_stub_plan(const Query& query);

/**
 * Delegates classification and decomposition to a planner backend and
 * validates the returned plan. Invariant-violating plans raise DataError
 * listing every violation; transport problems raise BackendError.
 */
SubQueryPlan plan(const Query& query, Backend& backend,
                  const RetryPolicy& retry);
SubQueryPlan plan(const Query& query, Backend& backend);

/// Parses a planner backend response ({"query_type", "subqueries": [...]}).
SubQueryPlan plan_from_response(const std::string& raw_text, const Query& original);

/// Serializes a plan the way planner backends are expected to answer.
std::string plan_to_response(const SubQueryPlan& plan);

/**
 * Union of per-sub-query retrieval results with id-based deduplication.
 * The first occurrence wins for content fields; intent dimensions
 * accumulate across every sub-query that retrieved the candidate (and any
 * dimensions the candidate already carried). Each retrieval list must hold
 * at most k results. An empty union raises DataError.
 */
CandidateSet merge_candidates(
    const Query& query,
    const std::vector<std::pair<SubQuery, std::vector<Candidate>>>& retrievals,
    int k);

inline constexpr const char* kPlannerTemplateId = "planner_v1";

}  // namespace rankpipe
