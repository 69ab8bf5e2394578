#pragma once

#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "rankpipe/backend.hpp"
#include "rankpipe/grpo.hpp"
#include "rankpipe/serde.hpp"

namespace rankpipe {

struct BackendConfig {
    std::string endpoint = "http://127.0.0.1:8080/v1/generate";
    int timeout_ms = 5000;
    int max_attempts = 3;
    int backoff_ms = 50;
};

struct PipelineConfig {
    int retrieval_k = 10;
    GammaWeights gammas;
    double rbo_p = kDefaultRboP;
    double consistency_threshold = 0.9;
    bool consistency_normalized = true;  // length-independent thresholds
    int consistency_samples = 4;
    BackendConfig backend;
    int concurrency = 4;
    std::uint64_t seed = 0;
    std::string template_dir = "templates";
    GrpoConfig grpo;
};

PipelineConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PipelineConfig& config);

/// Reads and validates a JSON config file; throws ConfigError.
PipelineConfig load_config(const std::string& path);
void validate_config(const PipelineConfig& config);

inline RetryPolicy retry_policy(const PipelineConfig& config) {
    return RetryPolicy{config.backend.max_attempts, config.backend.backoff_ms};
}

// ---------------------------------------------------------------------------
// End-to-end orchestration
// ---------------------------------------------------------------------------

/**
 * Everything needed to audit one pipeline run offline: replaying the
 * recorded re-ranker response through the parser reproduces the output
 * ranking (or the flagged input-order fallback).
 */
struct ProvenanceRecord {
    Query query;
    SubQueryPlan plan;
    CandidateSet merged;  // candidate set as re-ranked, cover grades filled
    std::string reranker_raw_text;
    RerankFormatClass reranker_format = RerankFormatClass::NoValidAnswer;
    bool fallback = false;
    std::string backend_id;
    Ranking ranking;
};

nlohmann::json to_json(const ProvenanceRecord& record);

/// Re-derives the output ranking from provenance alone.
Ranking rederive_ranking(const ProvenanceRecord& record);

struct PipelineResult {
    Ranking ranking;
    ProvenanceRecord provenance;
};

/// plan -> retrieve per sub-query -> merge -> assess covers -> re-rank.
PipelineResult run_pipeline(const Query& query, const PipelineConfig& config,
                            Backend& backend, Retriever& retriever);

/// Runs queries concurrently up to config.concurrency; results keep input
/// order, so output bytes do not depend on scheduling.
std::vector<PipelineResult> run_batch(const std::vector<Query>& queries,
                                      const PipelineConfig& config,
                                      Backend& backend, Retriever& retriever);

// ---------------------------------------------------------------------------
// Offline evaluation
// ---------------------------------------------------------------------------

struct QueryMetrics {
    double ndcg4 = 0.0;
    double ndcg10 = 0.0;
    double recall4 = 0.0;
    double recall10 = 0.0;
    double rbo = 0.0;
};

struct EvalEntry {
    std::size_t index = 0;
    QueryType query_type = QueryType::Simple;
    QueryMetrics metrics;
};

struct EvalReport {
    std::vector<EvalEntry> per_query;
    std::vector<std::pair<std::size_t, std::string>> errors;
    QueryMetrics overall_mean;
    std::map<QueryType, QueryMetrics> per_type_mean;
    std::map<QueryType, std::size_t> per_type_count;
};

/// Produces the prediction for one dataset record.
using PredFn = std::function<Ranking(const DatasetRecord&, std::size_t index)>;

/// Uses the record's stored `pred`; records without one become error entries.
PredFn stored_pred_source();

/// Assesses covers and re-ranks the record's own candidate set through a
/// backend (retrieval is skipped; the set is given).
PredFn backend_pred_source(Backend& backend, const PipelineConfig& config);

/**
 * Five metrics per query (cutoffs 4 and 10 clamped to n) aggregated overall
 * and per query type. Queries whose prediction fails the permutation
 * contract become error entries and are excluded from means. An empty
 * dataset is an error.
 */
EvalReport evaluate_dataset(const std::vector<DatasetRecord>& records,
                            const PredFn& pred, const PipelineConfig& config);

nlohmann::json report_to_json(const EvalReport& report);
std::string render_report_table(const EvalReport& report);

// ---------------------------------------------------------------------------
// Teacher-data synthesis
// ---------------------------------------------------------------------------

struct ConsistencyResult {
    std::vector<double> scores;           // per group
    std::vector<std::size_t> retained;    // indices with score >= threshold
};

/**
 * Per-group score = mean pairwise RBO over all unordered pairs; truncated
 * RBO by default, optionally normalized by (1 - p^n) so identical lists
 * score 1 regardless of length. Groups must hold >= 2 rankings over one
 * shared id set.
 */
ConsistencyResult consistency_filter(
    const std::vector<std::vector<Ranking>>& answer_groups, double threshold,
    double rbo_p = kDefaultRboP, bool normalized = false);

struct SynthesisOutcome {
    std::vector<DatasetRecord> retained;
    std::vector<double> scores;  // per retained record, same order
    std::vector<std::pair<std::size_t, std::string>> dropped;  // input index
};

/**
 * For each set, issues `m` re-rank requests: the first with the canonical
 * candidate order, the rest with seeded shuffles. Groups whose responses
 * all parse cleanly are scored with the consistency filter; retained sets
 * get the canonical-order response as their label. Sets with any unusable
 * response are dropped with a reason.
 */
SynthesisOutcome synthesize_teacher_dataset(const std::vector<CandidateSet>& sets,
                                            Backend& teacher, int m,
                                            double threshold,
                                            const PipelineConfig& config);

}  // namespace rankpipe
