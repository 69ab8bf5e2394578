#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "rankpipe/core.hpp"
#include "rankpipe/parser.hpp"
#include "rankpipe/planner.hpp"

namespace rankpipe {

/// The three model roles behind the pipeline, plus the planner.
enum class BackendRole { Planner, VlmRelevance, VlmQuality, Reranker };

struct BackendRequest {
    BackendRole role = BackendRole::Planner;
    std::string template_id;
    nlohmann::json payload;
};

struct BackendResponse {
    std::string raw_text;  // unmodified model output; parsing happens elsewhere
    int latency_ms = 0;
    std::string backend_id;
};

/// Checks the payload fields the role requires (relevance needs query +
/// image locator, quality the image locator only, and so on).
std::vector<std::string> validate_request(const BackendRequest& request);

/// Transport-agnostic model client. Implementations throw BackendError.
class Backend {
public:
    virtual ~Backend() = default;
    virtual BackendResponse call(const BackendRequest& request) = 0;
    virtual std::string id() const = 0;
};

struct RetryPolicy {
    int max_attempts = 3;
    int backoff_ms = 50;
};

/// Retries retryable BackendErrors with linear backoff; request validation
/// happens once up front.
BackendResponse call_with_retry(Backend& backend, const BackendRequest& request,
                                const RetryPolicy& retry = {});

/// Stable digest over (role, template_id, canonicalized payload); keys the
/// replay store.
std::string request_digest(const BackendRequest& request);

std::uint64_t fnv1a64(std::string_view s);

/**
 * Fully deterministic in-process backend. The planner role answers with
 * the rule-stub plan; the VLM roles grade by a fixed hash of the image
 * locator (plus the query for relevance); the re-ranker sorts candidates
 * by (relevance grade, quality grade, click-through rate) descending with
 * input order as the tie-break.
 */
class StubBackend : public Backend {
public:
    BackendResponse call(const BackendRequest& request) override;
    std::string id() const override { return "stub"; }
};

/**
 * Record/replay over an append-only (digest, response) JSONL store. In
 * replay mode a missing digest is a non-retryable error; in record mode
 * calls go to the inner backend and land in the store, and an existing
 * digest short-circuits to the recorded response.
 */
class ReplayBackend : public Backend {
public:
    static ReplayBackend open_replay(const std::string& store_path);
    static ReplayBackend open_recording(const std::string& store_path,
                                        std::shared_ptr<Backend> inner);

    BackendResponse call(const BackendRequest& request) override;
    std::string id() const override;

    std::size_t recorded_count() const { return store_.size(); }

private:
    ReplayBackend() = default;

    std::string store_path_;
    std::unordered_map<std::string, std::string> store_;
    std::shared_ptr<Backend> inner_;  // null in replay mode
    // Recording mutates the store from concurrent batch workers.
    std::shared_ptr<std::mutex> mu_ = std::make_shared<std::mutex>();
};

struct HttpBackendConfig {
    std::string endpoint;      // e.g. http://127.0.0.1:8080/v1/generate
    int timeout_ms = 5000;
    std::string template_dir;  // optional: resolve template_id -> prompt text
};

/// Live transport: POSTs {role, template_id, payload} as JSON and expects
/// {"raw_text": ...} back. Timeouts, refusals, and non-2xx statuses map to
/// distinct BackendError kinds.
class HttpBackend : public Backend {
public:
    explicit HttpBackend(HttpBackendConfig config);
    BackendResponse call(const BackendRequest& request) override;
    std::string id() const override;

private:
    HttpBackendConfig config_;
    std::string host_;
    int port_ = 80;
    std::string path_;
};

// ---------------------------------------------------------------------------
// Role-level operations
// ---------------------------------------------------------------------------

struct CoverGrades {
    std::optional<Grade> relevance;
    std::optional<Grade> quality;
};

/**
 * Runs the two cover-image assessments for one candidate. Candidates
 * without a cover ref keep both grades absent; so do unparseable or
 * out-of-range answers (a fabricated grade would contaminate downstream
 * reward and evaluation data). Transport errors propagate.
 */
CoverGrades evaluate_cover(const Candidate& candidate, const Query& query,
                           Backend& backend, const RetryPolicy& retry = {});

struct RerankOutcome {
    Ranking ranking;
    bool fallback = false;  // true when the response was unusable
    RerankFormatClass format_class = RerankFormatClass::NoValidAnswer;
    BackendResponse response;
};

/**
 * Builds the listwise re-ranking payload (title, content, side info,
 * intent dimensions, and both cover grades per candidate), calls the
 * re-ranker role, and parses the answer. Unusable answers fall back to the
 * input order, flagged, never a crash; the returned ranking is always a
 * complete permutation of the set.
 */
RerankOutcome rerank(const CandidateSet& set, const Query& query,
                     const SubQueryPlan& plan, Backend& backend,
                     const RetryPolicy& retry = {});

// ---------------------------------------------------------------------------
// Retrieval interface (no real index; stub and replay stand-ins only)
// ---------------------------------------------------------------------------

class Retriever {
public:
    virtual ~Retriever() = default;
    virtual std::vector<Candidate> retrieve(const SubQuery& subquery, int k) = 0;
};

/// Hash-derived synthetic corpus: a sub-query deterministically maps to k
/// distinct documents out of corpus_size, and the same document keeps the
/// same fields no matter which sub-query retrieved it.
class StubRetriever : public Retriever {
public:
    explicit StubRetriever(std::uint64_t seed = 0, int corpus_size = 400)
        : seed_(seed), corpus_size_(corpus_size) {}

    std::vector<Candidate> retrieve(const SubQuery& subquery, int k) override;

    /// The fixed document behind a corpus index.
    Candidate corpus_doc(int index) const;

private:
    std::uint64_t seed_;
    int corpus_size_;
};

const char* to_string(BackendRole role);

inline constexpr const char* kVlmRelevanceTemplateId = "vlm_relevance_v1";
inline constexpr const char* kVlmQualityTemplateId = "vlm_quality_v1";
inline constexpr const char* kRerankTemplateId = "rerank_v1";

}  // namespace rankpipe
