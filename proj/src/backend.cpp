#include "rankpipe/backend.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <thread>

#include <httplib.h>

#include "rankpipe/errors.hpp"
#include "rankpipe/serde.hpp"

namespace rankpipe {

using nlohmann::json;

namespace {

constexpr std::int64_t kCorpusEpoch = 1700000000;  // synthetic time base

std::optional<Grade> grade_from_parse(const ParsedGradingResponse& parse,
                                      GradeDimension dim) {
    if (parse.format_class != GradingFormatClass::ValidAnswer) return std::nullopt;
    if (*parse.grade < 1 || *parse.grade > 4) return std::nullopt;
    return Grade{*parse.grade, dim};
}

json rerank_candidate_payload(const Candidate& c) {
    json j{{"id", c.id},
           {"title", c.title},
           {"content", c.content},
           {"side", to_json(c.side)},
           {"intent_dimensions", to_json(c.source_subquery_dimensions)}};
    j["relevance_grade"] =
        c.relevance_grade ? json(c.relevance_grade->value) : json(nullptr);
    j["quality_grade"] =
        c.quality_grade ? json(c.quality_grade->value) : json(nullptr);
    return j;
}

}  // namespace

std::vector<std::string> validate_request(const BackendRequest& request) {
    std::vector<std::string> problems;
    auto need = [&](const char* field) {
        if (!request.payload.contains(field)) {
            problems.push_back(std::string("payload missing '") + field + "'");
        }
    };
    switch (request.role) {
        case BackendRole::Planner:
            need("text");
            need("session");
            break;
        case BackendRole::VlmRelevance:
            need("query");
            need("image");
            break;
        case BackendRole::VlmQuality:
            need("image");
            break;
        case BackendRole::Reranker:
            need("query");
            need("candidates");
            break;
    }
    if (request.template_id.empty()) problems.push_back("empty template_id");
    return problems;
}

BackendResponse call_with_retry(Backend& backend, const BackendRequest& request,
                                const RetryPolicy& retry) {
    const auto problems = validate_request(request);
    if (!problems.empty()) {
        std::string msg = "invalid backend request:";
        for (const auto& p : problems) msg += " [" + p + "]";
        throw DataError(msg);
    }

    const int attempts = std::max(1, retry.max_attempts);
    for (int attempt = 1;; ++attempt) {
        try {
            return backend.call(request);
        } catch (const BackendError& e) {
            if (!e.retryable()) throw;
            if (attempt >= attempts) {
                throw BackendError(e.kind(), e.retryable(),
                                   std::string(e.what()) + " (after " +
                                       std::to_string(attempt) + " attempts)");
            }
            std::this_thread::sleep_for(
                std::chrono::milliseconds(retry.backoff_ms * attempt));
        }
    }
}

std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string request_digest(const BackendRequest& request) {
    std::string canonical = std::string(to_string(request.role)) + '\x1f' +
                            request.template_id + '\x1f' + request.payload.dump();
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(canonical)));
    return buf;
}

// ---------------------------------------------------------------------------
// StubBackend
// ---------------------------------------------------------------------------

BackendResponse StubBackend::call(const BackendRequest& request) {
    BackendResponse response;
    response.backend_id = id();
    response.latency_ms = 0;

    switch (request.role) {
        case BackendRole::Planner: {
            Query query;
            query.text = request.payload.at("text").get<std::string>();
            query.session =
                request.payload.at("session").get<std::vector<std::string>>();
            response.raw_text = plan_to_response(rule_stub_plan(query));
            break;
        }
        case BackendRole::VlmRelevance: {
            const auto image = request.payload.at("image").get<std::string>();
            const auto query = request.payload.at("query").get<std::string>();
            const int grade =
                static_cast<int>(fnv1a64(image + '\x1f' + query) % 4) + 1;
            response.raw_text = "<think>fixed hash of image and query</think>"
                                "<answer>" + std::to_string(grade) + "</answer>";
            break;
        }
        case BackendRole::VlmQuality: {
            const auto image = request.payload.at("image").get<std::string>();
            const int grade = static_cast<int>(fnv1a64(image) % 4) + 1;
            response.raw_text = "<think>fixed hash of image</think>"
                                "<answer>" + std::to_string(grade) + "</answer>";
            break;
        }
        case BackendRole::Reranker: {
            struct Entry {
                std::string id;
                int rel;
                int qual;
                double ctr;
                std::size_t pos;
            };
            std::vector<Entry> entries;
            for (const auto& c : request.payload.at("candidates")) {
                Entry e;
                e.id = c.at("id").get<std::string>();
                e.rel = c.at("relevance_grade").is_null()
                            ? 0
                            : c.at("relevance_grade").get<int>();
                e.qual = c.at("quality_grade").is_null()
                             ? 0
                             : c.at("quality_grade").get<int>();
                e.ctr = c.at("side").at("click_through_rate").get<double>();
                e.pos = entries.size();
                entries.push_back(std::move(e));
            }
            std::stable_sort(entries.begin(), entries.end(),
                             [](const Entry& a, const Entry& b) {
                                 if (a.rel != b.rel) return a.rel > b.rel;
                                 if (a.qual != b.qual) return a.qual > b.qual;
                                 return a.ctr > b.ctr;
                             });
            std::string list = "[";
            for (std::size_t i = 0; i < entries.size(); ++i) {
                if (i) list += ", ";
                list += entries[i].id;
            }
            list += "]";
            response.raw_text =
                "<think>sorted by cover grades and engagement</think>"
                "<answer>" + list + "</answer>";
            break;
        }
    }
    return response;
}

// ---------------------------------------------------------------------------
// ReplayBackend
// ---------------------------------------------------------------------------

ReplayBackend ReplayBackend::open_replay(const std::string& store_path) {
    ReplayBackend backend;
    backend.store_path_ = store_path;
    std::ifstream in(store_path);
    if (!in) {
        throw ConfigError("cannot open replay store: " + store_path);
    }
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const json j = decode_line(line, line_no);
        backend.store_[j.at("digest").get<std::string>()] =
            j.at("raw_text").get<std::string>();
    }
    return backend;
}

ReplayBackend ReplayBackend::open_recording(const std::string& store_path,
                                            std::shared_ptr<Backend> inner) {
    ReplayBackend backend;
    backend.store_path_ = store_path;
    backend.inner_ = std::move(inner);
    std::ifstream in(store_path);
    if (in) {  // resume an existing store
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            const json j = decode_line(line, line_no);
            backend.store_[j.at("digest").get<std::string>()] =
                j.at("raw_text").get<std::string>();
        }
    }
    return backend;
}

BackendResponse ReplayBackend::call(const BackendRequest& request) {
    const std::string digest = request_digest(request);
    {
        std::lock_guard<std::mutex> lock(*mu_);
        auto it = store_.find(digest);
        if (it != store_.end()) {
            return BackendResponse{it->second, 0, id()};
        }
    }
    if (!inner_) {
        throw BackendError(BackendErrorKind::Status, false,
                           "replay store has no response for digest " + digest);
    }
    BackendResponse response = inner_->call(request);
    std::lock_guard<std::mutex> lock(*mu_);
    if (store_.emplace(digest, response.raw_text).second) {
        std::ofstream out(store_path_, std::ios::app);
        if (!out) {
            throw BackendError(BackendErrorKind::Transport, false,
                               "cannot append to replay store: " + store_path_);
        }
        out << json{{"digest", digest},
                    {"raw_text", response.raw_text},
                    {"backend_id", response.backend_id}}
                   .dump()
            << '\n';
    }
    return BackendResponse{response.raw_text, 0, id()};
}

std::string ReplayBackend::id() const {
    return inner_ ? "record(" + inner_->id() + ")" : "replay";
}

// ---------------------------------------------------------------------------
// HttpBackend
// ---------------------------------------------------------------------------

HttpBackend::HttpBackend(HttpBackendConfig config) : config_(std::move(config)) {
    std::string rest = config_.endpoint;
    const std::string scheme = "http://";
    if (rest.rfind(scheme, 0) != 0) {
        throw ConfigError("http backend endpoint must start with http://");
    }
    rest = rest.substr(scheme.size());
    const auto slash = rest.find('/');
    std::string authority = slash == std::string::npos ? rest : rest.substr(0, slash);
    path_ = slash == std::string::npos ? "/" : rest.substr(slash);
    const auto colon = authority.find(':');
    if (colon == std::string::npos) {
        host_ = authority;
    } else {
        host_ = authority.substr(0, colon);
        port_ = std::stoi(authority.substr(colon + 1));
    }
    if (host_.empty()) throw ConfigError("http backend endpoint has no host");
}

std::string HttpBackend::id() const { return "http:" + host_; }

BackendResponse HttpBackend::call(const BackendRequest& request) {
    json body{{"role", to_string(request.role)},
              {"template_id", request.template_id},
              {"payload", request.payload}};
    if (!config_.template_dir.empty()) {
        std::ifstream tpl(config_.template_dir + "/" + request.template_id + ".txt");
        if (tpl) {
            std::string text((std::istreambuf_iterator<char>(tpl)),
                             std::istreambuf_iterator<char>());
            body["template_text"] = text;
        }
    }

    httplib::Client client(host_, port_);
    client.set_connection_timeout(config_.timeout_ms / 1000,
                                  (config_.timeout_ms % 1000) * 1000);
    client.set_read_timeout(config_.timeout_ms / 1000,
                            (config_.timeout_ms % 1000) * 1000);

    const auto start = std::chrono::steady_clock::now();
    auto result = client.Post(path_, body.dump(), "application/json");
    const auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
                             std::chrono::steady_clock::now() - start)
                             .count();

    if (!result) {
        const auto err = result.error();
        if (err == httplib::Error::ConnectionTimeout ||
            err == httplib::Error::Read || err == httplib::Error::Write) {
            throw BackendError(BackendErrorKind::Timeout, true,
                               "backend timeout: " + httplib::to_string(err));
        }
        throw BackendError(BackendErrorKind::Transport, true,
                           "backend transport failure: " + httplib::to_string(err));
    }
    if (result->status < 200 || result->status >= 300) {
        const bool retryable = result->status >= 500;
        throw BackendError(BackendErrorKind::Status, retryable,
                           "backend status " + std::to_string(result->status));
    }

    json j = json::parse(result->body, nullptr, false);
    if (j.is_discarded() || !j.contains("raw_text")) {
        throw BackendError(BackendErrorKind::Status, false,
                           "backend response body is not {raw_text: ...}");
    }
    return BackendResponse{j["raw_text"].get<std::string>(),
                           static_cast<int>(elapsed), id()};
}

// ---------------------------------------------------------------------------
// Role-level operations
// ---------------------------------------------------------------------------

CoverGrades evaluate_cover(const Candidate& candidate, const Query& query,
                           Backend& backend, const RetryPolicy& retry) {
    CoverGrades grades;
    if (!candidate.cover_image_ref) return grades;  // no cover, no signal

    BackendRequest rel_request;
    rel_request.role = BackendRole::VlmRelevance;
    rel_request.template_id = kVlmRelevanceTemplateId;
    rel_request.payload = {{"query", query.text},
                           {"image", *candidate.cover_image_ref}};
    const auto rel_response = call_with_retry(backend, rel_request, retry);
    grades.relevance =
        grade_from_parse(parse_grading(rel_response.raw_text),
                         GradeDimension::Relevance);

    BackendRequest qual_request;
    qual_request.role = BackendRole::VlmQuality;
    qual_request.template_id = kVlmQualityTemplateId;
    qual_request.payload = {{"image", *candidate.cover_image_ref}};
    const auto qual_response = call_with_retry(backend, qual_request, retry);
    grades.quality = grade_from_parse(parse_grading(qual_response.raw_text),
                                      GradeDimension::Quality);
    return grades;
}

RerankOutcome rerank(const CandidateSet& set, const Query& query,
                     const SubQueryPlan& plan, Backend& backend,
                     const RetryPolicy& retry) {
    if (set.candidates.empty()) throw DataError("cannot re-rank an empty set");

    json candidates = json::array();
    for (const auto& c : set.candidates) {
        candidates.push_back(rerank_candidate_payload(c));
    }
    json subqueries = json::array();
    for (const auto& sq : plan.subqueries) subqueries.push_back(to_json(sq));

    BackendRequest request;
    request.role = BackendRole::Reranker;
    request.template_id = kRerankTemplateId;
    request.payload = {{"query", query.text},
                       {"query_type", to_string(plan.query_type)},
                       {"subqueries", std::move(subqueries)},
                       {"candidates", std::move(candidates)}};

    RerankOutcome outcome;
    outcome.response = call_with_retry(backend, request, retry);

    const auto parsed = parse_rerank(outcome.response.raw_text, set);
    outcome.format_class = parsed.format_class;
    if (parsed.format_class == RerankFormatClass::ValidAnswer) {
        outcome.ranking.ids = *parsed.ids;
        outcome.fallback = false;
    } else {
        for (const auto& c : set.candidates) outcome.ranking.ids.push_back(c.id);
        outcome.fallback = true;
    }
    return outcome;
}

// ---------------------------------------------------------------------------
// StubRetriever
// ---------------------------------------------------------------------------

Candidate StubRetriever::corpus_doc(int index) const {
    const std::uint64_t h =
        fnv1a64("corpus:" + std::to_string(seed_) + ":" + std::to_string(index));
    Candidate c;
    c.id = "doc" + std::to_string(index);
    c.title = "Document " + std::to_string(index);
    c.content = "Synthetic body of document " + std::to_string(index);
    c.side.publish_time =
        kCorpusEpoch + static_cast<std::int64_t>(h % 10000000ull);
    c.side.click_through_rate =
        static_cast<double>((h >> 8) % 1000ull) / 999.0;
    c.side.completion_rate = static_cast<double>((h >> 24) % 1000ull) / 999.0;
    if ((h >> 40) % 5ull != 0) {  // roughly one in five has no cover
        c.cover_image_ref = "img://" + c.id;
    }
    return c;
}

std::vector<Candidate> StubRetriever::retrieve(const SubQuery& subquery, int k) {
    if (k > corpus_size_) {
        throw DataError("retrieval depth exceeds the stub corpus size");
    }
    std::vector<Candidate> results;
    std::vector<bool> taken(corpus_size_, false);
    for (int rank = 0; rank < k; ++rank) {
        const std::uint64_t h = fnv1a64(subquery.text + "\x1f" +
                                        std::to_string(seed_) + "\x1f" +
                                        std::to_string(rank));
        int index = static_cast<int>(h % static_cast<std::uint64_t>(corpus_size_));
        while (taken[index]) index = (index + 1) % corpus_size_;
        taken[index] = true;
        results.push_back(corpus_doc(index));
    }
    return results;
}

const char* to_string(BackendRole role) {
    switch (role) {
        case BackendRole::Planner: return "Planner";
        case BackendRole::VlmRelevance: return "VlmRelevance";
        case BackendRole::VlmQuality: return "VlmQuality";
        case BackendRole::Reranker: return "Reranker";
    }
    return "?";
}

}  // namespace rankpipe
