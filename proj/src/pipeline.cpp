#include "rankpipe/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <thread>

#include "rankpipe/errors.hpp"
#include "rankpipe/metrics.hpp"

namespace rankpipe {

using nlohmann::json;

namespace {

void check_known_keys(const json& j, std::initializer_list<const char*> known,
                      const std::string& scope) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (std::find_if(known.begin(), known.end(), [&](const char* k) {
                return it.key() == k;
            }) == known.end()) {
            throw ConfigError("unknown config key '" + scope + it.key() + "'");
        }
    }
}

QueryMetrics query_metrics(const Ranking& pred, const Ranking& label,
                           double rbo_p) {
    const int n = static_cast<int>(label.ids.size());
    QueryMetrics m;
    m.ndcg4 = ndcg_at_k(pred, label, std::min(4, n));
    m.ndcg10 = ndcg_at_k(pred, label, std::min(10, n));
    m.recall4 = recall_at_k(pred, label, std::min(4, n));
    m.recall10 = recall_at_k(pred, label, std::min(10, n));
    m.rbo = rbo(pred, label, rbo_p);
    return m;
}

QueryMetrics mean_of(const std::vector<const QueryMetrics*>& entries) {
    QueryMetrics sum;
    for (const auto* m : entries) {
        sum.ndcg4 += m->ndcg4;
        sum.ndcg10 += m->ndcg10;
        sum.recall4 += m->recall4;
        sum.recall10 += m->recall10;
        sum.rbo += m->rbo;
    }
    const double n = static_cast<double>(entries.size());
    return QueryMetrics{sum.ndcg4 / n, sum.ndcg10 / n, sum.recall4 / n,
                        sum.recall10 / n, sum.rbo / n};
}

json to_json(const QueryMetrics& m) {
    return json{{"ndcg4", m.ndcg4},
                {"ndcg10", m.ndcg10},
                {"recall4", m.recall4},
                {"recall10", m.recall10},
                {"rbo", m.rbo}};
}

void parallel_for(std::size_t count, int max_threads,
                  const std::function<void(std::size_t)>& body) {
    const int threads = static_cast<int>(
        std::min<std::size_t>(std::max(1, max_threads), count));
    if (threads <= 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mu;
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= count) return;
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mu);
                    if (!first_error) first_error = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

PipelineConfig config_from_json(const json& j) {
    check_known_keys(j,
                     {"retrieval_k", "gammas", "rbo_p", "consistency_threshold",
                      "consistency_normalized", "consistency_samples", "backend",
                      "concurrency", "seed", "template_dir", "grpo"},
                     "");
    PipelineConfig c;
    c.retrieval_k = j.value("retrieval_k", c.retrieval_k);
    if (j.contains("gammas")) {
        const auto& g = j["gammas"];
        check_known_keys(g, {"ndcg10", "recall10", "rbo", "ndcg4", "recall4"},
                         "gammas.");
        c.gammas.ndcg10 = g.value("ndcg10", c.gammas.ndcg10);
        c.gammas.recall10 = g.value("recall10", c.gammas.recall10);
        c.gammas.rbo = g.value("rbo", c.gammas.rbo);
        c.gammas.ndcg4 = g.value("ndcg4", c.gammas.ndcg4);
        c.gammas.recall4 = g.value("recall4", c.gammas.recall4);
    }
    c.rbo_p = j.value("rbo_p", c.rbo_p);
    c.consistency_threshold =
        j.value("consistency_threshold", c.consistency_threshold);
    c.consistency_normalized =
        j.value("consistency_normalized", c.consistency_normalized);
    c.consistency_samples = j.value("consistency_samples", c.consistency_samples);
    if (j.contains("backend")) {
        const auto& b = j["backend"];
        check_known_keys(b, {"endpoint", "timeout_ms", "max_attempts", "backoff_ms"},
                         "backend.");
        c.backend.endpoint = b.value("endpoint", c.backend.endpoint);
        c.backend.timeout_ms = b.value("timeout_ms", c.backend.timeout_ms);
        c.backend.max_attempts = b.value("max_attempts", c.backend.max_attempts);
        c.backend.backoff_ms = b.value("backoff_ms", c.backend.backoff_ms);
    }
    c.concurrency = j.value("concurrency", c.concurrency);
    c.seed = j.value("seed", c.seed);
    c.template_dir = j.value("template_dir", c.template_dir);
    if (j.contains("grpo")) {
        const auto& g = j["grpo"];
        check_known_keys(g,
                         {"group_size", "clip_epsilon", "kl_beta", "learning_rate",
                          "iterations", "seed"},
                         "grpo.");
        c.grpo.group_size = g.value("group_size", c.grpo.group_size);
        c.grpo.clip_epsilon = g.value("clip_epsilon", c.grpo.clip_epsilon);
        c.grpo.kl_beta = g.value("kl_beta", c.grpo.kl_beta);
        c.grpo.learning_rate = g.value("learning_rate", c.grpo.learning_rate);
        c.grpo.iterations = g.value("iterations", c.grpo.iterations);
        c.grpo.seed = g.value("seed", c.grpo.seed);
    }
    validate_config(c);
    return c;
}

json to_json(const PipelineConfig& c) {
    return json{
        {"retrieval_k", c.retrieval_k},
        {"gammas",
         {{"ndcg10", c.gammas.ndcg10},
          {"recall10", c.gammas.recall10},
          {"rbo", c.gammas.rbo},
          {"ndcg4", c.gammas.ndcg4},
          {"recall4", c.gammas.recall4}}},
        {"rbo_p", c.rbo_p},
        {"consistency_threshold", c.consistency_threshold},
        {"consistency_normalized", c.consistency_normalized},
        {"consistency_samples", c.consistency_samples},
        {"backend",
         {{"endpoint", c.backend.endpoint},
          {"timeout_ms", c.backend.timeout_ms},
          {"max_attempts", c.backend.max_attempts},
          {"backoff_ms", c.backend.backoff_ms}}},
        {"concurrency", c.concurrency},
        {"seed", c.seed},
        {"template_dir", c.template_dir},
        {"grpo",
         {{"group_size", c.grpo.group_size},
          {"clip_epsilon", c.grpo.clip_epsilon},
          {"kl_beta", c.grpo.kl_beta},
          {"learning_rate", c.grpo.learning_rate},
          {"iterations", c.grpo.iterations},
          {"seed", c.grpo.seed}}}};
}

void validate_config(const PipelineConfig& c) {
    auto fail = [](const std::string& msg) { throw ConfigError(msg); };
    if (c.retrieval_k < 1) fail("retrieval_k must be >= 1");
    if (!(c.rbo_p > 0.0 && c.rbo_p < 1.0)) fail("rbo_p must be in (0,1)");
    if (!(c.consistency_threshold > 0.0 && c.consistency_threshold <= 1.0)) {
        fail("consistency_threshold must be in (0,1]");
    }
    if (c.consistency_samples < 2) fail("consistency_samples must be >= 2");
    const auto& g = c.gammas;
    const double gs[] = {g.ndcg10, g.recall10, g.rbo, g.ndcg4, g.recall4};
    double total = 0.0;
    for (double v : gs) {
        if (!std::isfinite(v) || v < 0.0) fail("gamma weights must be finite and >= 0");
        total += v;
    }
    if (total <= 0.0) fail("at least one gamma weight must be > 0");
    if (c.concurrency < 1) fail("concurrency must be >= 1");
    if (c.backend.timeout_ms <= 0) fail("backend.timeout_ms must be > 0");
    if (c.backend.max_attempts < 1) fail("backend.max_attempts must be >= 1");
    if (c.grpo.group_size < 2) fail("grpo.group_size must be >= 2");
    if (!(c.grpo.clip_epsilon > 0.0)) fail("grpo.clip_epsilon must be > 0");
    if (c.grpo.kl_beta < 0.0) fail("grpo.kl_beta must be >= 0");
    if (!(c.grpo.learning_rate > 0.0)) fail("grpo.learning_rate must be > 0");
    if (c.grpo.iterations < 1) fail("grpo.iterations must be >= 1");
}

PipelineConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ConfigError("config file is not valid JSON: " + path);
    return config_from_json(j);
}

// ---------------------------------------------------------------------------
// Orchestration
// ---------------------------------------------------------------------------

json to_json(const ProvenanceRecord& r) {
    json subqueries = json::array();
    for (const auto& sq : r.plan.subqueries) subqueries.push_back(to_json(sq));
    return json{{"query", to_json(r.query)},
                {"plan",
                 {{"query_type", to_string(r.plan.query_type)},
                  {"subqueries", std::move(subqueries)}}},
                {"merged", to_json(r.merged)},
                {"reranker_raw_text", r.reranker_raw_text},
                {"reranker_format", to_string(r.reranker_format)},
                {"fallback", r.fallback},
                {"backend_id", r.backend_id},
                {"ranking", to_json(r.ranking)}};
}

Ranking rederive_ranking(const ProvenanceRecord& record) {
    const auto parsed = parse_rerank(record.reranker_raw_text, record.merged);
    if (parsed.format_class == RerankFormatClass::ValidAnswer) {
        return Ranking{*parsed.ids};
    }
    Ranking fallback;
    for (const auto& c : record.merged.candidates) fallback.ids.push_back(c.id);
    return fallback;
}

namespace {

// Tags propagated component errors with the pipeline stage they came from,
// preserving the error type (and retry classification for backend errors).
template <typename Fn>
auto stage(const char* name, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const BackendError& e) {
        throw BackendError(e.kind(), e.retryable(),
                           std::string(name) + " stage: " + e.what());
    } catch (const DataError& e) {
        throw DataError(std::string(name) + " stage: " + e.what());
    }
}

}  // namespace

PipelineResult run_pipeline(const Query& query, const PipelineConfig& config,
                            Backend& backend, Retriever& retriever) {
    const auto retry = retry_policy(config);

    const auto query_plan =
        stage("plan", [&] { return plan(query, backend, retry); });

    auto merged = stage("retrieve", [&] {
        std::vector<std::pair<SubQuery, std::vector<Candidate>>> retrievals;
        retrievals.reserve(query_plan.subqueries.size());
        for (const auto& sq : query_plan.subqueries) {
            retrievals.emplace_back(sq, retriever.retrieve(sq, config.retrieval_k));
        }
        return merge_candidates(query, retrievals, config.retrieval_k);
    });

    stage("cover", [&] {
        for (auto& candidate : merged.candidates) {
            const auto grades = evaluate_cover(candidate, query, backend, retry);
            candidate.relevance_grade = grades.relevance;
            candidate.quality_grade = grades.quality;
        }
        return 0;
    });

    const auto outcome = stage(
        "rerank", [&] { return rerank(merged, query, query_plan, backend, retry); });

    PipelineResult result;
    result.ranking = outcome.ranking;
    result.provenance = ProvenanceRecord{query,
                                         query_plan,
                                         std::move(merged),
                                         outcome.response.raw_text,
                                         outcome.format_class,
                                         outcome.fallback,
                                         outcome.response.backend_id,
                                         outcome.ranking};
    return result;
}

std::vector<PipelineResult> run_batch(const std::vector<Query>& queries,
                                      const PipelineConfig& config,
                                      Backend& backend, Retriever& retriever) {
    std::vector<PipelineResult> results(queries.size());
    parallel_for(queries.size(), config.concurrency, [&](std::size_t i) {
        results[i] = run_pipeline(queries[i], config, backend, retriever);
    });
    return results;
}

// ---------------------------------------------------------------------------
// Offline evaluation
// ---------------------------------------------------------------------------

PredFn stored_pred_source() {
    return [](const DatasetRecord& record, std::size_t) -> Ranking {
        if (!record.pred) throw DataError("record has no stored prediction");
        return *record.pred;
    };
}

PredFn backend_pred_source(Backend& backend, const PipelineConfig& config) {
    return [&backend, config](const DatasetRecord& record, std::size_t) -> Ranking {
        const auto retry = retry_policy(config);
        CandidateSet set = record.set;
        for (auto& candidate : set.candidates) {
            const auto grades =
                evaluate_cover(candidate, set.query, backend, retry);
            candidate.relevance_grade = grades.relevance;
            candidate.quality_grade = grades.quality;
        }
        const auto query_plan = plan(set.query, backend, retry);
        return rerank(set, set.query, query_plan, backend, retry).ranking;
    };
}

EvalReport evaluate_dataset(const std::vector<DatasetRecord>& records,
                            const PredFn& pred, const PipelineConfig& config) {
    if (records.empty()) throw DataError("no queries");

    EvalReport report;
    std::vector<std::optional<EvalEntry>> entries(records.size());
    std::vector<std::optional<std::string>> failures(records.size());

    parallel_for(records.size(), config.concurrency, [&](std::size_t i) {
        const auto& record = records[i];
        try {
            if (!is_permutation(record.label, record.set)) {
                throw DataError("label is not a permutation of the candidate set");
            }
            const Ranking prediction = pred(record, i);
            if (!is_permutation_of_ids(prediction.ids, record.label.ids)) {
                throw DataError("prediction does not cover the label id set");
            }
            entries[i] = EvalEntry{
                i, record.query_type,
                query_metrics(prediction, record.label, config.rbo_p)};
        } catch (const DataError& e) {
            failures[i] = e.what();
        }
    });

    for (std::size_t i = 0; i < records.size(); ++i) {
        if (failures[i]) {
            report.errors.emplace_back(i, *failures[i]);
        } else {
            report.per_query.push_back(*entries[i]);
        }
    }
    if (report.per_query.empty()) throw DataError("every query failed evaluation");

    std::vector<const QueryMetrics*> all;
    std::map<QueryType, std::vector<const QueryMetrics*>> by_type;
    for (const auto& entry : report.per_query) {
        all.push_back(&entry.metrics);
        by_type[entry.query_type].push_back(&entry.metrics);
    }

    report.overall_mean = mean_of(all);
    for (const auto& [type, ms] : by_type) {
        report.per_type_mean[type] = mean_of(ms);
        report.per_type_count[type] = ms.size();
    }
    return report;
}

json report_to_json(const EvalReport& report) {
    json per_query = json::array();
    for (const auto& e : report.per_query) {
        json j = to_json(e.metrics);
        j["index"] = e.index;
        j["query_type"] = to_string(e.query_type);
        per_query.push_back(std::move(j));
    }
    json errors = json::array();
    for (const auto& [index, message] : report.errors) {
        errors.push_back({{"index", index}, {"error", message}});
    }
    json per_type = json::object();
    for (const auto& [type, mean] : report.per_type_mean) {
        json j = to_json(mean);
        j["count"] = report.per_type_count.at(type);
        per_type[to_string(type)] = std::move(j);
    }
    return json{{"per_query", std::move(per_query)},
                {"errors", std::move(errors)},
                {"overall", to_json(report.overall_mean)},
                {"per_type", std::move(per_type)}};
}

std::string render_report_table(const EvalReport& report) {
    std::ostringstream out;
    auto row = [&](const std::string& name, const QueryMetrics& m,
                   std::size_t count) {
        out << std::left << std::setw(12) << name << std::right << std::fixed
            << std::setprecision(4) << std::setw(9) << m.ndcg4 << std::setw(9)
            << m.ndcg10 << std::setw(9) << m.recall4 << std::setw(9) << m.recall10
            << std::setw(9) << m.rbo << std::setw(8) << count << '\n';
    };
    out << std::left << std::setw(12) << "query type" << std::right
        << std::setw(9) << "N@4" << std::setw(9) << "N@10" << std::setw(9)
        << "R@4" << std::setw(9) << "R@10" << std::setw(9) << "RBO"
        << std::setw(8) << "count" << '\n';
    for (const auto& [type, mean] : report.per_type_mean) {
        row(to_string(type), mean, report.per_type_count.at(type));
    }
    row("Overall", report.overall_mean, report.per_query.size());
    if (!report.errors.empty()) {
        out << report.errors.size() << " queries excluded due to errors\n";
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// Teacher-data synthesis
// ---------------------------------------------------------------------------

ConsistencyResult consistency_filter(
    const std::vector<std::vector<Ranking>>& answer_groups, double threshold,
    double rbo_p, bool normalized) {
    ConsistencyResult result;
    result.scores.reserve(answer_groups.size());
    for (std::size_t gi = 0; gi < answer_groups.size(); ++gi) {
        const auto& group = answer_groups[gi];
        if (group.size() < 2) {
            throw DataError("consistency group " + std::to_string(gi) +
                            " needs at least 2 rankings");
        }
        for (std::size_t i = 1; i < group.size(); ++i) {
            if (!is_permutation_of_ids(group[i].ids, group[0].ids)) {
                throw DataError("consistency group " + std::to_string(gi) +
                                " mixes different id sets");
            }
        }
        double sum = 0.0;
        std::size_t pairs = 0;
        for (std::size_t i = 0; i < group.size(); ++i) {
            for (std::size_t j = i + 1; j < group.size(); ++j) {
                sum += normalized ? rbo_normalized(group[i], group[j], rbo_p)
                                  : rbo(group[i], group[j], rbo_p);
                ++pairs;
            }
        }
        const double score = sum / static_cast<double>(pairs);
        result.scores.push_back(score);
        if (score >= threshold) result.retained.push_back(gi);
    }
    return result;
}

namespace {

// Pinned Fisher-Yates so shuffles do not depend on the standard library.
std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = rng() % i;
        std::swap(order[i - 1], order[j]);
    }
    return order;
}

}  // namespace

SynthesisOutcome synthesize_teacher_dataset(const std::vector<CandidateSet>& sets,
                                            Backend& teacher, int m,
                                            double threshold,
                                            const PipelineConfig& config) {
    if (m < 2) throw DataError("synthesis needs m >= 2 requests per set");
    const auto retry = retry_policy(config);

    SynthesisOutcome outcome;
    for (std::size_t si = 0; si < sets.size(); ++si) {
        const auto& set = sets[si];
        const auto violations = validate_candidate_set(set);
        if (!violations.empty()) {
            outcome.dropped.emplace_back(si, "invalid set: " + violations.front());
            continue;
        }
        const auto query_plan = rule_stub_plan(set.query);

        std::vector<Ranking> responses;
        std::string drop_reason;
        for (int request = 0; request < m && drop_reason.empty(); ++request) {
            CandidateSet shuffled = set;
            if (request > 0) {
                const auto order = shuffled_indices(
                    set.candidates.size(),
                    mix_seed(config.seed, si, static_cast<std::uint64_t>(request)));
                shuffled.candidates.clear();
                for (const auto idx : order) {
                    shuffled.candidates.push_back(set.candidates[idx]);
                }
            }
            const auto result =
                rerank(shuffled, set.query, query_plan, teacher, retry);
            if (result.fallback) {
                drop_reason = "unusable teacher response (request " +
                              std::to_string(request) + ": " +
                              to_string(result.format_class) + std::string(")");
            } else {
                responses.push_back(result.ranking);
            }
        }
        if (!drop_reason.empty()) {
            outcome.dropped.emplace_back(si, drop_reason);
            continue;
        }

        const auto filtered =
            consistency_filter({responses}, threshold, config.rbo_p,
                               config.consistency_normalized);
        if (filtered.retained.empty()) {
            outcome.dropped.emplace_back(
                si, "consistency score " + std::to_string(filtered.scores[0]) +
                        " below threshold");
            continue;
        }

        DatasetRecord record;
        record.set = set;
        record.label = responses.front();  // canonical-order response
        record.query_type = query_plan.query_type;
        outcome.retained.push_back(std::move(record));
        outcome.scores.push_back(filtered.scores[0]);
    }
    return outcome;
}

}  // namespace rankpipe
