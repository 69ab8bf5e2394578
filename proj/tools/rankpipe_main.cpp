// rankpipe: re-ranking pipeline runner, offline evaluation harness, and
// reward/GRPO tooling over line-delimited JSON datasets.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <memory>
#include <optional>

#include "rankpipe/backend.hpp"
#include "rankpipe/datagen.hpp"
#include "rankpipe/errors.hpp"
#include "rankpipe/grpo.hpp"
#include "rankpipe/metrics.hpp"
#include "rankpipe/pipeline.hpp"
#include "rankpipe/reward.hpp"
#include "rankpipe/serde.hpp"

using namespace rankpipe;
using nlohmann::json;

namespace {

struct GlobalOptions {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string backend_mode = "stub";  // stub | live | replay
    std::string replay_store;
    bool record = false;
    std::string output_path;
};

PipelineConfig effective_config(const GlobalOptions& opts) {
    PipelineConfig config =
        opts.config_path.empty() ? PipelineConfig{} : load_config(opts.config_path);
    if (opts.seed) {
        config.seed = *opts.seed;
        config.grpo.seed = *opts.seed;
    }
    return config;
}

std::unique_ptr<Backend> make_backend(const GlobalOptions& opts,
                                      const PipelineConfig& config) {
    std::shared_ptr<Backend> base;
    if (opts.backend_mode == "stub") {
        base = std::make_shared<StubBackend>();
    } else if (opts.backend_mode == "live") {
        base = std::make_shared<HttpBackend>(HttpBackendConfig{
            config.backend.endpoint, config.backend.timeout_ms,
            config.template_dir});
    } else if (opts.backend_mode == "replay") {
        if (opts.replay_store.empty()) {
            throw ConfigError("replay mode requires --replay-store");
        }
        return std::make_unique<ReplayBackend>(
            ReplayBackend::open_replay(opts.replay_store));
    } else {
        throw ConfigError("unknown backend mode: " + opts.backend_mode);
    }
    if (opts.record) {
        if (opts.replay_store.empty()) {
            throw ConfigError("--record requires --replay-store");
        }
        return std::make_unique<ReplayBackend>(
            ReplayBackend::open_recording(opts.replay_store, base));
    }
    struct Owner : Backend {
        std::shared_ptr<Backend> inner;
        explicit Owner(std::shared_ptr<Backend> b) : inner(std::move(b)) {}
        BackendResponse call(const BackendRequest& r) override {
            return inner->call(r);
        }
        std::string id() const override { return inner->id(); }
    };
    return std::make_unique<Owner>(base);
}

std::ofstream open_output_file(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open output file: " + path);
    return out;
}

// Output records go to --output when given, stdout otherwise.
class RecordSink {
public:
    explicit RecordSink(const std::string& path) {
        if (!path.empty()) {
            file_ = open_output_file(path);
            stream_ = &*file_;
        } else {
            stream_ = &std::cout;
        }
    }
    void write(const json& j) { (*stream_) << j.dump() << '\n'; }
    bool to_file() const { return file_.has_value(); }

private:
    std::optional<std::ofstream> file_;
    std::ostream* stream_ = nullptr;
};

std::vector<json> read_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open input file: " + path);
    std::vector<json> lines;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        lines.push_back(decode_line(line, line_no));
    }
    return lines;
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

int cmd_run(const GlobalOptions& opts, const std::string& query_text,
            const std::vector<std::string>& session,
            const std::string& input_path) {
    const auto config = effective_config(opts);
    auto backend = make_backend(opts, config);
    StubRetriever retriever(config.seed);

    std::vector<Query> queries;
    if (!query_text.empty()) {
        queries.push_back(Query{query_text, session});
    } else if (!input_path.empty()) {
        for (const auto& j : read_jsonl(input_path)) {
            queries.push_back(query_from_json(j));
        }
    } else {
        throw ConfigError("run needs --query or --input");
    }
    if (queries.empty()) throw DataError("no queries to run");

    const auto results = run_batch(queries, config, *backend, retriever);
    RecordSink sink(opts.output_path);
    for (const auto& result : results) {
        sink.write(json{{"ranking", to_json(result.ranking)},
                        {"provenance", to_json(result.provenance)}});
    }
    return 0;
}

int cmd_eval(const GlobalOptions& opts, const std::string& data_path,
             const std::string& pred_mode) {
    const auto config = effective_config(opts);
    const auto records = read_dataset(data_path);

    std::unique_ptr<Backend> backend;
    PredFn pred;
    if (pred_mode == "stored") {
        pred = stored_pred_source();
    } else if (pred_mode == "backend") {
        backend = make_backend(opts, config);
        pred = backend_pred_source(*backend, config);
    } else {
        throw ConfigError("unknown pred source: " + pred_mode);
    }

    const auto report = evaluate_dataset(records, pred, config);

    RecordSink sink(opts.output_path);
    const auto j = report_to_json(report);
    for (const auto& entry : j["per_query"]) sink.write(entry);
    sink.write(json{{"overall", j["overall"]},
                    {"per_type", j["per_type"]},
                    {"errors", j["errors"]}});

    if (sink.to_file()) {
        std::cout << render_report_table(report);
    } else {
        std::cerr << render_report_table(report);
    }
    return 0;
}

int cmd_metrics(const GlobalOptions& opts, const std::string& input_path) {
    const auto config = effective_config(opts);
    RecordSink sink(opts.output_path);

    QueryMetrics sum;
    std::size_t count = 0;
    for (const auto& j : read_jsonl(input_path)) {
        const auto pred = ranking_from_json(j.at("pred"));
        const auto label = ranking_from_json(j.at("label"));
        const int n = static_cast<int>(label.ids.size());
        QueryMetrics m;
        m.ndcg4 = ndcg_at_k(pred, label, std::min(4, n));
        m.ndcg10 = ndcg_at_k(pred, label, std::min(10, n));
        m.recall4 = recall_at_k(pred, label, std::min(4, n));
        m.recall10 = recall_at_k(pred, label, std::min(10, n));
        m.rbo = rbo(pred, label, config.rbo_p);

        json out{{"ndcg4", m.ndcg4},
                 {"ndcg10", m.ndcg10},
                 {"recall4", m.recall4},
                 {"recall10", m.recall10},
                 {"rbo", m.rbo}};
        if (j.contains("id")) out["id"] = j["id"];
        sink.write(out);

        sum.ndcg4 += m.ndcg4;
        sum.ndcg10 += m.ndcg10;
        sum.recall4 += m.recall4;
        sum.recall10 += m.recall10;
        sum.rbo += m.rbo;
        ++count;
    }
    if (count == 0) throw DataError("no ranking pairs in input");
    const double n = static_cast<double>(count);
    sink.write(json{{"mean",
                     {{"ndcg4", sum.ndcg4 / n},
                      {"ndcg10", sum.ndcg10 / n},
                      {"recall4", sum.recall4 / n},
                      {"recall10", sum.recall10 / n},
                      {"rbo", sum.rbo / n}}},
                    {"count", count}});
    return 0;
}

int cmd_reward(const GlobalOptions& opts, const std::string& input_path) {
    const auto config = effective_config(opts);
    RecordSink sink(opts.output_path);

    for (const auto& j : read_jsonl(input_path)) {
        const auto task = j.at("task").get<std::string>();
        const auto response = j.at("response").get<std::string>();
        RewardBreakdown breakdown;

        if (task == "relevance" || task == "quality") {
            const auto dim = task == "relevance" ? GradeDimension::Relevance
                                                 : GradeDimension::Quality;
            const auto kind = task == "relevance" ? TaskKind::Relevance
                                                  : TaskKind::Quality;
            const auto parse = parse_grading(response);
            const double format = grading_format_reward(parse);
            double task_reward = 0.0;
            if (parse.grade) {
                const Grade truth{j.at("truth").get<int>(), dim};
                task_reward = grading_task_reward(Grade{*parse.grade, dim}, truth);
            }
            breakdown = overall_reward(kind, format, task_reward);
        } else if (task == "rerank") {
            const auto set_ids = j.at("ids").get<std::vector<std::string>>();
            const auto label = ranking_from_json(j.at("label"));
            const auto parse = parse_rerank_ids(response, set_ids);
            const double format = rerank_format_reward(parse, set_ids);
            double task_reward = 0.0;
            if (format == 0.5) {
                task_reward = rerank_task_reward(Ranking{*parse.ids}, label,
                                                 config.gammas, config.rbo_p)
                                  .value;
            }
            breakdown = overall_reward(TaskKind::Rerank, format, task_reward);
        } else {
            throw DataError("unknown task kind: " + task);
        }

        sink.write(json{{"task", task},
                        {"format_reward", breakdown.format_reward},
                        {"task_reward", breakdown.task_reward},
                        {"total", breakdown.total}});
    }
    return 0;
}

int cmd_parse(const GlobalOptions& opts, const std::string& input_path) {
    RecordSink sink(opts.output_path);
    for (const auto& j : read_jsonl(input_path)) {
        const auto kind = j.at("kind").get<std::string>();
        const auto text = j.at("text").get<std::string>();
        json out{{"kind", kind}};
        if (kind == "grading") {
            const auto p = parse_grading(text);
            out["format_class"] = to_string(p.format_class);
            if (p.think_text) out["think"] = *p.think_text;
            if (p.answer_raw) out["answer"] = *p.answer_raw;
            if (p.grade) out["grade"] = *p.grade;
        } else if (kind == "rerank") {
            const auto set_ids = j.at("ids").get<std::vector<std::string>>();
            const auto p = parse_rerank_ids(text, set_ids);
            out["format_class"] = to_string(p.format_class);
            if (p.think_text) out["think"] = *p.think_text;
            if (p.answer_raw) out["answer"] = *p.answer_raw;
            if (p.ids) out["ids"] = *p.ids;
        } else {
            throw DataError("unknown parse kind: " + kind);
        }
        sink.write(out);
    }
    return 0;
}

int cmd_grpo_demo(const GlobalOptions& opts, int n_queries, int n_candidates,
                  std::optional<int> iterations) {
    auto config = effective_config(opts);
    if (iterations) config.grpo.iterations = *iterations;

    const auto dataset = make_learnable_dataset(n_queries, n_candidates, config.seed);
    const auto result = train_toy_policy(dataset, config.grpo, config.gammas,
                                         config.rbo_p);

    RecordSink sink(opts.output_path);
    for (std::size_t i = 0; i < result.mean_reward_trace.size(); ++i) {
        sink.write(json{{"iteration", i},
                        {"mean_reward", result.mean_reward_trace[i]},
                        {"mean_task_reward", result.mean_task_reward_trace[i]}});
    }

    const double initial = result.mean_task_reward_trace.front();
    const double final_reward = result.mean_task_reward_trace.back();
    std::ostream& log = sink.to_file() ? std::cout : std::cerr;
    log << "iterations: " << result.mean_reward_trace.size() << '\n'
        << "initial mean task reward: " << initial << '\n'
        << "final mean task reward:   " << final_reward << '\n'
        << "lift: " << (100.0 * (final_reward - initial) / initial) << "%\n";
    return 0;
}

int cmd_synth(const GlobalOptions& opts, const std::string& input_path,
              std::optional<int> samples, std::optional<double> threshold) {
    const auto config = effective_config(opts);
    auto backend = make_backend(opts, config);

    std::vector<CandidateSet> sets;
    for (const auto& j : read_jsonl(input_path)) {
        sets.push_back(candidate_set_from_json(j));
    }
    const int m = samples.value_or(config.consistency_samples);
    const double cut = threshold.value_or(config.consistency_threshold);

    const auto outcome = synthesize_teacher_dataset(sets, *backend, m, cut, config);

    RecordSink sink(opts.output_path);
    for (std::size_t i = 0; i < outcome.retained.size(); ++i) {
        json j = to_json(outcome.retained[i]);
        j["consistency"] = outcome.scores[i];
        sink.write(j);
    }
    std::ostream& log = sink.to_file() ? std::cout : std::cerr;
    log << "retained " << outcome.retained.size() << " of " << sets.size()
        << " sets\n";
    for (const auto& [index, reason] : outcome.dropped) {
        log << "dropped set " << index << ": " << reason << '\n';
    }
    return 0;
}

int cmd_validate(const GlobalOptions& opts, const std::string& input_path) {
    (void)opts;
    std::ifstream in(input_path);
    if (!in) throw DataError("cannot open input file: " + input_path);

    std::size_t line_no = 0;
    std::size_t problem_count = 0;
    std::string line;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> problems;
        try {
            const auto j = decode_line(line, line_no);
            const auto set = candidate_set_from_json(j);
            problems = validate_candidate_set(set);
            if (j.contains("label")) {
                const auto label = ranking_from_json(j["label"]);
                if (!is_permutation(label, set)) {
                    problems.push_back("label is not a permutation of the set");
                }
            }
            if (j.contains("query_type") &&
                !query_type_from_string(j["query_type"].get<std::string>())) {
                problems.push_back("unknown query_type");
            }
        } catch (const DataError& e) {
            problems.push_back(e.what());
        }
        for (const auto& p : problems) {
            std::cout << "line " << line_no << ": " << p << '\n';
        }
        problem_count += problems.size();
    }
    if (problem_count > 0) {
        throw DataError(std::to_string(problem_count) + " dataset violations");
    }
    std::cout << "ok: " << line_no << " lines\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"re-ranking pipeline, metrics, rewards, and GRPO tooling"};
    app.require_subcommand(1);
    app.fallthrough();  // global options may appear after the subcommand

    GlobalOptions opts;
    app.add_option("--config", opts.config_path, "JSON config file");
    app.add_option("--seed", opts.seed, "override the config seed");
    app.add_option("--backend", opts.backend_mode, "stub | live | replay")
        ->check(CLI::IsMember({"stub", "live", "replay"}));
    app.add_option("--replay-store", opts.replay_store,
                   "replay store file (replay/record modes)");
    app.add_flag("--record", opts.record, "record backend traffic to the store");
    app.add_option("--output", opts.output_path, "output file (default stdout)");

    std::string query_text;
    std::vector<std::string> session;
    std::string input_path;
    std::string data_path;
    std::string pred_mode = "backend";
    int n_queries = 20;
    int n_candidates = 8;
    std::optional<int> iterations;
    std::optional<int> samples;
    std::optional<double> threshold;

    auto* run = app.add_subcommand("run", "run queries through the pipeline");
    run->add_option("--query", query_text, "single query text");
    run->add_option("--session", session, "session history, oldest first");
    run->add_option("--input", input_path, "JSONL file of queries");

    auto* eval = app.add_subcommand("eval", "offline evaluation report");
    eval->add_option("--data", data_path, "JSONL dataset with labels")->required();
    eval->add_option("--pred", pred_mode, "stored | backend");

    auto* metrics = app.add_subcommand("metrics", "score pred/label ranking pairs");
    metrics->add_option("--input", input_path, "JSONL of {pred, label}")->required();

    auto* reward = app.add_subcommand("reward", "score model responses");
    reward->add_option("--input", input_path, "JSONL of response records")->required();

    auto* parse = app.add_subcommand("parse", "classify raw model responses");
    parse->add_option("--input", input_path, "JSONL of {kind, text, ids?}")->required();

    auto* grpo = app.add_subcommand("grpo-demo",
                                    "train the toy ranking policy with GRPO");
    grpo->add_option("--queries", n_queries, "synthetic query count");
    grpo->add_option("--candidates", n_candidates, "candidates per query");
    grpo->add_option("--iterations", iterations, "override grpo.iterations");

    auto* synth = app.add_subcommand("synth", "teacher-consistency data synthesis");
    synth->add_option("--input", input_path, "JSONL of candidate sets")->required();
    synth->add_option("--samples", samples, "re-rank requests per set");
    synth->add_option("--threshold", threshold, "consistency threshold");

    auto* validate = app.add_subcommand("validate", "lint a dataset file");
    validate->add_option("--input", input_path, "JSONL dataset")->required();

    try {
        app.parse(argc, argv);
        if (run->parsed()) return cmd_run(opts, query_text, session, input_path);
        if (eval->parsed()) return cmd_eval(opts, data_path, pred_mode);
        if (metrics->parsed()) return cmd_metrics(opts, input_path);
        if (reward->parsed()) return cmd_reward(opts, input_path);
        if (parse->parsed()) return cmd_parse(opts, input_path);
        if (grpo->parsed()) {
            return cmd_grpo_demo(opts, n_queries, n_candidates, iterations);
        }
        if (synth->parsed()) return cmd_synth(opts, input_path, samples, threshold);
        if (validate->parsed()) return cmd_validate(opts, input_path);
        return 0;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 3;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 3;
    } catch (const BackendError& e) {
        std::cerr << "backend error: " << e.what() << '\n';
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
