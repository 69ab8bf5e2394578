#include "rankpipe/planner.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "rankpipe/backend.hpp"
#include "rankpipe/errors.hpp"
#include "rankpipe/serde.hpp"

namespace rankpipe {

namespace {

std::string lower(const std::string& s) {
    std::string out = s;
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    return out;
}

std::string trim_copy(const std::string& s) {
    auto b = s.begin();
    auto e = s.end();
    while (b != e && std::isspace(static_cast<unsigned char>(*b))) ++b;
    while (e != b && std::isspace(static_cast<unsigned char>(*(e - 1)))) --e;
    return std::string(b, e);
}

std::vector<std::string> tokens(const std::string& s) {
    std::istringstream in(s);
    std::vector<std::string> out;
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
}

bool has_token(const std::vector<std::string>& toks, const std::string& t) {
    return std::find(toks.begin(), toks.end(), t) != toks.end();
}

const std::unordered_set<std::string> kFreshnessCues = {
    "today", "weather", "news", "latest", "now", "schedule", "schedules"};

}  // namespace

std::vector<std::string> validate_plan(const SubQueryPlan& plan) {
    std::vector<std::string> violations;
    if (plan.subqueries.empty()) {
        violations.push_back("plan has no subqueries");
        return violations;
    }
    if (plan.query_type == QueryType::Simple && plan.subqueries.size() != 1) {
        violations.push_back("simple query must yield exactly one subquery");
    }
    std::unordered_set<std::string> seen;
    for (const auto& sq : plan.subqueries) {
        if (trim_copy(sq.text).empty()) {
            violations.push_back("subquery text is empty");
        }
        if (!seen.insert(sq.text).second) {
            violations.push_back("duplicate subquery text: " + sq.text);
        }
        if (sq.dimensions.empty() && plan.query_type != QueryType::Simple) {
            violations.push_back("subquery '" + sq.text +
                                 "' has no intent dimensions");
        }
    }
    return violations;
}

SubQueryPlan rule_stub_plan(const Query& query) {
    const std::string text = trim_copy(query.text);
    const std::string low = lower(text);
    const auto toks = tokens(low);

    SubQueryPlan plan;
    plan.original = query;

    const bool comparison = has_token(toks, "vs") || has_token(toks, "vs.") ||
                            low.find("which is") != std::string::npos ||
                            (has_token(toks, "or") &&
                             low.find("better") != std::string::npos);
    const bool guide_like =
        (!toks.empty() && toks.back() == "guide") || has_token(toks, "travel") ||
        toks.size() == 1;

    if (comparison) {
        plan.query_type = QueryType::Complex;
        plan.subqueries = {
            {text, {IntentDimension::Authoritativeness}},
            {text + " comparison",
             {IntentDimension::Authoritativeness, IntentDimension::PersonalExperience}},
            {text + " pros and cons", {IntentDimension::PersonalExperience}},
        };
    } else if (guide_like) {
        plan.query_type = QueryType::BroadNeeds;
        plan.subqueries = {
            {text, {IntentDimension::Authoritativeness}},
            {text + " recommendations", {IntentDimension::PersonalExperience}},
            {text + " latest updates",
             {IntentDimension::HighFreshness, IntentDimension::Authoritativeness}},
            {text + " essentials", {IntentDimension::Authoritativeness,
                                    IntentDimension::PersonalExperience}},
        };
    } else {
        plan.query_type = QueryType::Simple;
        IntentSet dims = {IntentDimension::Authoritativeness};
        for (const auto& t : toks) {
            if (kFreshnessCues.count(t)) {
                dims.insert(IntentDimension::HighFreshness);
                break;
            }
        }
        plan.subqueries = {{text, std::move(dims)}};
    }
    return plan;
}

SubQueryPlan plan_from_response(const std::string& raw_text, const Query& original) {
    nlohmann::json j = nlohmann::json::parse(raw_text, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        throw DataError("planner response is not a JSON object");
    }
    SubQueryPlan plan;
    plan.original = original;
    const auto type_name = j.value("query_type", std::string());
    const auto type = query_type_from_string(type_name);
    if (!type) throw DataError("planner response: unknown query_type '" + type_name + "'");
    plan.query_type = *type;
    if (!j.contains("subqueries") || !j["subqueries"].is_array()) {
        throw DataError("planner response: missing subqueries array");
    }
    for (const auto& e : j["subqueries"]) {
        plan.subqueries.push_back(sub_query_from_json(e));
    }
    return plan;
}

std::string plan_to_response(const SubQueryPlan& plan) {
    nlohmann::json subqueries = nlohmann::json::array();
    for (const auto& sq : plan.subqueries) subqueries.push_back(to_json(sq));
    return nlohmann::json{{"query_type", to_string(plan.query_type)},
                          {"subqueries", std::move(subqueries)}}
        .dump();
}

SubQueryPlan plan(const Query& query, Backend& backend, const RetryPolicy& retry) {
    if (trim_copy(query.text).empty()) throw DataError("query text is empty");

    BackendRequest request;
    request.role = BackendRole::Planner;
    request.template_id = kPlannerTemplateId;
    request.payload = {{"text", query.text}, {"session", query.session}};

    const auto response = call_with_retry(backend, request, retry);
    auto result = plan_from_response(response.raw_text, query);

    const auto violations = validate_plan(result);
    if (!violations.empty()) {
        std::string msg = "planner backend returned an invalid plan:";
        for (const auto& v : violations) msg += " [" + v + "]";
        throw DataError(msg);
    }
    return result;
}

SubQueryPlan plan(const Query& query, Backend& backend) {
    return plan(query, backend, RetryPolicy{});
}

CandidateSet merge_candidates(
    const Query& query,
    const std::vector<std::pair<SubQuery, std::vector<Candidate>>>& retrievals,
    int k) {
    CandidateSet merged;
    merged.query = query;

    std::unordered_map<std::string, std::size_t> position;
    for (const auto& [subquery, candidates] : retrievals) {
        if (static_cast<int>(candidates.size()) > k) {
            throw DataError("retrieval list for '" + subquery.text +
                            "' exceeds k=" + std::to_string(k));
        }
        for (const auto& candidate : candidates) {
            auto [it, inserted] = position.emplace(candidate.id,
                                                   merged.candidates.size());
            if (inserted) {
                merged.candidates.push_back(candidate);
            }
            auto& dims = merged.candidates[it->second].source_subquery_dimensions;
            dims.insert(subquery.dimensions.begin(), subquery.dimensions.end());
        }
    }
    if (merged.candidates.empty()) throw DataError("no candidates");
    return merged;
}

}  // namespace rankpipe
