#include "rankpipe/reward.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "rankpipe/errors.hpp"

namespace rankpipe {

double grading_format_reward(const ParsedGradingResponse& parse) {
    switch (parse.format_class) {
        case GradingFormatClass::NoValidAnswer: return 0.0;
        case GradingFormatClass::NonIntegerAnswer: return 0.3;
        case GradingFormatClass::ValidAnswer: return 0.5;
    }
    return 0.0;
}

double grading_task_reward(const Grade& pred, const Grade& truth) {
    if (pred.dimension != truth.dimension) {
        throw DataError("grading_task_reward: grade dimensions differ");
    }
    const int diff = std::abs(pred.value - truth.value);
    if (diff == 0) return 1.0;
    if (diff >= 2) return 0.0;
    return crosses_boundary(pred.value, truth.value) ? 0.4 : 0.7;
}

double rerank_format_reward(const ParsedRerankResponse& parse,
                            const std::vector<std::string>& set_ids) {
    if (!parse.ids) return 0.0;
    return is_permutation_of_ids(*parse.ids, set_ids) ? 0.5 : 0.2;
}

double rerank_format_reward(const ParsedRerankResponse& parse,
                            const CandidateSet& set) {
    std::vector<std::string> set_ids;
    set_ids.reserve(set.candidates.size());
    for (const auto& c : set.candidates) set_ids.push_back(c.id);
    return rerank_format_reward(parse, set_ids);
}

namespace {

void require_valid(const GammaWeights& g) {
    const double weights[] = {g.ndcg10, g.recall10, g.rbo, g.ndcg4, g.recall4};
    double total = 0.0;
    for (double w : weights) {
        if (!std::isfinite(w) || w < 0.0) {
            throw DataError("gamma weights must be finite and non-negative");
        }
        total += w;
    }
    if (total <= 0.0) throw DataError("at least one gamma weight must be positive");
}

}  // namespace

RerankTaskResult rerank_task_reward(const Ranking& pred, const Ranking& label,
                                    const GammaWeights& gammas, double rbo_p) {
    require_valid(gammas);
    if (!is_permutation_of_ids(pred.ids, label.ids)) {
        return RerankTaskResult{0.0, false};
    }
    const int n = static_cast<int>(label.ids.size());
    const int k10 = std::min(10, n);
    const int k4 = std::min(4, n);

    const double value = gammas.ndcg10 * ndcg_at_k(pred, label, k10) +
                         gammas.recall10 * recall_at_k(pred, label, k10) +
                         gammas.rbo * rbo(pred, label, rbo_p) +
                         gammas.ndcg4 * ndcg_at_k(pred, label, k4) +
                         gammas.recall4 * recall_at_k(pred, label, k4);
    return RerankTaskResult{value, true};
}

RewardBreakdown overall_reward(TaskKind, double format_reward, double task_reward) {
    return RewardBreakdown{format_reward, task_reward, format_reward + task_reward};
}

const char* to_string(TaskKind t) {
    switch (t) {
        case TaskKind::Relevance: return "Relevance";
        case TaskKind::Quality: return "Quality";
        case TaskKind::Rerank: return "Rerank";
    }
    return "?";
}

}  // namespace rankpipe
