#pragma once

#include "rankpipe/core.hpp"
#include "rankpipe/metrics.hpp"
#include "rankpipe/parser.hpp"

namespace rankpipe {

enum class TaskKind { Relevance, Quality, Rerank };

/**
 * Trade-off weights for the five re-rank task-reward components, in order
 * NDCG@10, Recall@10, RBO, NDCG@4, Recall@4. Uniform 0.2 weights normalize
 * the maximum aggregate to ~1.
 */
struct GammaWeights {
    double ndcg10 = 0.2;
    double recall10 = 0.2;
    double rbo = 0.2;
    double ndcg4 = 0.2;
    double recall4 = 0.2;
};

struct RewardBreakdown {
    double format_reward = 0.0;
    double task_reward = 0.0;
    double total = 0.0;  // always format_reward + task_reward
};

/// 0.0 no extractable answer, 0.3 non-integer answer, 0.5 valid integer.
double grading_format_reward(const ParsedGradingResponse& parse);

/**
 * Piecewise grade-agreement reward:
 *   1.0  exact match
 *   0.7  off by one within the same preference band ({1,2} or {3,4})
 *   0.4  off by one across the 2/3 boundary
 *   0.0  off by two or more
 * Both grades must share a dimension; mismatch throws DataError.
 */
double grading_task_reward(const Grade& pred, const Grade& truth);

/// 0.0 no extractable list, 0.2 list with duplicate/unknown/missing ids,
/// 0.5 complete permutation of the set. Re-checked against `set` so that
/// reward == 0.5 iff is_permutation holds.
double rerank_format_reward(const ParsedRerankResponse& parse,
                            const CandidateSet& set);
double rerank_format_reward(const ParsedRerankResponse& parse,
                            const std::vector<std::string>& set_ids);

/// Weighted metric sum for one re-ranked list. `valid` is false when pred
/// is not a complete permutation of label's ids; the value is then 0 (no
/// repair, no reward leak through malformed generations).
struct RerankTaskResult {
    double value = 0.0;
    bool valid = false;
};

/**
 * g1*NDCG@10 + g2*Recall@10 + g3*RBO + g4*NDCG@4 + g5*Recall@4, with the
 * 10 and 4 cutoffs clamped to n for short lists.
 */
RerankTaskResult rerank_task_reward(const Ranking& pred, const Ranking& label,
                                    const GammaWeights& gammas,
                                    double rbo_p = kDefaultRboP);

/// Overall per-response reward: total = format + task.
RewardBreakdown overall_reward(TaskKind kind, double format_reward,
                               double task_reward);

const char* to_string(TaskKind t);

}  // namespace rankpipe
