#pragma once

#include "rankpipe/core.hpp"

namespace rankpipe {

/// Cutoff and RBO persistence used by evaluation and reward code.
struct MetricConfig {
    int k = 10;
    double rbo_p = 0.9;
};

inline constexpr double kDefaultRboP = 0.9;

/**
 * Position-derived gain: n - label(d) when d sits within the first k
 * positions of the label ranking (positions are 1-indexed, so the top
 * item gains n-1), 0 otherwise. Throws DataError for unknown ids.
 */
int relevance_gain(const std::string& doc_id, const Ranking& label_ranking, int k);

/**
 * NDCG@K over permutation-derived gains:
 *
 *   DCG@K  = sum_{i=1..K} rel(pred_i) / log2(i+1)
 *   IDCG@K = DCG@K of the label ranking itself
 *
 * pred and label must be complete permutations of the same id set and
 * 1 <= k <= n. A single-item list is trivially perfectly ordered and
 * scores 1.0 (documented guard for the 0/0 case).
 */
double ndcg_at_k(const Ranking& pred, const Ranking& label, int k);

/// |pred[:k] ∩ label[:k]| / k over the same id set.
double recall_at_k(const Ranking& pred, const Ranking& label, int k);

/**
 * Truncated rank-biased overlap:
 *
 *   RBO = (1-p) * sum_{d=1..n} p^(d-1) * A_d,   A_d = |pred[:d] ∩ label[:d]| / d
 *
 * The sum stops at n exactly as written; no extrapolation or residual
 * term, so identical rankings score 1 - p^n, not 1. Requires equal-length
 * duplicate-free rankings and 0 < p < 1; the id sets may differ (pairwise
 * comparisons across answer sets), disjoint lists score 0.
 */
double rbo(const Ranking& pred, const Ranking& label, double p);

/// rbo / (1 - p^n): rescales the truncated score so identical lists hit 1.
/// Available for length-independent thresholds; never used in rewards.
double rbo_normalized(const Ranking& pred, const Ranking& label, double p);

}  // namespace rankpipe
