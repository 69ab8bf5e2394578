#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "rankpipe/core.hpp"
#include "rankpipe/reward.hpp"

namespace rankpipe {

struct GrpoConfig {
    int group_size = 8;          // N >= 2; the std of a single sample is undefined
    double clip_epsilon = 0.2;
    double kl_beta = 0.04;
    double learning_rate = 0.5;
    int iterations = 200;
    std::uint64_t seed = 0;
};

/// One scored response inside a group.
struct GrpoSample {
    double logp_current = 0.0;    // log pi_theta(o|x)
    double logp_reference = 0.0;  // log pi_old(o|x)
    double reward = 0.0;
};

struct GrpoGroup {
    TaskKind task = TaskKind::Rerank;
    std::vector<GrpoSample> responses;
    std::vector<double> advantages;  // same length as responses once computed
};

/**
 * Group-relative advantages: A_i = (R_i - mean) / std with population std.
 * Zero-variance groups (std < 1e-12) yield all-zero advantages rather than
 * an error; they contribute no policy gradient. Throws DataError for
 * groups smaller than 2.
 */
std::vector<double> compute_advantages(const std::vector<double>& rewards);

/// Fills group.advantages from the responses' rewards.
void compute_group_advantages(GrpoGroup& group);

/**
 * Clipped multi-task surrogate, summed over groups:
 *
 *   L = sum_g -(1/N) sum_i [ min(rho_i*A_i, clip(rho_i, 1-eps, 1+eps)*A_i)
 *                            - beta * KL_i ]
 *
 * with rho_i = exp(logp_current - logp_reference) and the per-sample KL
 * estimator KL_i = exp(-delta) + delta - 1, delta = logp_current -
 * logp_reference (unbiased, non-negative, zero at rho = 1). When the two
 * policies coincide every rho is 1, every KL term is 0, and the loss is 0
 * because advantages sum to zero within each group.
 */
double grpo_surrogate_loss(const std::vector<GrpoGroup>& groups,
                           const GrpoConfig& config);

// ---------------------------------------------------------------------------
// Toy differentiable listwise policy (sequential softmax / Plackett-Luce).
// A desk-scale stand-in for a generative ranking policy: the loss and
// advantage math above are exercised end to end against it.
// ---------------------------------------------------------------------------

inline constexpr int kPolicyFeatureDim = 5;
using FeatureVector = std::array<double, kPolicyFeatureDim>;

/**
 * Linear scoring weights over per-candidate features. A ranking is sampled
 * by repeatedly drawing the next item from a softmax over the remaining
 * candidates' scores.
 */
struct ToyRankPolicy {
    std::vector<double> theta = std::vector<double>(kPolicyFeatureDim, 0.0);
};

/**
 * Per-candidate features, in set order: relevance grade (0 when absent),
 * quality grade (0 when absent), click-through rate, completion rate, and
 * recency min-max scaled to [0,1] over the set (0.5 when all timestamps
 * coincide).
 */
std::vector<FeatureVector> extract_features(const CandidateSet& set);

/// Plackett-Luce log-likelihood of a complete ranking under the policy.
/// exp() of this sums to 1 over all n! permutations.
double policy_logprob(const ToyRankPolicy& policy, const CandidateSet& set,
                      const Ranking& ranking);

/// Draws n_samples complete rankings; deterministic for a given seed.
std::vector<Ranking> sample_rankings(const ToyRankPolicy& policy,
                                     const CandidateSet& set, int n_samples,
                                     std::uint64_t seed);

/**
 * A sampled group bound to one candidate set, kept as candidate indices so
 * the loss stays differentiable in theta. logp_reference and rewards are
 * fixed at sampling time; logp_current is recomputed from theta on every
 * loss or gradient evaluation.
 */
struct PolicyRolloutGroup {
    std::vector<FeatureVector> features;       // per candidate, set order
    std::vector<std::vector<int>> rankings;    // N permutations of indices
    std::vector<double> logp_reference;
    std::vector<double> rewards;
    std::vector<double> advantages;
};

double policy_surrogate_loss(const ToyRankPolicy& policy,
                             const std::vector<PolicyRolloutGroup>& groups,
                             const GrpoConfig& config);

/// Analytic d(loss)/d(theta); matches central finite differences of
/// policy_surrogate_loss away from the clip kinks.
std::vector<double> policy_surrogate_gradient(
    const ToyRankPolicy& policy, const std::vector<PolicyRolloutGroup>& groups,
    const GrpoConfig& config);

struct TrainResult {
    ToyRankPolicy policy;
    std::vector<double> mean_reward_trace;       // total reward, per iteration
    std::vector<double> mean_task_reward_trace;  // task component only
};

/**
 * Plain-gradient-descent GRPO loop over (candidate set, label) pairs. Each
 * iteration snapshots the policy as the reference, samples group_size
 * rankings per set from it, scores them with the re-rank task reward plus
 * the fixed 0.5 format reward (the toy policy always emits complete
 * permutations), normalizes advantages within each group, and takes one
 * gradient step. Group seeds mix (seed, iteration, set index), so rollouts
 * are order-independent and the run is reproducible.
 */
TrainResult train_toy_policy(
    const std::vector<std::pair<CandidateSet, Ranking>>& dataset,
    const GrpoConfig& config, const GammaWeights& gammas,
    double rbo_p = kDefaultRboP);

/// splitmix64-style mixing for derived stream seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c);

}  // namespace rankpipe
