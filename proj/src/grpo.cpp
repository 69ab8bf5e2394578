#include "rankpipe/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <unordered_map>

#include "rankpipe/errors.hpp"

namespace rankpipe {

namespace {

constexpr double kDegenerateStd = 1e-12;

void require_finite(double v, const char* what) {
    if (!std::isfinite(v)) throw DataError(std::string(what) + " is not finite");
}

double dot(const std::vector<double>& theta, const FeatureVector& x) {
    double s = 0.0;
    for (int i = 0; i < kPolicyFeatureDim; ++i) s += theta[i] * x[i];
    return s;
}

void require_valid_theta(const ToyRankPolicy& policy) {
    if (policy.theta.size() != kPolicyFeatureDim) {
        throw DataError("policy weight vector has the wrong dimension");
    }
    for (double t : policy.theta) require_finite(t, "policy weight");
}

// Loss contribution of one sample and its derivative in delta = logp - logp_ref.
struct SampleTerm {
    double loss = 0.0;
    double dloss_ddelta = 0.0;
};

SampleTerm sample_term(double delta, double advantage, const GrpoConfig& config) {
    const double rho = std::exp(delta);
    const double clipped = std::clamp(rho, 1.0 - config.clip_epsilon,
                                      1.0 + config.clip_epsilon);
    const double unclipped_value = rho * advantage;
    const double clipped_value = clipped * advantage;
    const double surrogate = std::min(unclipped_value, clipped_value);

    // k3 estimator: exp(-delta) + delta - 1; zero with zero slope at delta=0.
    const double kl = std::exp(-delta) + delta - 1.0;

    SampleTerm term;
    term.loss = config.kl_beta * kl - surrogate;
    // The clipped branch is locally constant in theta; the unclipped branch
    // (selected whenever it is the min, including the unclipped region where
    // both coincide) has slope rho * advantage.
    const double dsurrogate =
        unclipped_value <= clipped_value ? unclipped_value : 0.0;
    term.dloss_ddelta = config.kl_beta * (1.0 - std::exp(-delta)) - dsurrogate;
    return term;
}

double canonical_uniform(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::vector<double> candidate_scores(const ToyRankPolicy& policy,
                                     const std::vector<FeatureVector>& features) {
    std::vector<double> scores(features.size());
    for (std::size_t i = 0; i < features.size(); ++i) {
        scores[i] = dot(policy.theta, features[i]);
    }
    return scores;
}

// log-sum-exp over scores of order[from:]
double log_sum_exp_tail(const std::vector<double>& scores,
                        const std::vector<int>& order, std::size_t from) {
    double max_s = -std::numeric_limits<double>::infinity();
    for (std::size_t m = from; m < order.size(); ++m) {
        max_s = std::max(max_s, scores[order[m]]);
    }
    double sum = 0.0;
    for (std::size_t m = from; m < order.size(); ++m) {
        sum += std::exp(scores[order[m]] - max_s);
    }
    return max_s + std::log(sum);
}

std::vector<int> ranking_to_indices(const CandidateSet& set,
                                    const Ranking& ranking) {
    std::unordered_map<std::string, int> index;
    for (std::size_t i = 0; i < set.candidates.size(); ++i) {
        index.emplace(set.candidates[i].id, static_cast<int>(i));
    }
    if (!is_permutation(ranking, set)) {
        throw DataError("ranking is not a permutation of the candidate set");
    }
    std::vector<int> order;
    order.reserve(ranking.ids.size());
    for (const auto& id : ranking.ids) order.push_back(index.at(id));
    return order;
}

// The remaining pool at step t is order[t:], since order lists every
// candidate exactly once.
double logprob_of_order(const std::vector<double>& scores,
                        const std::vector<int>& order) {
    double logp = 0.0;
    for (std::size_t t = 0; t < order.size(); ++t) {
        logp += scores[order[t]] - log_sum_exp_tail(scores, order, t);
    }
    return logp;
}

// Gradient of the Plackett-Luce log-likelihood: at each step, chosen
// features minus the softmax-weighted mean of the remaining features.
void accumulate_logprob_gradient(const std::vector<double>& scores,
                                 const std::vector<FeatureVector>& features,
                                 const std::vector<int>& order, double weight,
                                 std::vector<double>& grad) {
    const std::size_t n = order.size();
    for (std::size_t t = 0; t < n; ++t) {
        double max_s = -std::numeric_limits<double>::infinity();
        for (std::size_t m = t; m < n; ++m) max_s = std::max(max_s, scores[order[m]]);
        double z = 0.0;
        for (std::size_t m = t; m < n; ++m) z += std::exp(scores[order[m]] - max_s);

        const FeatureVector& chosen = features[order[t]];
        for (int d = 0; d < kPolicyFeatureDim; ++d) {
            double expected = 0.0;
            for (std::size_t m = t; m < n; ++m) {
                const double w = std::exp(scores[order[m]] - max_s) / z;
                expected += w * features[order[m]][d];
            }
            grad[d] += weight * (chosen[d] - expected);
        }
    }
}

}  // namespace

std::vector<double> compute_advantages(const std::vector<double>& rewards) {
    const std::size_t n = rewards.size();
    if (n < 2) throw DataError("advantage group needs at least 2 rewards");
    for (double r : rewards) require_finite(r, "reward");

    const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) /
                        static_cast<double>(n);
    double var = 0.0;
    for (double r : rewards) var += (r - mean) * (r - mean);
    var /= static_cast<double>(n);  // population variance
    const double std_dev = std::sqrt(var);

    std::vector<double> advantages(n, 0.0);
    if (std_dev < kDegenerateStd) return advantages;  // degenerate group
    for (std::size_t i = 0; i < n; ++i) {
        advantages[i] = (rewards[i] - mean) / std_dev;
    }
    return advantages;
}

void compute_group_advantages(GrpoGroup& group) {
    std::vector<double> rewards;
    rewards.reserve(group.responses.size());
    for (const auto& r : group.responses) rewards.push_back(r.reward);
    group.advantages = compute_advantages(rewards);
}

double grpo_surrogate_loss(const std::vector<GrpoGroup>& groups,
                           const GrpoConfig& config) {
    double loss = 0.0;
    for (const auto& group : groups) {
        const std::size_t n = group.responses.size();
        if (n == 0) continue;
        if (group.advantages.size() != n) {
            throw DataError("group advantages not computed");
        }
        double group_loss = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const auto& s = group.responses[i];
            require_finite(s.logp_current, "logp_current");
            require_finite(s.logp_reference, "logp_reference");
            const double delta = s.logp_current - s.logp_reference;
            group_loss += sample_term(delta, group.advantages[i], config).loss;
        }
        loss += group_loss / static_cast<double>(n);
    }
    return loss;
}

std::vector<FeatureVector> extract_features(const CandidateSet& set) {
    std::int64_t lo = std::numeric_limits<std::int64_t>::max();
    std::int64_t hi = std::numeric_limits<std::int64_t>::min();
    for (const auto& c : set.candidates) {
        lo = std::min(lo, c.side.publish_time);
        hi = std::max(hi, c.side.publish_time);
    }
    const double span = static_cast<double>(hi - lo);

    std::vector<FeatureVector> features;
    features.reserve(set.candidates.size());
    for (const auto& c : set.candidates) {
        FeatureVector x{};
        x[0] = c.relevance_grade ? static_cast<double>(c.relevance_grade->value) : 0.0;
        x[1] = c.quality_grade ? static_cast<double>(c.quality_grade->value) : 0.0;
        x[2] = c.side.click_through_rate;
        x[3] = c.side.completion_rate;
        x[4] = span > 0.0
                   ? static_cast<double>(c.side.publish_time - lo) / span
                   : 0.5;
        features.push_back(x);
    }
    return features;
}

double policy_logprob(const ToyRankPolicy& policy, const CandidateSet& set,
                      const Ranking& ranking) {
    require_valid_theta(policy);
    const auto features = extract_features(set);
    const auto scores = candidate_scores(policy, features);
    const auto order = ranking_to_indices(set, ranking);
    return logprob_of_order(scores, order);
}

std::vector<Ranking> sample_rankings(const ToyRankPolicy& policy,
                                     const CandidateSet& set, int n_samples,
                                     std::uint64_t seed) {
    if (set.candidates.empty()) throw DataError("cannot sample from an empty set");
    if (n_samples < 1) throw DataError("n_samples must be >= 1");
    require_valid_theta(policy);

    const auto features = extract_features(set);
    const auto scores = candidate_scores(policy, features);
    const int n = static_cast<int>(set.candidates.size());

    std::mt19937_64 rng(seed);
    std::vector<Ranking> samples;
    samples.reserve(n_samples);
    std::vector<int> pool;
    for (int s = 0; s < n_samples; ++s) {
        pool.resize(n);
        std::iota(pool.begin(), pool.end(), 0);
        Ranking ranking;
        ranking.ids.reserve(n);
        while (!pool.empty()) {
            double max_s = -std::numeric_limits<double>::infinity();
            for (int j : pool) max_s = std::max(max_s, scores[j]);
            double z = 0.0;
            for (int j : pool) z += std::exp(scores[j] - max_s);

            const double u = canonical_uniform(rng) * z;
            double acc = 0.0;
            std::size_t pick = pool.size() - 1;  // guard against FP shortfall
            for (std::size_t m = 0; m < pool.size(); ++m) {
                acc += std::exp(scores[pool[m]] - max_s);
                if (u < acc) {
                    pick = m;
                    break;
                }
            }
            ranking.ids.push_back(set.candidates[pool[pick]].id);
            pool.erase(pool.begin() + pick);
        }
        samples.push_back(std::move(ranking));
    }
    return samples;
}

double policy_surrogate_loss(const ToyRankPolicy& policy,
                             const std::vector<PolicyRolloutGroup>& groups,
                             const GrpoConfig& config) {
    double loss = 0.0;
    for (const auto& group : groups) {
        const auto scores = candidate_scores(policy, group.features);
        const std::size_t n = group.rankings.size();
        if (n == 0) continue;
        double group_loss = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double logp = logprob_of_order(scores, group.rankings[i]);
            const double delta = logp - group.logp_reference[i];
            group_loss += sample_term(delta, group.advantages[i], config).loss;
        }
        loss += group_loss / static_cast<double>(n);
    }
    return loss;
}

std::vector<double> policy_surrogate_gradient(
    const ToyRankPolicy& policy, const std::vector<PolicyRolloutGroup>& groups,
    const GrpoConfig& config) {
    std::vector<double> grad(kPolicyFeatureDim, 0.0);
    for (const auto& group : groups) {
        const auto scores = candidate_scores(policy, group.features);
        const std::size_t n = group.rankings.size();
        if (n == 0) continue;
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double logp = logprob_of_order(scores, group.rankings[i]);
            const double delta = logp - group.logp_reference[i];
            const auto term = sample_term(delta, group.advantages[i], config);
            accumulate_logprob_gradient(scores, group.features, group.rankings[i],
                                        inv_n * term.dloss_ddelta, grad);
        }
    }
    return grad;
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    auto splitmix = [](std::uint64_t x) {
        x += 0x9E3779B97F4A7C15ull;
        x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
        x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
        return x ^ (x >> 31);
    };
    return splitmix(splitmix(splitmix(a) ^ b) ^ c);
}

TrainResult train_toy_policy(
    const std::vector<std::pair<CandidateSet, Ranking>>& dataset,
    const GrpoConfig& config, const GammaWeights& gammas, double rbo_p) {
    if (dataset.empty()) throw DataError("empty training dataset");
    if (config.group_size < 2) throw DataError("group_size must be >= 2");
    if (config.iterations < 1) throw DataError("iterations must be >= 1");
    for (const auto& [set, label] : dataset) {
        if (!is_permutation(label, set)) {
            throw DataError("label is not a permutation of its candidate set");
        }
    }

    TrainResult result;
    for (int iter = 0; iter < config.iterations; ++iter) {
        const ToyRankPolicy reference = result.policy;  // refreshed per iteration

        std::vector<PolicyRolloutGroup> groups(dataset.size());
        double reward_sum = 0.0;
        double task_sum = 0.0;
        std::size_t sample_count = 0;

        // Each group's rollout depends only on (seed, iteration, set index),
        // never on processing order, so this loop parallelizes cleanly.
        for (std::size_t gi = 0; gi < dataset.size(); ++gi) {
            const auto& [set, label] = dataset[gi];
            const std::uint64_t group_seed =
                mix_seed(config.seed, static_cast<std::uint64_t>(iter), gi);
            auto samples =
                sample_rankings(reference, set, config.group_size, group_seed);

            PolicyRolloutGroup group;
            group.features = extract_features(set);
            for (auto& ranking : samples) {
                const auto task = rerank_task_reward(ranking, label, gammas, rbo_p);
                const double reward = 0.5 + task.value;  // always a permutation
                group.rankings.push_back(ranking_to_indices(set, ranking));
                group.rewards.push_back(reward);
                task_sum += task.value;
                reward_sum += reward;
                ++sample_count;
            }
            const auto scores = candidate_scores(reference, group.features);
            for (const auto& order : group.rankings) {
                group.logp_reference.push_back(logprob_of_order(scores, order));
            }
            group.advantages = compute_advantages(group.rewards);
            groups[gi] = std::move(group);
        }

        result.mean_reward_trace.push_back(reward_sum /
                                           static_cast<double>(sample_count));
        result.mean_task_reward_trace.push_back(task_sum /
                                                static_cast<double>(sample_count));

        const auto grad = policy_surrogate_gradient(result.policy, groups, config);
        for (int d = 0; d < kPolicyFeatureDim; ++d) {
            result.policy.theta[d] -= config.learning_rate * grad[d];
        }
    }
    return result;
}

}  // namespace rankpipe
