#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "rankpipe/core.hpp"
#include "rankpipe/serde.hpp"

namespace rankpipe {

/// Fixed scoring weights behind the learnable-by-construction labels.
inline constexpr std::array<double, 5> kLearnableTheta = {1.0, 0.7, 0.3, 0.2, 0.5};

/**
 * Candidate sets whose labels are exactly the descending feature-score
 * ordering under kLearnableTheta, so a linear listwise policy can recover
 * them. Deterministic for a given seed.
 */
std::vector<std::pair<CandidateSet, Ranking>> make_learnable_dataset(
    int n_queries, int candidates_per_query, std::uint64_t seed);

/**
 * A desk-scale evaluation dataset cycling through the three query types,
 * with labels from the same feature-score ordering. Candidate counts vary
 * per query; all sets validate cleanly.
 */
std::vector<DatasetRecord> make_synthetic_eval_dataset(int n_queries,
                                                       std::uint64_t seed);

}  // namespace rankpipe
