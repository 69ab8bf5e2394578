#include "rankpipe/datagen.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "rankpipe/grpo.hpp"

namespace rankpipe {

namespace {

constexpr std::int64_t kEpoch = 1690000000;

double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

CandidateSet random_set(const Query& query, int n_candidates,
                        std::mt19937_64& rng) {
    CandidateSet set;
    set.query = query;
    for (int c = 0; c < n_candidates; ++c) {
        Candidate candidate;
        candidate.id = "c" + std::to_string(c);
        candidate.title = "Candidate " + std::to_string(c);
        candidate.content = "Body of candidate " + std::to_string(c);
        candidate.side.publish_time =
            kEpoch + static_cast<std::int64_t>(rng() % 20000000ull);
        candidate.side.click_through_rate = uniform01(rng);
        candidate.side.completion_rate = uniform01(rng);
        candidate.cover_image_ref = "img://" + query.text + "/" + candidate.id;
        candidate.relevance_grade =
            Grade{static_cast<int>(rng() % 4) + 1, GradeDimension::Relevance};
        candidate.quality_grade =
            Grade{static_cast<int>(rng() % 4) + 1, GradeDimension::Quality};
        set.candidates.push_back(std::move(candidate));
    }
    return set;
}

Ranking feature_score_label(const CandidateSet& set) {
    const auto features = extract_features(set);
    std::vector<std::size_t> order(set.candidates.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> score(set.candidates.size(), 0.0);
    for (std::size_t i = 0; i < features.size(); ++i) {
        for (std::size_t d = 0; d < kLearnableTheta.size(); ++d) {
            score[i] += kLearnableTheta[d] * features[i][d];
        }
    }
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return score[a] > score[b];
    });
    Ranking label;
    for (const auto i : order) label.ids.push_back(set.candidates[i].id);
    return label;
}

}  // namespace

std::vector<std::pair<CandidateSet, Ranking>> make_learnable_dataset(
    int n_queries, int candidates_per_query, std::uint64_t seed) {
    std::vector<std::pair<CandidateSet, Ranking>> dataset;
    dataset.reserve(n_queries);
    for (int q = 0; q < n_queries; ++q) {
        std::mt19937_64 rng(mix_seed(seed, 0x11, static_cast<std::uint64_t>(q)));
        Query query{"synthetic query " + std::to_string(q), {}};
        auto set = random_set(query, candidates_per_query, rng);
        auto label = feature_score_label(set);
        dataset.emplace_back(std::move(set), std::move(label));
    }
    return dataset;
}

std::vector<DatasetRecord> make_synthetic_eval_dataset(int n_queries,
                                                       std::uint64_t seed) {
    static const char* kComplexTemplates[] = {
        "laptop %d vs tablet %d which is better",
        "which is better to buy, phone %d or phone %d",
    };
    static const char* kBroadTemplates[] = {
        "city %d travel guide",
        "hobby %d getting started guide",
    };
    static const char* kSimpleTemplates[] = {
        "weather in town %d today",
        "opening hours of museum %d",
    };

    std::vector<DatasetRecord> records;
    records.reserve(n_queries);
    for (int q = 0; q < n_queries; ++q) {
        std::mt19937_64 rng(mix_seed(seed, 0x22, static_cast<std::uint64_t>(q)));
        DatasetRecord record;

        char text[128];
        switch (q % 3) {
            case 0:
                record.query_type = QueryType::Complex;
                std::snprintf(text, sizeof(text), kComplexTemplates[q % 2], q, q + 1);
                break;
            case 1:
                record.query_type = QueryType::BroadNeeds;
                std::snprintf(text, sizeof(text), kBroadTemplates[q % 2], q);
                break;
            default:
                record.query_type = QueryType::Simple;
                std::snprintf(text, sizeof(text), kSimpleTemplates[q % 2], q);
                break;
        }
        Query query{text, {}};
        if (q % 4 == 0) {
            query.session = {"earlier query " + std::to_string(q),
                             "another refinement " + std::to_string(q)};
        }

        const int n_candidates = 6 + static_cast<int>(rng() % 7);  // 6..12
        record.set = random_set(query, n_candidates, rng);
        record.label = feature_score_label(record.set);
        records.push_back(std::move(record));
    }
    return records;
}

}  // namespace rankpipe
