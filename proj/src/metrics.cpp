#include "rankpipe/metrics.hpp"

#include <cmath>
#include <unordered_map>
#include <unordered_set>

#include "rankpipe/errors.hpp"

namespace rankpipe {

namespace {

std::unordered_map<std::string, int> position_index(const Ranking& ranking) {
    std::unordered_map<std::string, int> pos;
    pos.reserve(ranking.ids.size());
    for (std::size_t i = 0; i < ranking.ids.size(); ++i) {
        if (!pos.emplace(ranking.ids[i], static_cast<int>(i) + 1).second) {
            throw DataError("duplicate id in ranking: " + ranking.ids[i]);
        }
    }
    return pos;
}

void require_same_id_set(const Ranking& pred, const Ranking& label) {
    if (!is_permutation_of_ids(pred.ids, label.ids)) {
        throw DataError("pred and label rankings are not over the same id set");
    }
}

void require_cutoff(int k, std::size_t n) {
    if (k < 1 || static_cast<std::size_t>(k) > n) {
        throw DataError("cutoff k out of range [1,n]");
    }
}

}  // namespace

int relevance_gain(const std::string& doc_id, const Ranking& label_ranking, int k) {
    const int n = static_cast<int>(label_ranking.ids.size());
    require_cutoff(k, label_ranking.ids.size());
    for (int i = 0; i < n; ++i) {
        if (label_ranking.ids[i] == doc_id) {
            const int label_pos = i + 1;  // 1-indexed
            return label_pos <= k ? n - label_pos : 0;
        }
    }
    throw DataError("id not in label ranking: " + doc_id);
}

double ndcg_at_k(const Ranking& pred, const Ranking& label, int k) {
    require_same_id_set(pred, label);
    const int n = static_cast<int>(label.ids.size());
    require_cutoff(k, label.ids.size());
    if (n == 1) return 1.0;  // 0/0 guard: a one-item list is perfectly ordered

    const auto label_pos = position_index(label);

    double dcg = 0.0;
    double idcg = 0.0;
    for (int i = 1; i <= k; ++i) {
        const double discount = std::log2(static_cast<double>(i) + 1.0);
        const int pos = label_pos.at(pred.ids[i - 1]);
        if (pos <= k) dcg += static_cast<double>(n - pos) / discount;
        idcg += static_cast<double>(n - i) / discount;
    }
    return dcg / idcg;
}

double recall_at_k(const Ranking& pred, const Ranking& label, int k) {
    require_same_id_set(pred, label);
    require_cutoff(k, label.ids.size());

    std::unordered_set<std::string> label_top(label.ids.begin(),
                                              label.ids.begin() + k);
    int hits = 0;
    for (int i = 0; i < k; ++i) {
        if (label_top.count(pred.ids[i])) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(k);
}

double rbo(const Ranking& pred, const Ranking& label, double p) {
    if (!(p > 0.0 && p < 1.0)) throw DataError("rbo persistence p must be in (0,1)");
    if (pred.ids.size() != label.ids.size()) {
        throw DataError("rbo requires equal-length rankings");
    }
    // The two rankings need not share an id set (pairwise use compares
    // answers over different sets; non-shared ids simply never overlap),
    // but each must be duplicate-free.
    (void)position_index(pred);
    (void)position_index(label);

    const std::size_t n = pred.ids.size();

    // Incremental overlap: track elements seen in exactly one of the two
    // prefixes; an element leaving the pending set raises the overlap.
    std::unordered_set<std::string> pending;
    std::size_t overlap = 0;
    double weight = 1.0;  // p^(d-1)
    double sum = 0.0;
    for (std::size_t d = 1; d <= n; ++d) {
        const std::string& a = pred.ids[d - 1];
        const std::string& b = label.ids[d - 1];
        if (a == b) {
            ++overlap;
        } else {
            if (pending.erase(a)) ++overlap; else pending.insert(a);
            if (pending.erase(b)) ++overlap; else pending.insert(b);
        }
        sum += weight * static_cast<double>(overlap) / static_cast<double>(d);
        weight *= p;
    }
    return (1.0 - p) * sum;
}

double rbo_normalized(const Ranking& pred, const Ranking& label, double p) {
    const double n = static_cast<double>(pred.ids.size());
    return rbo(pred, label, p) / (1.0 - std::pow(p, n));
}

}  // namespace rankpipe
