#pragma once

// Brute-force metric oracles shared by the unit tests and the acceptance
// suite. Deliberately quadratic / exhaustive; only correctness matters here.

#include <algorithm>
#include <vector>

#include "itgpt/metrics.hpp"

namespace itgpt::test_oracles {

// O(n^2) pairwise Mann-Whitney count, ties 1/2
inline double auroc_pairwise(const ScoredPredictions& p, int klass) {
    double score = 0;
    long pairs = 0;
    for (size_t i = 0; i < p.n_rows(); ++i) {
        if (!p.row_included(i) || p.truths[i] != klass) continue;
        for (size_t j = 0; j < p.n_rows(); ++j) {
            if (!p.row_included(j) || p.truths[j] == klass) continue;
            double si = p.scores.at(static_cast<int>(i), klass);
            double sj = p.scores.at(static_cast<int>(j), klass);
            score += si > sj ? 1.0 : si == sj ? 0.5 : 0.0;
            ++pairs;
        }
    }
    return score / static_cast<double>(pairs);
}

// exhaustive prefix enumeration of the average-precision sum
inline double ap_prefix(const ScoredPredictions& p, int klass) {
    std::vector<size_t> rows;
    for (size_t r = 0; r < p.n_rows(); ++r)
        if (p.row_included(r)) rows.push_back(r);
    std::stable_sort(rows.begin(), rows.end(), [&](size_t a, size_t b) {
        return p.scores.at(static_cast<int>(a), klass) > p.scores.at(static_cast<int>(b), klass);
    });
    long positives = 0;
    for (size_t r : rows) positives += p.truths[r] == klass ? 1 : 0;
    double ap = 0;
    long hits = 0;
    double prev_recall = 0;
    for (size_t rank = 0; rank < rows.size(); ++rank) {
        if (p.truths[rows[rank]] != klass) continue;
        ++hits;
        double recall = static_cast<double>(hits) / static_cast<double>(positives);
        double precision = static_cast<double>(hits) / static_cast<double>(rank + 1);
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    return ap;
}

struct CountedConfusion {
    long tp = 0, fp = 0, fn = 0, tn = 0;
};

inline CountedConfusion threshold_counts(const ScoredPredictions& p, int klass, double threshold) {
    CountedConfusion c;
    for (size_t r = 0; r < p.n_rows(); ++r) {
        if (!p.row_included(r)) continue;
        bool truth = p.truths[r] == klass;
        bool pred = p.scores.at(static_cast<int>(r), klass) >= threshold;
        if (truth && pred) ++c.tp;
        else if (truth) ++c.fn;
        else if (pred) ++c.fp;
        else ++c.tn;
    }
    return c;
}

inline std::vector<std::vector<long>> confusion_loop(const ScoredPredictions& p) {
    int classes = p.n_classes();
    std::vector<std::vector<long>> counts(static_cast<size_t>(classes),
                                          std::vector<long>(static_cast<size_t>(classes), 0));
    for (size_t r = 0; r < p.n_rows(); ++r) {
        if (!p.row_included(r)) continue;
        int best = 0;
        for (int c = 1; c < classes; ++c) {
            if (p.scores.at(static_cast<int>(r), c) > p.scores.at(static_cast<int>(r), best)) {
                best = c;
            }
        }
        counts[static_cast<size_t>(p.truths[r])][static_cast<size_t>(best)]++;
    }
    return counts;
}

}  // namespace itgpt::test_oracles
