#include "itgpt/metrics.hpp"

#include <algorithm>
#include <stdexcept>

namespace itgpt {

void ScoredPredictions::validate() const {
    if (scores.rank() != 2) throw std::invalid_argument("scores must be [n x d_c]");
    if (static_cast<size_t>(scores.extent(0)) != truths.size()) {
        throw std::invalid_argument("scores rows do not match truth count");
    }
    if (!included.empty() && included.size() != truths.size()) {
        throw std::invalid_argument("exclusion mask length does not match rows");
    }
    for (int t : truths) {
        if (t < 0 || t >= n_classes()) {
            throw std::invalid_argument("truth class " + std::to_string(t) + " out of range");
        }
    }
}

namespace {

// included row indices sorted by descending score for one class, stable in
// original order on ties
std::vector<size_t> ranked_rows(const ScoredPredictions& preds, int klass) {
    std::vector<size_t> rows;
    for (size_t r = 0; r < preds.n_rows(); ++r) {
        if (preds.row_included(r)) rows.push_back(r);
    }
    std::stable_sort(rows.begin(), rows.end(), [&](size_t a, size_t b) {
        return preds.scores.at(static_cast<int>(a), klass) >
               preds.scores.at(static_cast<int>(b), klass);
    });
    return rows;
}

}  // namespace

PerClassResult auprc_macro_ovr(const ScoredPredictions& preds) {
    preds.validate();
    PerClassResult result;
    result.per_class.assign(static_cast<size_t>(preds.n_classes()), std::nullopt);
    double sum = 0;
    int defined = 0;
    for (int c = 0; c < preds.n_classes(); ++c) {
        auto rows = ranked_rows(preds, c);
        long positives = 0;
        for (size_t r : rows) positives += preds.truths[r] == c ? 1 : 0;
        if (positives == 0) {
            result.skipped_classes.push_back(c);
            continue;
        }
        long hits = 0;
        double ap = 0;
        for (size_t rank = 0; rank < rows.size(); ++rank) {
            if (preds.truths[rows[rank]] == c) {
                ++hits;
                double precision = static_cast<double>(hits) / static_cast<double>(rank + 1);
                ap += precision / static_cast<double>(positives);
            }
        }
        result.per_class[static_cast<size_t>(c)] = ap;
        sum += ap;
        ++defined;
    }
    if (defined > 0) result.macro = sum / defined;
    return result;
}

double auroc(const ScoredPredictions& preds, int positive_class) {
    preds.validate();
    // Mann-Whitney via average ranks; exact in halves, so it matches the
    // O(n^2) pairwise count bit for bit at these sizes.
    std::vector<std::pair<double, int>> rows;  // (score, is_positive)
    for (size_t r = 0; r < preds.n_rows(); ++r) {
        if (!preds.row_included(r)) continue;
        rows.push_back({preds.scores.at(static_cast<int>(r), positive_class),
                        preds.truths[r] == positive_class ? 1 : 0});
    }
    std::sort(rows.begin(), rows.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    size_t n = rows.size();
    long positives = 0;
    for (const auto& [s, p] : rows) positives += p;
    long negatives = static_cast<long>(n) - positives;
    if (positives == 0 || negatives == 0) {
        throw std::invalid_argument("auroc needs at least one positive and one negative");
    }
    double rank_sum = 0;  // average ranks over positive rows, 1-based
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j < n && rows[j].first == rows[i].first) ++j;
        double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
        for (size_t t = i; t < j; ++t) {
            if (rows[t].second) rank_sum += avg_rank;
        }
        i = j;
    }
    double u = rank_sum - 0.5 * static_cast<double>(positives) * (positives + 1);
    return u / (static_cast<double>(positives) * static_cast<double>(negatives));
}

ThresholdMetrics threshold_metrics(const ScoredPredictions& preds, int positive_class,
                                   double threshold) {
    preds.validate();
    ThresholdMetrics m;
    for (size_t r = 0; r < preds.n_rows(); ++r) {
        if (!preds.row_included(r)) continue;
        bool truth = preds.truths[r] == positive_class;
        bool pred = preds.scores.at(static_cast<int>(r), positive_class) >= threshold;
        if (truth && pred) ++m.tp;
        else if (truth) ++m.fn;
        else if (pred) ++m.fp;
        else ++m.tn;
    }
    if (m.tp + m.fn > 0) m.recall = static_cast<double>(m.tp) / (m.tp + m.fn);
    if (m.tn + m.fp > 0) m.specificity = static_cast<double>(m.tn) / (m.tn + m.fp);
    if (m.tp + m.fp > 0) m.precision = static_cast<double>(m.tp) / (m.tp + m.fp);
    if (m.precision && m.recall && (*m.precision + *m.recall) > 0) {
        m.f1 = 2.0 * *m.precision * *m.recall / (*m.precision + *m.recall);
    }
    return m;
}

Tensor confusion_matrix(const ScoredPredictions& preds) {
    preds.validate();
    int classes = preds.n_classes();
    Tensor counts({classes, classes});
    for (size_t r = 0; r < preds.n_rows(); ++r) {
        if (!preds.row_included(r)) continue;
        int best = 0;
        for (int c = 1; c < classes; ++c) {
            if (preds.scores.at(static_cast<int>(r), c) >
                preds.scores.at(static_cast<int>(r), best)) {
                best = c;
            }
        }
        counts.at(preds.truths[r], best) += 1.0;
    }
    return counts;
}

}  // namespace itgpt
