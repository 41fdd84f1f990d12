#pragma once

#include <optional>
#include <vector>

#include "itgpt/tensor.hpp"

namespace itgpt {

struct ScoredPredictions {
    Tensor scores;                  // [n x d_c] class scores
    std::vector<int> truths;        // class ids in [0, d_c)
    std::vector<uint8_t> included;  // exclusion mask; empty means all included

    int n_classes() const { return scores.rank() == 2 ? scores.extent(1) : 0; }
    size_t n_rows() const { return truths.size(); }
    bool row_included(size_t r) const { return included.empty() || included[r]; }
    void validate() const;
};

struct PerClassResult {
    std::vector<std::optional<double>> per_class;  // nullopt = undefined for that class
    std::optional<double> macro;                   // mean over defined classes
    std::vector<int> skipped_classes;
};

// Macro one-vs-rest average precision: per class, sum over descending-score
// prefixes of (delta recall x precision). Classes with no positives are
// undefined and skipped from the macro mean, never imputed as 0.
PerClassResult auprc_macro_ovr(const ScoredPredictions& preds);

// Probability a random positive outscores a random negative; ties count 1/2.
// Requires at least one positive and one negative.
double auroc(const ScoredPredictions& preds, int positive_class);

struct ThresholdMetrics {
    long tp = 0, fp = 0, fn = 0, tn = 0;
    std::optional<double> recall, specificity, precision, f1;
};

// Binary metrics at a fixed threshold on scores[:, positive_class]; a row is
// predicted positive when its score is >= threshold. Zero-denominator ratios
// are undefined, not 0.
ThresholdMetrics threshold_metrics(const ScoredPredictions& preds, int positive_class,
                                   double threshold);

// counts[true][argmax predicted]; argmax ties break toward the lowest class.
Tensor confusion_matrix(const ScoredPredictions& preds);

}  // namespace itgpt
