#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "itgpt/adam.hpp"
#include "itgpt/checkpoint.hpp"
#include "itgpt/config.hpp"
#include "itgpt/metrics.hpp"

namespace itgpt {

struct EpochTrace {
    int epoch;
    std::string split;  // train | valid
    double loss;
};

struct MetricValue {
    std::string metric;
    std::string klass;  // class id, "macro", or "" for scalars
    std::optional<double> value;
};

struct EvalResult {
    ScoredPredictions preds;
    double loss = 0.0;
    std::vector<MetricValue> metrics;

    std::optional<double> find(const std::string& metric, const std::string& klass = "") const;
};

struct TrainResult {
    ItgptModel model;
    std::vector<EpochTrace> traces;
    EvalResult final_eval;
    std::vector<size_t> labeled;  // resolved set of labeled training indices
    double resolved_lambda = 0.0;
    bool diverged = false;
    int completed_epochs = 0;
    std::vector<std::string> warnings;
};

// ADAM training per the configured scheme over per-observation tapes with
// batch gradient accumulation; validation always runs in eval mode.
TrainResult train(const Dataset& train_set, const Dataset& valid_set, const TrainConfig& cfg);

// Metrics plus scheme loss over a dataset, eval mode. epoch picks the loss
// phase for GPT->CE traces; 0 means the final phase.
EvalResult evaluate(const ItgptModel& model, const Dataset& data, const TrainConfig& cfg,
                    int epoch = 0);

struct GridSpec {
    TrainConfig base;
    std::vector<int> depths;
    std::vector<MixingKind> mixings;
    std::vector<double> dropouts;
    std::vector<double> label_fractions;
    std::vector<Scheme> schemes;
    std::vector<uint64_t> seeds;

    // empty dimension lists fall back to the base config value
    size_t n_cells() const;
};

struct GridRow {
    int fold = 0;
    Scheme scheme = Scheme::CE;
    int depth = 1;
    MixingKind mixing = MixingKind::Linear;
    double dropout = 0.0;
    double p_l = 1.0;
    uint64_t seed = 0;
    std::string metric;
    std::string klass;
    std::optional<double> value;
};

struct GridOutcome {
    std::vector<GridRow> rows;
    std::vector<std::string> failures;  // cell failures; the grid continues
};

GridOutcome run_experiment_grid(const Dataset& ds, const GridSpec& grid,
                                const std::function<void(const std::string&)>& log = {});

}  // namespace itgpt
