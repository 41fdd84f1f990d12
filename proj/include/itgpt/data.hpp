#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "itgpt/tensor.hpp"

namespace itgpt {

// One modality of one observation: values on the modality's own timeline.
// Timelines are non-decreasing; duplicate timestamps within a modality are
// kept (both rows attend and are attended).
struct ModalitySeries {
    std::string name;
    std::vector<double> times;
    Tensor values;  // [L_m x d_m]
};

struct TargetSeries {
    std::vector<double> times;  // [L_y]
    std::vector<int> labels;    // class ids in [0, d_c)

    Tensor one_hot(int n_classes) const;
};

struct Observation {
    std::string id;
    std::vector<ModalitySeries> modalities;
    std::optional<TargetSeries> target;

    // span over all modality samples; throws if every modality is empty
    std::pair<double, double> span() const;
    bool empty() const;
};

struct DatasetSchema {
    std::vector<std::string> modality_names;
    std::vector<int> modality_dims;
    int n_classes = 0;
    std::vector<std::string> class_names;  // optional; empty or n_classes entries

    int n_modalities() const { return static_cast<int>(modality_names.size()); }
    void validate() const;
    std::string to_text() const;
    static DatasetSchema from_text(const std::string& text, const std::string& context);
};

struct Dataset {
    DatasetSchema schema;
    std::vector<Observation> observations;

    size_t size() const { return observations.size(); }
    double max_timestamp() const;
};

struct ParseReport {
    size_t n_observations = 0;
    size_t n_samples = 0;
    size_t n_target_rows = 0;
    size_t n_duplicate_times = 0;
    double t_min = 0, t_max = 0;

    std::string summary() const;
};

// Directory layout: <dir>/schema.txt plus one obs_<id>/ directory per
// observation holding <modality>.tsv (time + d_m columns) and an optional
// target.tsv (time + class id). Documented in the README.
Dataset load_dataset(const std::string& dir, ParseReport* report = nullptr);
void save_dataset(const Dataset& ds, const std::string& dir);

uint64_t dataset_fingerprint(const std::string& dir);

// x -> ln(1+x); input must be nonnegative.
Tensor log_normalize(const Tensor& values);
void log_normalize_dataset(Dataset& ds);

// deltas[0] = 0, deltas[j] = times[j] - times[j-1]
std::vector<double> time_deltas(std::span<const double> times);

Dataset subset(const Dataset& ds, std::span<const size_t> indices);

// k disjoint validation folds covering all indices, sizes differing by <= 1.
std::vector<std::vector<size_t>> split_kfold(size_t n, int k, uint64_t seed);

// Per-observation cut at the train_frac quantile of its time span; samples
// strictly before the cut go to train, the rest to valid. Observations that
// end up empty on one side are dropped from that side (warning collected).
std::pair<Dataset, Dataset> split_timeseries(const Dataset& ds, double train_frac,
                                             std::vector<std::string>* warnings = nullptr);

}  // namespace itgpt
