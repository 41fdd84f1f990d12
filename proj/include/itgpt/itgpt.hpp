#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "itgpt/data.hpp"
#include "itgpt/itnet.hpp"

namespace itgpt {

// All trainable weights, addressable by path. std::map keeps iteration order
// deterministic for initialization, optimizer steps and serialization.
using ParamStore = std::map<std::string, Tensor>;

struct ModelConfig {
    int d_k = 32;
    int d_o = 32;
    int d_a = 64;
    int depth = 1;
    int anchor_len = 64;
    MixingKind mixing = MixingKind::Linear;
    double dropout = 0.0;
    bool linear_query_map = false;
    double lambda = 0.0;  // PE wavelength base, must exceed the largest timestamp

    void validate() const;
    PeConfig pe_key() const { return {d_k, lambda}; }
    PeConfig pe_value() const { return {d_o, lambda}; }
};

// Shared timeline the encoder projects all modalities onto; carries the
// residual state Z. Spans the observation's [t_min, t_max].
struct AnchorSpec {
    std::vector<double> times;

    int length() const { return static_cast<int>(times.size()); }
    static AnchorSpec uniform(double t_min, double t_max, int len);
    static AnchorSpec for_observation(const Observation& obs, int len);
};

struct ItgptOutput {
    Var anchor;                                       // Z^(depth) [L_a x d_a]
    std::vector<Var> embeddings;                      // E^(depth)_m [L_m x d_m]
    std::vector<std::vector<uint8_t>> embedding_coverage;  // final decoder coverage
};

struct LabelPrediction {
    Var logits;  // [L_y x d_c]; uncovered rows exactly zero
    std::vector<uint8_t> coverage;
};

// Stacked encoder/decoder pairs around the anchor residual, plus the label
// and next-step heads.
class ItgptModel {
public:
    ItgptModel(ModelConfig cfg, DatasetSchema schema);

    void init_params(uint64_t seed);

    const ModelConfig& config() const { return cfg_; }
    const DatasetSchema& schema() const { return schema_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    size_t param_count() const;

    // Per-tape binding of every parameter; gradients are read back by path.
    struct Bound {
        std::map<std::string, Var> by_path;
        Var at(const std::string& path) const;
    };
    Bound bind(Tape& tape) const;

    ItgptOutput forward(Tape& tape, const Bound& bound, const Observation& obs,
                        const AnchorSpec& anchor, bool training, Rng* rng) const;

    LabelPrediction predict_labels(Tape& tape, const Bound& bound, const ItgptOutput& out,
                                   const AnchorSpec& anchor,
                                   std::span<const double> target_times) const;

    std::vector<Var> predict_next_inputs(Tape& tape, const Bound& bound,
                                         const ItgptOutput& out) const;

private:
    ModelConfig cfg_;
    DatasetSchema schema_;
    ParamStore params_;

    void build_param_shapes();
    AttentionVars bind_attention(const Bound& bound, const std::string& prefix) const;
    MixingVars bind_mixing(const Bound& bound, const std::string& prefix) const;
};

}  // namespace itgpt
