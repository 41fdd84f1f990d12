#pragma once

#include <optional>
#include <set>
#include <span>
#include <vector>

#include "itgpt/data.hpp"
#include "itgpt/tape.hpp"

namespace itgpt {

enum class Scheme { CE, CE_SSL, GPT_then_CE };

const char* scheme_name(Scheme s);
Scheme parse_scheme(const std::string& name);  // usage_error lists valid spellings

struct LossConfig {
    Scheme scheme = Scheme::CE;
    int pretrain_epochs = 2;
    int finetune_epochs = 5;
    std::set<size_t> labeled;  // indices of training observations with revealed labels
    std::optional<int> censored_class;
};

struct CeLoss {
    Var loss;
    long included_rows = 0;

    bool empty() const { return included_rows == 0; }  // "empty CE" warning signal
};

// Mean over included rows of -sum_k y_k ln max(p_k, 1e-12). Rows are excluded
// when uncovered by the head or labeled with the censored class; an empty
// inclusion set yields loss 0 with included_rows == 0.
CeLoss ce_loss(Tape& tape, const Tensor& true_onehot, Var probs,
               std::optional<int> censored_class, std::span<const uint8_t> coverage);

struct SslLoss {
    Var loss;
    long included_rows = 0;
};

// sum_m (1/L_m) sum over covered rows with t >= 2 of ||x_t - xhat_t||^2.
// The 1/L_m normalization is kept even though the t=1 term is absent.
SslLoss ssl_mse_loss(Tape& tape, const Observation& obs, std::span<const Var> predictions,
                     const std::vector<std::vector<uint8_t>>& coverage);

// ssl + (i in labeled ? ce : 0); the CE graph should simply not be built for
// unlabeled observations, which keeps label-head gradients exactly zero.
Var combined_loss(size_t obs_index, const LossConfig& cfg, std::optional<Var> ce, Var ssl);

enum class PhaseUse { UseMse, UseCe, Skip };

// Two-phase schedule: MSE pretraining for the first pretrain_epochs, then CE
// fine-tuning on labeled observations only. epoch is 1-based.
PhaseUse schedule_select(int epoch, size_t obs_index, const LossConfig& cfg);

// Deterministic subset of ~fraction*N observation indices, stratified by each
// observation's most frequent class when targets exist.
std::vector<size_t> subsample_labels(const Dataset& ds, std::span<const size_t> indices,
                                     double fraction, uint64_t seed);

}  // namespace itgpt
