#pragma once

#include <optional>
#include <string>

#include "itgpt/itgpt.hpp"
#include "itgpt/objectives.hpp"
#include "itgpt/util.hpp"

namespace itgpt {

// Everything a training run needs, serializable as plain key=value text.
// Defaults follow the paper's fixed hyperparameters; epoch budgets are 20
// for CE and CE+SSL and pretrain+finetune (2+5) for GPT->CE.
struct TrainConfig {
    // architecture
    int d_k = 32;
    int d_o = 32;
    int d_a = 64;
    int depth = 1;
    int anchor_len = 64;
    MixingKind mixing = MixingKind::Linear;
    double dropout = 0.0;
    bool linear_query_map = false;
    double lambda = 0.0;  // 0 = auto: 10 x largest training timestamp

    // optimization
    Scheme scheme = Scheme::CE;
    double label_fraction = 1.0;
    int batch_size = 64;
    double learning_rate = 5e-4;
    int epochs = 20;
    int pretrain_epochs = 2;
    int finetune_epochs = 5;
    double grad_clip = 0.0;  // 0 = off
    std::optional<int> censored_class;

    // data handling
    bool log_normalize = false;
    int folds = 5;
    std::string split = "kfold";  // kfold | timeseries
    double train_frac = 0.7;       // timeseries split
    int eval_every = 1;            // 0 = final epoch only

    uint64_t seed = 1;
    uint64_t fold_seed = 1789;  // fixed independently of seed so folds match across cells

    int total_epochs() const {
        return scheme == Scheme::GPT_then_CE ? pretrain_epochs + finetune_epochs : epochs;
    }
    ModelConfig model_config() const;
    void validate() const;

    KvMap to_kv() const;
    static TrainConfig from_kv(const KvMap& kv, const std::string& context);
};

}  // namespace itgpt
