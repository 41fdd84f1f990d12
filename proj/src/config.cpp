#include "itgpt/config.hpp"

namespace itgpt {

ModelConfig TrainConfig::model_config() const {
    ModelConfig cfg;
    cfg.d_k = d_k;
    cfg.d_o = d_o;
    cfg.d_a = d_a;
    cfg.depth = depth;
    cfg.anchor_len = anchor_len;
    cfg.mixing = mixing;
    cfg.dropout = dropout;
    cfg.linear_query_map = linear_query_map;
    cfg.lambda = lambda;
    return cfg;
}

void TrainConfig::validate() const {
    if (d_k <= 0 || d_k % 2) throw usage_error("d_k must be even and positive");
    if (d_o <= 0 || d_o % 2) throw usage_error("d_o must be even and positive");
    if (d_a <= 0) throw usage_error("d_a must be positive");
    if (depth < 1) throw usage_error("depth must be >= 1");
    if (anchor_len < 1) throw usage_error("anchor_len must be >= 1");
    if (!(dropout >= 0 && dropout < 1)) throw usage_error("dropout must be in [0,1)");
    if (!(label_fraction > 0 && label_fraction <= 1)) {
        throw usage_error("label_fraction must be in (0,1]");
    }
    if (batch_size < 1) throw usage_error("batch_size must be >= 1");
    if (!(learning_rate > 0)) throw usage_error("learning_rate must be positive");
    if (epochs < 1) throw usage_error("epochs must be >= 1");
    if (pretrain_epochs < 0 || finetune_epochs < 0 ||
        (scheme == Scheme::GPT_then_CE && pretrain_epochs + finetune_epochs < 1)) {
        throw usage_error("GPT->CE needs a positive pretrain+finetune epoch budget");
    }
    if (!(grad_clip >= 0)) throw usage_error("grad_clip must be >= 0");
    if (split != "kfold" && split != "timeseries") {
        throw usage_error("split must be kfold or timeseries");
    }
    if (split == "kfold" && folds < 2) throw usage_error("kfold needs folds >= 2");
    if (split == "timeseries" && !(train_frac > 0 && train_frac < 1)) {
        throw usage_error("train_frac must be in (0,1)");
    }
    if (eval_every < 0) throw usage_error("eval_every must be >= 0");
}

KvMap TrainConfig::to_kv() const {
    KvMap kv;
    kv["d_k"] = std::to_string(d_k);
    kv["d_o"] = std::to_string(d_o);
    kv["d_a"] = std::to_string(d_a);
    kv["depth"] = std::to_string(depth);
    kv["anchor_len"] = std::to_string(anchor_len);
    kv["mixing"] = mixing_name(mixing);
    kv["dropout"] = format_double(dropout);
    kv["query_map"] = linear_query_map ? "linear" : "identity";
    kv["lambda"] = lambda == 0.0 ? "auto" : format_double(lambda);
    kv["scheme"] = scheme_name(scheme);
    kv["label_fraction"] = format_double(label_fraction);
    kv["batch_size"] = std::to_string(batch_size);
    kv["learning_rate"] = format_double(learning_rate);
    kv["epochs"] = std::to_string(epochs);
    kv["pretrain_epochs"] = std::to_string(pretrain_epochs);
    kv["finetune_epochs"] = std::to_string(finetune_epochs);
    kv["grad_clip"] = format_double(grad_clip);
    if (censored_class) kv["censored_class"] = std::to_string(*censored_class);
    kv["log_normalize"] = log_normalize ? "true" : "false";
    kv["folds"] = std::to_string(folds);
    kv["split"] = split;
    kv["train_frac"] = format_double(train_frac);
    kv["eval_every"] = std::to_string(eval_every);
    kv["seed"] = std::to_string(seed);
    kv["fold_seed"] = std::to_string(fold_seed);
    return kv;
}

TrainConfig TrainConfig::from_kv(const KvMap& kv, const std::string& context) {
    TrainConfig cfg;
    for (const auto& [key, value] : kv) {
        std::string ctx = context + " key '" + key + "'";
        if (key == "d_k") cfg.d_k = static_cast<int>(parse_long(value, ctx));
        else if (key == "d_o") cfg.d_o = static_cast<int>(parse_long(value, ctx));
        else if (key == "d_a") cfg.d_a = static_cast<int>(parse_long(value, ctx));
        else if (key == "depth") cfg.depth = static_cast<int>(parse_long(value, ctx));
        else if (key == "anchor_len") cfg.anchor_len = static_cast<int>(parse_long(value, ctx));
        else if (key == "mixing") cfg.mixing = parse_mixing(value);
        else if (key == "dropout") cfg.dropout = parse_double(value, ctx);
        else if (key == "query_map") {
            if (value == "linear") cfg.linear_query_map = true;
            else if (value == "identity") cfg.linear_query_map = false;
            else throw usage_error(ctx + ": expected identity or linear");
        } else if (key == "lambda") {
            cfg.lambda = value == "auto" ? 0.0 : parse_double(value, ctx);
        } else if (key == "scheme") cfg.scheme = parse_scheme(value);
        else if (key == "label_fraction") cfg.label_fraction = parse_double(value, ctx);
        else if (key == "batch_size") cfg.batch_size = static_cast<int>(parse_long(value, ctx));
        else if (key == "learning_rate") cfg.learning_rate = parse_double(value, ctx);
        else if (key == "epochs") cfg.epochs = static_cast<int>(parse_long(value, ctx));
        else if (key == "pretrain_epochs") cfg.pretrain_epochs = static_cast<int>(parse_long(value, ctx));
        else if (key == "finetune_epochs") cfg.finetune_epochs = static_cast<int>(parse_long(value, ctx));
        else if (key == "grad_clip") cfg.grad_clip = parse_double(value, ctx);
        else if (key == "censored_class") cfg.censored_class = static_cast<int>(parse_long(value, ctx));
        else if (key == "log_normalize") cfg.log_normalize = value == "true" || value == "1";
        else if (key == "folds") cfg.folds = static_cast<int>(parse_long(value, ctx));
        else if (key == "split") cfg.split = value;
        else if (key == "train_frac") cfg.train_frac = parse_double(value, ctx);
        else if (key == "eval_every") cfg.eval_every = static_cast<int>(parse_long(value, ctx));
        else if (key == "seed") cfg.seed = static_cast<uint64_t>(parse_long(value, ctx));
        else if (key == "fold_seed") cfg.fold_seed = static_cast<uint64_t>(parse_long(value, ctx));
        else throw usage_error(context + ": unknown config key '" + key + "'");
    }
    cfg.validate();
    return cfg;
}

}  // namespace itgpt
