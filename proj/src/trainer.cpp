#include "itgpt/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "itgpt/objectives.hpp"

namespace itgpt {

std::optional<double> EvalResult::find(const std::string& metric, const std::string& klass) const {
    for (const auto& m : metrics) {
        if (m.metric == metric && m.klass == klass) return m.value;
    }
    return std::nullopt;
}

namespace {

double resolve_lambda(const TrainConfig& cfg, const Dataset& train_set) {
    if (cfg.lambda > 0) return cfg.lambda;
    return 10.0 * std::max(train_set.max_timestamp(), 1.0);
}

struct ObsLoss {
    std::optional<Var> loss;
    long ce_rows = 0;
};

// Builds the scheme/epoch-appropriate loss for one observation on one tape.
// Returns nothing when the observation does not contribute this epoch; in
// that case no graph is built at all, so untouched heads get exactly zero
// gradient.
ObsLoss observation_loss(const ItgptModel& model, Tape& tape, const ItgptModel::Bound& bound,
                         const Observation& obs, const AnchorSpec& anchor, size_t index,
                         const LossConfig& loss_cfg, int epoch, bool training, Rng* rng) {
    bool has_target = obs.target && !obs.target->times.empty();
    bool labeled = loss_cfg.labeled.count(index) > 0 && has_target;

    bool want_ce = false, want_ssl = false;
    switch (loss_cfg.scheme) {
        case Scheme::CE:
            want_ce = labeled;
            break;
        case Scheme::CE_SSL:
            want_ssl = true;
            want_ce = labeled;
            break;
        case Scheme::GPT_then_CE:
            switch (schedule_select(epoch, index, loss_cfg)) {
                case PhaseUse::UseMse: want_ssl = true; break;
                case PhaseUse::UseCe: want_ce = labeled; break;
                case PhaseUse::Skip: break;
            }
            break;
    }
    if (!want_ce && !want_ssl) return {};

    ItgptOutput out = model.forward(tape, bound, obs, anchor, training, rng);

    std::optional<Var> ce;
    long ce_rows = 0;
    if (want_ce) {
        LabelPrediction pred = model.predict_labels(tape, bound, out, anchor, obs.target->times);
        Var probs = masked_softmax_rows(pred.logits, nullptr);
        CeLoss l = ce_loss(tape, obs.target->one_hot(model.schema().n_classes), probs,
                           loss_cfg.censored_class, pred.coverage);
        ce = l.loss;
        ce_rows = l.included_rows;
    }
    std::optional<Var> ssl;
    if (want_ssl) {
        std::vector<Var> preds = model.predict_next_inputs(tape, bound, out);
        ssl = ssl_mse_loss(tape, obs, preds, out.embedding_coverage).loss;
    }

    ObsLoss result;
    result.ce_rows = ce_rows;
    if (ce && ssl) result.loss = add(*ssl, *ce);
    else if (ce) result.loss = *ce;
    else result.loss = *ssl;
    return result;
}

void clip_gradients(GradMap& grads, double clip) {
    if (clip <= 0) return;
    double sq = 0;
    for (const auto& [p, g] : grads) {
        for (size_t i = 0; i < g.numel(); ++i) sq += g.data()[i] * g.data()[i];
    }
    double norm = std::sqrt(sq);
    if (norm <= clip) return;
    double s = clip / norm;
    for (auto& [p, g] : grads) {
        for (size_t i = 0; i < g.numel(); ++i) g.data()[i] *= s;
    }
}

double eval_loss(const ItgptModel& model, const Dataset& data, const LossConfig& base_cfg,
                 int epoch) {
    // at evaluation every labeled observation counts as labeled
    LossConfig cfg = base_cfg;
    cfg.labeled.clear();
    for (size_t i = 0; i < data.size(); ++i) cfg.labeled.insert(i);
    double sum = 0;
    long n = 0;
    for (size_t i = 0; i < data.size(); ++i) {
        const Observation& obs = data.observations[i];
        if (obs.empty()) continue;
        Tape tape;
        auto bound = model.bind(tape);
        AnchorSpec anchor = AnchorSpec::for_observation(obs, model.config().anchor_len);
        ObsLoss l = observation_loss(model, tape, bound, obs, anchor, i, cfg, epoch,
                                     /*training=*/false, nullptr);
        if (!l.loss) continue;
        sum += tape.value(*l.loss).as_scalar();
        ++n;
    }
    return n ? sum / static_cast<double>(n) : 0.0;
}

}  // namespace

EvalResult evaluate(const ItgptModel& model, const Dataset& data, const TrainConfig& cfg,
                    int epoch) {
    if (epoch == 0) epoch = cfg.total_epochs();
    LossConfig loss_cfg;
    loss_cfg.scheme = cfg.scheme;
    loss_cfg.pretrain_epochs = cfg.pretrain_epochs;
    loss_cfg.finetune_epochs = cfg.finetune_epochs;
    loss_cfg.censored_class = cfg.censored_class;

    EvalResult result;
    result.loss = eval_loss(model, data, loss_cfg, epoch);

    // pooled label predictions over every covered target row
    int d_c = model.schema().n_classes;
    std::vector<double> scores;
    std::vector<int> truths;
    std::vector<uint8_t> included;
    for (const auto& obs : data.observations) {
        if (obs.empty() || !obs.target || obs.target->times.empty() || d_c <= 0) continue;
        Tape tape;
        auto bound = model.bind(tape);
        AnchorSpec anchor = AnchorSpec::for_observation(obs, model.config().anchor_len);
        ItgptOutput out = model.forward(tape, bound, obs, anchor, false, nullptr);
        LabelPrediction pred = model.predict_labels(tape, bound, out, anchor, obs.target->times);
        Var probs = masked_softmax_rows(pred.logits, nullptr);
        const Tensor& p = tape.value(probs);
        for (size_t r = 0; r < obs.target->times.size(); ++r) {
            if (!pred.coverage[r]) continue;
            for (int c = 0; c < d_c; ++c) scores.push_back(p.at(static_cast<int>(r), c));
            truths.push_back(obs.target->labels[r]);
            bool censored = cfg.censored_class && obs.target->labels[r] == *cfg.censored_class;
            included.push_back(censored ? 0 : 1);
        }
    }
    result.preds.scores = Tensor({static_cast<int>(truths.size()), d_c > 0 ? d_c : 0},
                                 std::move(scores));
    result.preds.truths = std::move(truths);
    result.preds.included = std::move(included);

    if (result.preds.n_rows() > 0) {
        PerClassResult ap = auprc_macro_ovr(result.preds);
        result.metrics.push_back({"auprc", "macro", ap.macro});
        for (int c = 0; c < d_c; ++c) {
            result.metrics.push_back({"auprc", std::to_string(c), ap.per_class[static_cast<size_t>(c)]});
        }
        double auroc_sum = 0;
        int auroc_defined = 0;
        for (int c = 0; c < d_c; ++c) {
            std::optional<double> v;
            try {
                v = auroc(result.preds, c);
                auroc_sum += *v;
                ++auroc_defined;
            } catch (const std::invalid_argument&) {
                // single-class fold for this class: undefined
            }
            result.metrics.push_back({"auroc", std::to_string(c), v});
        }
        result.metrics.push_back(
            {"auroc", "macro",
             auroc_defined ? std::optional<double>(auroc_sum / auroc_defined) : std::nullopt});
        for (int c = 0; c < d_c; ++c) {
            ThresholdMetrics tm = threshold_metrics(result.preds, c, 0.5);
            std::string k = std::to_string(c);
            result.metrics.push_back({"recall", k, tm.recall});
            result.metrics.push_back({"specificity", k, tm.specificity});
            result.metrics.push_back({"precision", k, tm.precision});
            result.metrics.push_back({"f1", k, tm.f1});
        }
    }
    result.metrics.push_back({"eval_loss", "", result.loss});
    result.metrics.push_back({"eval_rows", "", static_cast<double>(result.preds.n_rows())});
    return result;
}

TrainResult train(const Dataset& train_set, const Dataset& valid_set, const TrainConfig& cfg_in) {
    TrainConfig cfg = cfg_in;
    cfg.validate();
    if (train_set.observations.empty()) throw data_error("training set is empty");

    Dataset train_data = train_set;
    Dataset valid_data = valid_set;
    if (cfg.log_normalize) {
        log_normalize_dataset(train_data);
        log_normalize_dataset(valid_data);
    }

    double lambda = resolve_lambda(cfg, train_data);
    cfg.lambda = lambda;

    TrainResult result{ItgptModel(cfg.model_config(), train_data.schema), {}, {}, {}, lambda,
                       false, 0, {}};
    ItgptModel& model = result.model;
    model.init_params(cfg.seed);
    if (valid_data.max_timestamp() >= lambda) {
        result.warnings.push_back("validation timestamps exceed PE lambda " +
                                  format_double(lambda));
    }

    // resolved label set
    LossConfig loss_cfg;
    loss_cfg.scheme = cfg.scheme;
    loss_cfg.pretrain_epochs = cfg.pretrain_epochs;
    loss_cfg.finetune_epochs = cfg.finetune_epochs;
    loss_cfg.censored_class = cfg.censored_class;
    std::vector<size_t> all_indices(train_data.size());
    for (size_t i = 0; i < all_indices.size(); ++i) all_indices[i] = i;
    bool any_target = false;
    for (const auto& obs : train_data.observations) {
        if (obs.target && !obs.target->labels.empty()) any_target = true;
    }
    if (any_target) {
        result.labeled = subsample_labels(train_data, all_indices, cfg.label_fraction, cfg.seed);
        loss_cfg.labeled.insert(result.labeled.begin(), result.labeled.end());
    } else if (cfg.scheme == Scheme::CE) {
        throw data_error("scheme CE needs labeled observations, none found");
    } else {
        result.warnings.push_back("no labeled observations; supervised terms are inactive");
    }

    std::vector<std::optional<AnchorSpec>> anchors(train_data.size());
    for (size_t i = 0; i < train_data.size(); ++i) {
        if (train_data.observations[i].empty()) {
            result.warnings.push_back("observation " + train_data.observations[i].id +
                                      " is empty and will be skipped");
            continue;
        }
        anchors[i] = AnchorSpec::for_observation(train_data.observations[i], cfg.anchor_len);
    }

    AdamState adam;
    Rng rng(Rng::derive(cfg.seed, 0x7a1));
    ParamStore snapshot = model.params();
    int total_epochs = cfg.total_epochs();

    for (int epoch = 1; epoch <= total_epochs; ++epoch) {
        double epoch_loss = 0;
        long epoch_obs = 0;
        std::vector<size_t> order = all_indices;
        rng.shuffle(order);
        try {
            for (size_t start = 0; start < order.size();
                 start += static_cast<size_t>(cfg.batch_size)) {
                size_t stop = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
                GradMap accum;
                long contributors = 0;
                for (size_t b = start; b < stop; ++b) {
                    size_t idx = order[b];
                    if (!anchors[idx]) continue;
                    Tape tape;
                    auto bound = model.bind(tape);
                    ObsLoss l = observation_loss(model, tape, bound, train_data.observations[idx],
                                                 *anchors[idx], idx, loss_cfg, epoch,
                                                 /*training=*/true, &rng);
                    if (!l.loss) continue;
                    tape.backward(*l.loss);
                    for (const auto& [path, var] : bound.by_path) {
                        Tensor g = tape.grad(var);
                        auto it = accum.find(path);
                        if (it == accum.end()) accum.emplace(path, std::move(g));
                        else it->second += g;
                    }
                    epoch_loss += tape.value(*l.loss).as_scalar();
                    ++contributors;
                }
                if (contributors == 0) continue;
                epoch_obs += contributors;
                double inv = 1.0 / static_cast<double>(contributors);
                for (auto& [path, g] : accum) {
                    for (size_t i = 0; i < g.numel(); ++i) g.data()[i] *= inv;
                }
                clip_gradients(accum, cfg.grad_clip);
                adam_step(model.params(), accum, adam, cfg.learning_rate);
            }
        } catch (const numeric_error& e) {
            model.params() = snapshot;
            result.diverged = true;
            result.warnings.push_back("diverged in epoch " + std::to_string(epoch) + ": " +
                                      e.what() + "; restored last good parameters");
            break;
        }
        double mean_loss = epoch_obs ? epoch_loss / static_cast<double>(epoch_obs) : 0.0;
        if (!std::isfinite(mean_loss)) {
            model.params() = snapshot;
            result.diverged = true;
            result.warnings.push_back("non-finite training loss in epoch " +
                                      std::to_string(epoch) + "; restored last good parameters");
            break;
        }
        result.traces.push_back({epoch, "train", mean_loss});
        snapshot = model.params();
        result.completed_epochs = epoch;
        if (cfg.eval_every > 0 && !valid_data.observations.empty() &&
            (epoch % cfg.eval_every == 0 || epoch == total_epochs)) {
            LossConfig eval_cfg = loss_cfg;
            result.traces.push_back({epoch, "valid", eval_loss(model, valid_data, eval_cfg, epoch)});
        }
    }

    if (!valid_data.observations.empty()) {
        result.final_eval = evaluate(model, valid_data, cfg);
    }
    return result;
}

size_t GridSpec::n_cells() const {
    auto dim = [](size_t n) { return n ? n : 1; };
    return dim(depths.size()) * dim(mixings.size()) * dim(dropouts.size()) *
           dim(label_fractions.size()) * dim(schemes.size()) * dim(seeds.size());
}

GridOutcome run_experiment_grid(const Dataset& ds, const GridSpec& grid,
                                const std::function<void(const std::string&)>& log) {
    GridOutcome outcome;

    auto depths = grid.depths.empty() ? std::vector<int>{grid.base.depth} : grid.depths;
    auto mixings = grid.mixings.empty() ? std::vector<MixingKind>{grid.base.mixing} : grid.mixings;
    auto dropouts = grid.dropouts.empty() ? std::vector<double>{grid.base.dropout} : grid.dropouts;
    auto fractions = grid.label_fractions.empty() ? std::vector<double>{grid.base.label_fraction}
                                                  : grid.label_fractions;
    auto schemes = grid.schemes.empty() ? std::vector<Scheme>{grid.base.scheme} : grid.schemes;
    auto seeds = grid.seeds.empty() ? std::vector<uint64_t>{grid.base.seed} : grid.seeds;

    // folds are fixed by fold_seed alone, identical across every cell
    std::vector<std::pair<Dataset, Dataset>> folds;
    if (grid.base.split == "kfold") {
        auto partitions = split_kfold(ds.size(), grid.base.folds, grid.base.fold_seed);
        for (const auto& valid_idx : partitions) {
            std::set<size_t> in_valid(valid_idx.begin(), valid_idx.end());
            std::vector<size_t> train_idx;
            for (size_t i = 0; i < ds.size(); ++i) {
                if (!in_valid.count(i)) train_idx.push_back(i);
            }
            folds.emplace_back(subset(ds, train_idx), subset(ds, valid_idx));
        }
    } else {
        folds.push_back(split_timeseries(ds, grid.base.train_frac));
    }

    for (Scheme scheme : schemes) {
        for (int depth : depths) {
            for (MixingKind mixing : mixings) {
                for (double dropout : dropouts) {
                    for (double p_l : fractions) {
                        for (uint64_t seed : seeds) {
                            for (size_t fold = 0; fold < folds.size(); ++fold) {
                                TrainConfig cfg = grid.base;
                                cfg.scheme = scheme;
                                cfg.depth = depth;
                                cfg.mixing = mixing;
                                cfg.dropout = dropout;
                                cfg.label_fraction = p_l;
                                cfg.seed = seed;
                                std::string cell = std::string(scheme_name(scheme)) + " depth=" +
                                                   std::to_string(depth) + " mix=" +
                                                   mixing_name(mixing) + " dropout=" +
                                                   format_double(dropout) + " p_l=" +
                                                   format_double(p_l) + " seed=" +
                                                   std::to_string(seed) + " fold=" +
                                                   std::to_string(fold);
                                if (log) log("cell " + cell);
                                try {
                                    TrainResult r =
                                        train(folds[fold].first, folds[fold].second, cfg);
                                    for (const auto& m : r.final_eval.metrics) {
                                        outcome.rows.push_back({static_cast<int>(fold), scheme,
                                                                depth, mixing, dropout, p_l, seed,
                                                                m.metric, m.klass, m.value});
                                    }
                                    if (r.diverged) {
                                        outcome.failures.push_back(cell + ": diverged");
                                    }
                                } catch (const std::exception& e) {
                                    outcome.failures.push_back(cell + ": " + e.what());
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    return outcome;
}

}  // namespace itgpt
