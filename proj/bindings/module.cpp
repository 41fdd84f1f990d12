#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>

#include "itgpt/checkpoint.hpp"
#include "itgpt/checks.hpp"
#include "itgpt/config.hpp"
#include "itgpt/metrics.hpp"
#include "itgpt/synth.hpp"
#include "itgpt/trainer.hpp"

namespace py = pybind11;
using namespace itgpt;

namespace {

Tensor tensor_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    std::vector<int> shape;
    for (py::ssize_t d = 0; d < a.ndim(); ++d) {
        shape.push_back(static_cast<int>(a.shape(d)));
    }
    std::vector<double> data(a.data(), a.data() + a.size());
    return Tensor(shape, std::move(data));
}

py::array_t<double> array_from_tensor(const Tensor& t) {
    std::vector<py::ssize_t> shape;
    for (int e : t.shape()) shape.push_back(e);
    py::array_t<double> out(shape);
    std::copy(t.data(), t.data() + t.numel(), out.mutable_data());
    return out;
}

ScoredPredictions preds_from_py(const py::array_t<double>& scores, const std::vector<int>& truths,
                                const std::optional<std::vector<bool>>& included) {
    ScoredPredictions p;
    p.scores = tensor_from_array(scores);
    p.truths = truths;
    if (included) {
        p.included.assign(included->begin(), included->end());
    }
    return p;
}

py::dict metrics_to_dict(const EvalResult& result) {
    py::dict out;
    for (const auto& m : result.metrics) {
        std::string key = m.metric + (m.klass.empty() ? "" : "_" + m.klass);
        if (m.value) {
            out[py::str(key)] = *m.value;
        } else {
            out[py::str(key)] = py::none();
        }
    }
    return out;
}

py::dict train_on_dir(const std::string& data_dir, const py::dict& overrides,
                      const std::string& checkpoint_out) {
    KvMap kv;
    for (const auto& item : overrides) {
        kv[py::str(item.first).cast<std::string>()] = py::str(item.second).cast<std::string>();
    }
    TrainConfig cfg = TrainConfig::from_kv(kv, "config dict");
    Dataset ds = load_dataset(data_dir);
    std::pair<Dataset, Dataset> views;
    if (cfg.split == "timeseries") {
        views = split_timeseries(ds, cfg.train_frac);
    } else {
        auto partitions = split_kfold(ds.size(), cfg.folds, cfg.fold_seed);
        std::set<size_t> valid_set(partitions[0].begin(), partitions[0].end());
        std::vector<size_t> train_idx;
        for (size_t i = 0; i < ds.size(); ++i) {
            if (!valid_set.count(i)) train_idx.push_back(i);
        }
        views = {subset(ds, train_idx), subset(ds, partitions[0])};
    }
    TrainResult r = train(views.first, views.second, cfg);
    if (!checkpoint_out.empty()) {
        TrainConfig resolved = cfg;
        resolved.lambda = r.resolved_lambda;
        save_checkpoint({resolved, ds.schema, r.model.params(), ""}, checkpoint_out);
    }
    py::dict out = metrics_to_dict(r.final_eval);
    out["completed_epochs"] = r.completed_epochs;
    out["diverged"] = r.diverged;
    out["n_labeled"] = r.labeled.size();
    out["lambda"] = r.resolved_lambda;
    py::list traces;
    for (const auto& t : r.traces) {
        traces.append(py::make_tuple(t.epoch, t.split, t.loss));
    }
    out["traces"] = traces;
    return out;
}

py::dict evaluate_checkpoint(const std::string& checkpoint_path, const std::string& data_dir) {
    Checkpoint ckpt = load_checkpoint(checkpoint_path);
    Dataset ds = load_dataset(data_dir);
    if (ckpt.config.log_normalize) log_normalize_dataset(ds);
    ItgptModel model(ckpt.config.model_config(), ckpt.schema);
    model.params() = ckpt.params;
    return metrics_to_dict(evaluate(model, ds, ckpt.config));
}

}  // namespace

PYBIND11_MODULE(itgpt_core, m) {
    m.doc() = "Causal cross-attention over irregularly sampled multimodal timeseries";
    m.attr("__version__") = "0.1.0";

    m.def(
        "encode_time",
        [](double t, int dim, double lam) {
            return array_from_tensor(encode_time(t, {dim, lam}));
        },
        py::arg("t"), py::arg("dim"), py::arg("lam"),
        "Sinusoidal continuous-time position encoding p(t)");

    m.def(
        "encode_timeline",
        [](const std::vector<double>& times, int dim, double lam) {
            return array_from_tensor(encode_timeline(times, {dim, lam}));
        },
        py::arg("times"), py::arg("dim"), py::arg("lam"));

    m.def(
        "causal_cross_attention",
        [](const std::vector<double>& query_times, const std::vector<double>& key_times,
           const py::array_t<double>& key_data, const py::array_t<double>& w_key,
           const py::array_t<double>& w_value, double lam) {
            Tape tape;
            AttentionVars vars{tape.input(tensor_from_array(w_key)),
                               tape.input(tensor_from_array(w_value)), std::nullopt};
            Tensor kd = tensor_from_array(key_data);
            PeConfig pe_k{static_cast<int>(w_key.shape(1)), lam};
            PeConfig pe_v{static_cast<int>(w_value.shape(1)), lam};
            AttentionOutput out = causal_cross_attention(tape, query_times, key_times,
                                                         tape.input(kd), vars, pe_k, pe_v);
            py::dict d;
            d["values"] = array_from_tensor(tape.value(out.values));
            d["weights"] = array_from_tensor(tape.value(out.weights));
            std::vector<bool> coverage(out.coverage.begin(), out.coverage.end());
            d["coverage"] = coverage;
            return d;
        },
        py::arg("query_times"), py::arg("key_times"), py::arg("key_data"), py::arg("w_key"),
        py::arg("w_value"), py::arg("lam"),
        "Strictly-causal cross-attention; keys at times >= the query time get weight 0");

    m.def(
        "log_normalize",
        [](const py::array_t<double>& values) {
            return array_from_tensor(log_normalize(tensor_from_array(values)));
        },
        py::arg("values"), "x -> ln(1+x), rejects negative input");

    m.def(
        "synth_dataset",
        [](const py::dict& spec_dict, const std::string& out_dir, uint64_t seed) {
            KvMap kv;
            for (const auto& item : spec_dict) {
                kv[py::str(item.first).cast<std::string>()] =
                    py::str(item.second).cast<std::string>();
            }
            SynthSpec spec = SynthSpec::from_kv(kv, "spec dict");
            Dataset ds = synth_generate(spec, seed);
            save_dataset(ds, out_dir);
            return ds.size();
        },
        py::arg("spec"), py::arg("out_dir"), py::arg("seed") = 1,
        "Generate a synthetic dataset directory; returns the observation count");

    m.def(
        "dataset_summary",
        [](const std::string& dir) {
            ParseReport report;
            Dataset ds = load_dataset(dir, &report);
            py::dict out;
            out["observations"] = report.n_observations;
            out["samples"] = report.n_samples;
            out["target_rows"] = report.n_target_rows;
            out["modalities"] = ds.schema.modality_names;
            out["classes"] = ds.schema.n_classes;
            return out;
        },
        py::arg("dir"));

    m.def("train", &train_on_dir, py::arg("data_dir"), py::arg("config") = py::dict(),
          py::arg("checkpoint_out") = std::string(),
          "Train on a dataset directory (fold 0 of a k-fold split, or a timeseries split); "
          "returns final validation metrics and loss traces");

    m.def("evaluate", &evaluate_checkpoint, py::arg("checkpoint"), py::arg("data_dir"),
          "Evaluate a saved checkpoint over a dataset directory");

    m.def(
        "auroc",
        [](const py::array_t<double>& scores, const std::vector<int>& truths, int positive_class,
           const std::optional<std::vector<bool>>& included) {
            return auroc(preds_from_py(scores, truths, included), positive_class);
        },
        py::arg("scores"), py::arg("truths"), py::arg("positive_class") = 1,
        py::arg("included") = py::none());

    m.def(
        "auprc_macro_ovr",
        [](const py::array_t<double>& scores, const std::vector<int>& truths,
           const std::optional<std::vector<bool>>& included) {
            PerClassResult r = auprc_macro_ovr(preds_from_py(scores, truths, included));
            py::dict d;
            d["macro"] = r.macro ? py::cast(*r.macro) : py::none();
            py::list per_class;
            for (const auto& v : r.per_class) per_class.append(v ? py::cast(*v) : py::none());
            d["per_class"] = per_class;
            d["skipped_classes"] = r.skipped_classes;
            return d;
        },
        py::arg("scores"), py::arg("truths"), py::arg("included") = py::none());

    m.def(
        "threshold_metrics",
        [](const py::array_t<double>& scores, const std::vector<int>& truths, int positive_class,
           double threshold) {
            ThresholdMetrics t =
                threshold_metrics(preds_from_py(scores, truths, std::nullopt), positive_class,
                                  threshold);
            py::dict d;
            d["tp"] = t.tp;
            d["fp"] = t.fp;
            d["fn"] = t.fn;
            d["tn"] = t.tn;
            d["recall"] = t.recall ? py::cast(*t.recall) : py::none();
            d["specificity"] = t.specificity ? py::cast(*t.specificity) : py::none();
            d["precision"] = t.precision ? py::cast(*t.precision) : py::none();
            d["f1"] = t.f1 ? py::cast(*t.f1) : py::none();
            return d;
        },
        py::arg("scores"), py::arg("truths"), py::arg("positive_class") = 1,
        py::arg("threshold") = 0.5);

    m.def(
        "confusion_matrix",
        [](const py::array_t<double>& scores, const std::vector<int>& truths) {
            return array_from_tensor(confusion_matrix(preds_from_py(scores, truths, std::nullopt)));
        },
        py::arg("scores"), py::arg("truths"));

    m.def(
        "run_check",
        [](const std::string& kind, uint64_t seed) {
            checks::CheckResult r;
            if (kind == "pe") r = checks::check_pe_translation(2000, {8, 32, 64}, seed);
            else if (kind == "grad") r = checks::check_grad_model(2, 100, seed);
            else if (kind == "oracle") r = checks::check_oracle_equivalence(200, seed);
            else if (kind == "causality") r = checks::check_causality(20, 10, seed);
            else throw usage_error("unknown check kind '" + kind + "'");
            py::dict d;
            d["name"] = r.name;
            d["max_err"] = r.max_err;
            d["threshold"] = r.threshold;
            d["pass"] = r.pass;
            return d;
        },
        py::arg("kind"), py::arg("seed") = 1,
        "Run a verification suite (pe, grad, oracle, causality) at smoke scale");
}
