#include "itgpt/itgpt.hpp"

#include <cmath>
#include <stdexcept>

#include "itgpt/util.hpp"

namespace itgpt {

void ModelConfig::validate() const {
    if (d_k <= 0 || d_k % 2 != 0) throw std::invalid_argument("d_k must be even and positive");
    if (d_o <= 0 || d_o % 2 != 0) throw std::invalid_argument("d_o must be even and positive");
    if (d_a <= 0) throw std::invalid_argument("d_a must be positive");
    if (depth < 1) throw std::invalid_argument("chain depth must be >= 1");
    if (anchor_len < 1) throw std::invalid_argument("anchor length must be >= 1");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("dropout must be in [0,1)");
    if (!(lambda > 0.0)) throw std::invalid_argument("PE lambda must be resolved and positive");
}

AnchorSpec AnchorSpec::uniform(double t_min, double t_max, int len) {
    if (len < 1) throw std::invalid_argument("anchor length must be >= 1");
    if (!(t_min <= t_max)) throw std::invalid_argument("anchor span is empty");
    AnchorSpec spec;
    spec.times.resize(static_cast<size_t>(len));
    if (len == 1) {
        spec.times[0] = t_min;
    } else {
        double step = (t_max - t_min) / (len - 1);
        for (int i = 0; i < len; ++i) spec.times[static_cast<size_t>(i)] = t_min + step * i;
        spec.times.back() = t_max;  // the incremental form can round just below t_max
    }
    return spec;
}

AnchorSpec AnchorSpec::for_observation(const Observation& obs, int len) {
    auto [lo, hi] = obs.span();
    return uniform(lo, hi, len);
}

ItgptModel::ItgptModel(ModelConfig cfg, DatasetSchema schema)
    : cfg_(cfg), schema_(std::move(schema)) {
    cfg_.validate();
    schema_.validate();
    build_param_shapes();
}

namespace {

std::string layer_prefix(int l) { return "layers." + std::to_string(l) + "."; }

}  // namespace

void ItgptModel::build_param_shapes() {
    auto mat = [&](const std::string& path, int rows, int cols) {
        params_[path] = Tensor({rows, cols});
    };
    auto vec = [&](const std::string& path, int n) { params_[path] = Tensor({n}); };
    auto attention = [&](const std::string& prefix, int d_in) {
        mat(prefix + "w_key", d_in, cfg_.d_k);
        mat(prefix + "w_value", d_in, cfg_.d_o);
        if (cfg_.linear_query_map) mat(prefix + "w_query", cfg_.d_k, cfg_.d_k);
    };
    auto mixing = [&](const std::string& prefix, int in, int out) {
        switch (cfg_.mixing) {
            case MixingKind::Linear:
                mat(prefix + "w0", in, out);
                vec(prefix + "b0", out);
                break;
            case MixingKind::Mlp1:
                mat(prefix + "w0", in, cfg_.d_a);
                vec(prefix + "b0", cfg_.d_a);
                mat(prefix + "w1", cfg_.d_a, out);
                vec(prefix + "b1", out);
                break;
            case MixingKind::Mlp2:
                mat(prefix + "w0", in, cfg_.d_a);
                vec(prefix + "b0", cfg_.d_a);
                mat(prefix + "w1", cfg_.d_a, cfg_.d_a);
                vec(prefix + "b1", cfg_.d_a);
                mat(prefix + "w2", cfg_.d_a, out);
                vec(prefix + "b2", out);
                break;
        }
    };

    int m_count = schema_.n_modalities();
    for (int l = 0; l < cfg_.depth; ++l) {
        std::string lp = layer_prefix(l);
        for (int m = 0; m < m_count; ++m) {
            attention(lp + "encoder.attn." + std::to_string(m) + ".",
                      schema_.modality_dims[static_cast<size_t>(m)]);
        }
        mixing(lp + "encoder.mix.", m_count * cfg_.d_o, cfg_.d_a);
        for (int m = 0; m < m_count; ++m) {
            std::string dp = lp + "decoder." + std::to_string(m) + ".";
            attention(dp + "attn.", cfg_.d_a);
            mat(dp + "out.w", cfg_.d_o, schema_.modality_dims[static_cast<size_t>(m)]);
            vec(dp + "out.b", schema_.modality_dims[static_cast<size_t>(m)]);
        }
    }
    if (schema_.n_classes > 0) {
        attention("label_head.attn.", cfg_.d_a);
        mat("label_head.out.w", cfg_.d_o, schema_.n_classes);
        vec("label_head.out.b", schema_.n_classes);
    }
    for (int m = 0; m < m_count; ++m) {
        int d_m = schema_.modality_dims[static_cast<size_t>(m)];
        mat("ssl_head." + std::to_string(m) + ".w", d_m, d_m);
        vec("ssl_head." + std::to_string(m) + ".b", d_m);
    }
}

void ItgptModel::init_params(uint64_t seed) {
    Rng rng(Rng::derive(seed, 0x1417));
    for (auto& [path, tensor] : params_) {
        if (tensor.rank() == 2) {
            double bound = 1.0 / std::sqrt(static_cast<double>(tensor.extent(0)));
            for (size_t i = 0; i < tensor.numel(); ++i) {
                tensor.data()[i] = rng.uniform(-bound, bound);
            }
        } else {
            tensor.fill(0.0);  // biases
        }
    }
}

size_t ItgptModel::param_count() const {
    size_t n = 0;
    for (const auto& [path, tensor] : params_) n += tensor.numel();
    return n;
}

Var ItgptModel::Bound::at(const std::string& path) const {
    auto it = by_path.find(path);
    if (it == by_path.end()) throw std::logic_error("unbound parameter path: " + path);
    return it->second;
}

ItgptModel::Bound ItgptModel::bind(Tape& tape) const {
    Bound bound;
    for (const auto& [path, tensor] : params_) {
        bound.by_path.emplace(path, tape.input(tensor));
    }
    return bound;
}

AttentionVars ItgptModel::bind_attention(const Bound& bound, const std::string& prefix) const {
    AttentionVars vars;
    vars.w_key = bound.at(prefix + "w_key");
    vars.w_value = bound.at(prefix + "w_value");
    if (cfg_.linear_query_map) vars.w_query = bound.at(prefix + "w_query");
    return vars;
}

MixingVars ItgptModel::bind_mixing(const Bound& bound, const std::string& prefix) const {
    MixingVars vars;
    vars.kind = cfg_.mixing;
    vars.dropout_p = cfg_.dropout;
    size_t n_affines = cfg_.mixing == MixingKind::Linear ? 1 : cfg_.mixing == MixingKind::Mlp1 ? 2 : 3;
    for (size_t i = 0; i < n_affines; ++i) {
        vars.weights.push_back(bound.at(prefix + "w" + std::to_string(i)));
        vars.biases.push_back(bound.at(prefix + "b" + std::to_string(i)));
    }
    return vars;
}

ItgptOutput ItgptModel::forward(Tape& tape, const Bound& bound, const Observation& obs,
                                const AnchorSpec& anchor, bool training, Rng* rng) const {
    if (static_cast<int>(obs.modalities.size()) != schema_.n_modalities()) {
        throw data_error("observation " + obs.id + " has " + std::to_string(obs.modalities.size()) +
                         " modalities, schema wants " + std::to_string(schema_.n_modalities()));
    }
    require_sorted(anchor.times, "anchor times");
    if (!obs.empty()) {
        auto [lo, hi] = obs.span();
        if (anchor.times.empty() || anchor.times.front() > lo || anchor.times.back() < hi) {
            throw data_error("anchor timeline does not span observation " + obs.id);
        }
    }

    PeConfig pe_k = cfg_.pe_key();
    PeConfig pe_v = cfg_.pe_value();

    // E^(0)_m = X_m
    std::vector<Var> embeddings;
    embeddings.reserve(obs.modalities.size());
    for (const auto& m : obs.modalities) {
        require_sorted(m.times, m.name.c_str());
        embeddings.push_back(tape.input(m.values));
    }

    Var z;  // Z^(0) = 0, represented by omitting the first residual add
    std::vector<std::vector<uint8_t>> coverage(obs.modalities.size());
    for (int l = 0; l < cfg_.depth; ++l) {
        std::string lp = layer_prefix(l);
        ItnetVars encoder;
        for (size_t m = 0; m < obs.modalities.size(); ++m) {
            encoder.per_modality.push_back(
                bind_attention(bound, lp + "encoder.attn." + std::to_string(m) + "."));
        }
        encoder.mixing = bind_mixing(bound, lp + "encoder.mix.");

        std::vector<ModalityInput> inputs;
        for (size_t m = 0; m < obs.modalities.size(); ++m) {
            inputs.push_back(ModalityInput{obs.modalities[m].times, embeddings[m]});
        }
        Var a = itnet_forward(tape, inputs, anchor.times, encoder, pe_k, pe_v, training, rng);
        Var update = dropout(relu(a), cfg_.dropout, training, rng);
        z = l == 0 ? update : z + update;

        for (size_t m = 0; m < obs.modalities.size(); ++m) {
            std::string dp = lp + "decoder." + std::to_string(m) + ".";
            AttentionOutput att = causal_cross_attention(tape, obs.modalities[m].times,
                                                         anchor.times, z,
                                                         bind_attention(bound, dp + "attn."),
                                                         pe_k, pe_v);
            embeddings[m] = affine(att.values, bound.at(dp + "out.w"), bound.at(dp + "out.b"));
            if (l == cfg_.depth - 1) coverage[m] = std::move(att.coverage);
        }
    }
    return ItgptOutput{z, std::move(embeddings), std::move(coverage)};
}

LabelPrediction ItgptModel::predict_labels(Tape& tape, const Bound& bound, const ItgptOutput& out,
                                           const AnchorSpec& anchor,
                                           std::span<const double> target_times) const {
    if (schema_.n_classes <= 0) throw std::logic_error("schema has no target classes");
    require_sorted(target_times, "target times");
    AttentionOutput att = causal_cross_attention(tape, target_times, anchor.times, out.anchor,
                                                 bind_attention(bound, "label_head.attn."),
                                                 cfg_.pe_key(), cfg_.pe_value());
    Var logits = affine(att.values, bound.at("label_head.out.w"), bound.at("label_head.out.b"));

    bool all_covered = true;
    for (uint8_t c : att.coverage) all_covered = all_covered && c;
    if (!all_covered) {
        // zero out uncovered rows; the bias would otherwise leak into them
        Tensor row_mask({static_cast<int>(target_times.size()), schema_.n_classes});
        for (size_t q = 0; q < att.coverage.size(); ++q) {
            for (int c = 0; c < schema_.n_classes; ++c) {
                row_mask.at(static_cast<int>(q), c) = att.coverage[q] ? 1.0 : 0.0;
            }
        }
        logits = mul(logits, tape.input(std::move(row_mask)));
    }
    return LabelPrediction{logits, std::move(att.coverage)};
}

std::vector<Var> ItgptModel::predict_next_inputs(Tape& tape, const Bound& bound,
                                                 const ItgptOutput& out) const {
    (void)tape;
    std::vector<Var> preds;
    preds.reserve(out.embeddings.size());
    for (size_t m = 0; m < out.embeddings.size(); ++m) {
        std::string hp = "ssl_head." + std::to_string(m) + ".";
        preds.push_back(affine(out.embeddings[m], bound.at(hp + "w"), bound.at(hp + "b")));
    }
    return preds;
}

}  // namespace itgpt
