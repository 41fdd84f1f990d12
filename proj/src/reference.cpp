#include "itgpt/reference.hpp"

#include <cmath>
#include <stdexcept>

namespace itgpt::reference {

namespace {

// Eq. (8) evaluated directly, independent of encode_time.
std::vector<double> pe_vector(double t, const PeConfig& cfg) {
    std::vector<double> out(static_cast<size_t>(cfg.dim));
    for (int i = 1; i <= cfg.dim / 2; ++i) {
        double w = std::pow(cfg.lambda, -2.0 * i / cfg.dim);
        out[static_cast<size_t>(2 * (i - 1))] = std::sin(w * t);
        out[static_cast<size_t>(2 * (i - 1) + 1)] = std::cos(w * t);
    }
    return out;
}

std::vector<double> affine_row(const std::vector<double>& x, const Tensor& w, const Tensor& b) {
    std::vector<double> out(static_cast<size_t>(w.extent(1)), 0.0);
    for (int j = 0; j < w.extent(1); ++j) {
        double acc = b.numel() ? b.at(j) : 0.0;
        for (int i = 0; i < w.extent(0); ++i) acc += x[static_cast<size_t>(i)] * w.at(i, j);
        out[static_cast<size_t>(j)] = acc;
    }
    return out;
}

std::vector<double> row_of(const Tensor& m, int r) {
    std::vector<double> out(static_cast<size_t>(m.extent(1)));
    for (int c = 0; c < m.extent(1); ++c) out[static_cast<size_t>(c)] = m.at(r, c);
    return out;
}

}  // namespace

OracleAttention attention_oracle(std::span<const double> query_times,
                                 std::span<const double> key_times, const Tensor& key_data,
                                 const Tensor& w_key, const Tensor& w_value,
                                 const Tensor* w_query, const PeConfig& pe_key,
                                 const PeConfig& pe_value) {
    if (query_times.size() * key_times.size() > 10000) {
        throw std::invalid_argument("attention_oracle: instance exceeds the desk-scale cap");
    }
    size_t lq = query_times.size(), lkv = key_times.size();
    int d_k = pe_key.dim, d_o = pe_value.dim;

    // keys and values per Eq. (9)-(10)
    std::vector<std::vector<double>> keys(lkv), vals(lkv);
    for (size_t k = 0; k < lkv; ++k) {
        std::vector<double> pk = pe_vector(key_times[k], pe_key);
        std::vector<double> pv = pe_vector(key_times[k], pe_value);
        keys[k].assign(static_cast<size_t>(d_k), 0.0);
        vals[k].assign(static_cast<size_t>(d_o), 0.0);
        for (int j = 0; j < d_k; ++j) {
            double acc = pk[static_cast<size_t>(j)];
            for (int i = 0; i < w_key.extent(0); ++i) {
                acc += key_data.at(static_cast<int>(k), i) * w_key.at(i, j);
            }
            keys[k][static_cast<size_t>(j)] = acc;
        }
        for (int j = 0; j < d_o; ++j) {
            double acc = pv[static_cast<size_t>(j)];
            for (int i = 0; i < w_value.extent(0); ++i) {
                acc += key_data.at(static_cast<int>(k), i) * w_value.at(i, j);
            }
            vals[k][static_cast<size_t>(j)] = acc;
        }
    }

    OracleAttention out;
    out.values.assign(lq, std::vector<double>(static_cast<size_t>(d_o), 0.0));
    out.weights.assign(lq, std::vector<double>(lkv, 0.0));
    out.coverage.assign(lq, 0);
    for (size_t q = 0; q < lq; ++q) {
        std::vector<double> query = pe_vector(query_times[q], pe_key);
        if (w_query) {
            std::vector<double> mapped(static_cast<size_t>(d_k), 0.0);
            for (int j = 0; j < d_k; ++j) {
                double acc = 0;
                for (int i = 0; i < d_k; ++i) acc += query[static_cast<size_t>(i)] * w_query->at(i, j);
                mapped[static_cast<size_t>(j)] = acc;
            }
            query = std::move(mapped);
        }
        // Eq. (6)-(7): strictly-past keys, scaled exponential similarity
        double denom = 0;
        for (size_t k = 0; k < lkv; ++k) {
            if (!(key_times[k] < query_times[q])) continue;
            out.coverage[q] = 1;
            double dot = 0;
            for (int j = 0; j < d_k; ++j) dot += query[static_cast<size_t>(j)] * keys[k][static_cast<size_t>(j)];
            double sim = std::exp(dot / std::sqrt(static_cast<double>(d_k)));
            out.weights[q][k] = sim;
            denom += sim;
        }
        if (!out.coverage[q]) continue;
        for (size_t k = 0; k < lkv; ++k) {
            out.weights[q][k] /= denom;
            for (int j = 0; j < d_o; ++j) {
                out.values[q][static_cast<size_t>(j)] += out.weights[q][k] * vals[k][static_cast<size_t>(j)];
            }
        }
    }
    return out;
}

std::vector<std::vector<double>> itnet_oracle(std::span<const OracleModality> modalities,
                                              std::span<const double> out_times,
                                              std::span<const OracleAttentionParams> attn,
                                              const OracleMixing& mixing, const PeConfig& pe_key,
                                              const PeConfig& pe_value) {
    if (modalities.size() != attn.size()) {
        throw std::invalid_argument("itnet_oracle: modality/param count mismatch");
    }
    size_t lq = out_times.size();
    std::vector<std::vector<double>> concat(lq);
    for (size_t m = 0; m < modalities.size(); ++m) {
        OracleAttention att = attention_oracle(out_times, modalities[m].times, modalities[m].values,
                                               attn[m].w_key, attn[m].w_value,
                                               attn[m].w_query ? &*attn[m].w_query : nullptr,
                                               pe_key, pe_value);
        for (size_t q = 0; q < lq; ++q) {
            concat[q].insert(concat[q].end(), att.values[q].begin(), att.values[q].end());
        }
    }
    std::vector<std::vector<double>> out(lq);
    for (size_t q = 0; q < lq; ++q) {
        std::vector<double> h = concat[q];
        for (size_t a = 0; a < mixing.weights.size(); ++a) {
            h = affine_row(h, mixing.weights[a], mixing.biases[a]);
            if (a + 1 < mixing.weights.size()) {
                for (double& v : h) v = v > 0 ? v : 0;
            }
        }
        out[q] = std::move(h);
    }
    return out;
}

OracleItgpt itgpt_oracle(const ItgptModel& model, const Observation& obs,
                         const AnchorSpec& anchor, std::span<const double> target_times) {
    const ModelConfig& cfg = model.config();
    const ParamStore& params = model.params();
    PeConfig pe_k = cfg.pe_key();
    PeConfig pe_v = cfg.pe_value();
    auto param = [&](const std::string& path) -> const Tensor& {
        auto it = params.find(path);
        if (it == params.end()) throw std::logic_error("oracle: missing parameter " + path);
        return it->second;
    };
    auto attn_params = [&](const std::string& prefix) {
        OracleAttentionParams p;
        p.w_key = param(prefix + "w_key");
        p.w_value = param(prefix + "w_value");
        if (cfg.linear_query_map) p.w_query = param(prefix + "w_query");
        return p;
    };

    size_t m_count = obs.modalities.size();
    std::vector<OracleModality> embeddings(m_count);
    for (size_t m = 0; m < m_count; ++m) {
        embeddings[m].times = obs.modalities[m].times;
        embeddings[m].values = obs.modalities[m].values;
    }

    size_t la = anchor.times.size();
    std::vector<std::vector<double>> z(la, std::vector<double>(static_cast<size_t>(cfg.d_a), 0.0));
    OracleItgpt out;
    for (int l = 0; l < cfg.depth; ++l) {
        std::string lp = "layers." + std::to_string(l) + ".";
        std::vector<OracleAttentionParams> enc;
        for (size_t m = 0; m < m_count; ++m) {
            enc.push_back(attn_params(lp + "encoder.attn." + std::to_string(m) + "."));
        }
        OracleMixing mixing;
        mixing.kind = cfg.mixing;
        size_t n_affines = cfg.mixing == MixingKind::Linear ? 1 : cfg.mixing == MixingKind::Mlp1 ? 2 : 3;
        for (size_t a = 0; a < n_affines; ++a) {
            mixing.weights.push_back(param(lp + "encoder.mix.w" + std::to_string(a)));
            mixing.biases.push_back(param(lp + "encoder.mix.b" + std::to_string(a)));
        }
        auto a_out = itnet_oracle(embeddings, anchor.times, enc, mixing, pe_k, pe_v);
        // Eq. (14): residual with ReLU
        for (size_t q = 0; q < la; ++q) {
            for (int d = 0; d < cfg.d_a; ++d) {
                double v = a_out[q][static_cast<size_t>(d)];
                z[q][static_cast<size_t>(d)] += v > 0 ? v : 0;
            }
        }
        Tensor z_mat({static_cast<int>(la), cfg.d_a});
        for (size_t q = 0; q < la; ++q) {
            for (int d = 0; d < cfg.d_a; ++d) z_mat.at(static_cast<int>(q), d) = z[q][static_cast<size_t>(d)];
        }
        // Eq. (15): decode back onto each modality timeline
        for (size_t m = 0; m < m_count; ++m) {
            std::string dp = lp + "decoder." + std::to_string(m) + ".";
            OracleAttentionParams dec = attn_params(dp + "attn.");
            OracleAttention att = attention_oracle(obs.modalities[m].times, anchor.times, z_mat,
                                                   dec.w_key, dec.w_value,
                                                   dec.w_query ? &*dec.w_query : nullptr, pe_k, pe_v);
            const Tensor& w = param(dp + "out.w");
            const Tensor& b = param(dp + "out.b");
            int rows = static_cast<int>(obs.modalities[m].times.size());
            Tensor e({rows, w.extent(1)});
            for (int r = 0; r < rows; ++r) {
                auto mapped = affine_row(att.values[static_cast<size_t>(r)], w, b);
                for (int c = 0; c < w.extent(1); ++c) e.at(r, c) = mapped[static_cast<size_t>(c)];
            }
            embeddings[m].values = std::move(e);
            if (l == cfg.depth - 1) {
                out.embeddings.push_back({});
                auto& em = out.embeddings.back();
                for (int r = 0; r < rows; ++r) em.push_back(row_of(embeddings[m].values, r));
            }
        }
    }
    out.anchor = z;

    Tensor z_mat({static_cast<int>(la), cfg.d_a});
    for (size_t q = 0; q < la; ++q) {
        for (int d = 0; d < cfg.d_a; ++d) z_mat.at(static_cast<int>(q), d) = z[q][static_cast<size_t>(d)];
    }
    if (model.schema().n_classes > 0 && !target_times.empty()) {
        OracleAttentionParams head = attn_params("label_head.attn.");
        OracleAttention att = attention_oracle(target_times, anchor.times, z_mat, head.w_key,
                                               head.w_value, head.w_query ? &*head.w_query : nullptr,
                                               pe_k, pe_v);
        const Tensor& w = param("label_head.out.w");
        const Tensor& b = param("label_head.out.b");
        for (size_t r = 0; r < target_times.size(); ++r) {
            if (!att.coverage[r]) {
                out.logits.push_back(std::vector<double>(static_cast<size_t>(w.extent(1)), 0.0));
            } else {
                out.logits.push_back(affine_row(att.values[r], w, b));
            }
        }
    }
    for (size_t m = 0; m < m_count; ++m) {
        const Tensor& w = param("ssl_head." + std::to_string(m) + ".w");
        const Tensor& b = param("ssl_head." + std::to_string(m) + ".b");
        out.next_inputs.push_back({});
        auto& pm = out.next_inputs.back();
        for (int r = 0; r < embeddings[m].values.extent(0); ++r) {
            pm.push_back(affine_row(row_of(embeddings[m].values, r), w, b));
        }
    }
    return out;
}

}  // namespace itgpt::reference
