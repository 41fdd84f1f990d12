#include "itgpt/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "itgpt/rng.hpp"
#include "itgpt/util.hpp"

namespace itgpt {

const char* scheme_name(Scheme s) {
    switch (s) {
        case Scheme::CE: return "CE";
        case Scheme::CE_SSL: return "CE+SSL";
        case Scheme::GPT_then_CE: return "GPT->CE";
    }
    return "?";
}

Scheme parse_scheme(const std::string& name) {
    if (name == "CE" || name == "ce") return Scheme::CE;
    if (name == "CE+SSL" || name == "ce+ssl" || name == "CE_SSL") return Scheme::CE_SSL;
    if (name == "GPT->CE" || name == "gpt->ce" || name == "GPT_then_CE") return Scheme::GPT_then_CE;
    throw usage_error("unknown training scheme '" + name +
                      "' (valid spellings: CE, CE+SSL, GPT->CE)");
}

CeLoss ce_loss(Tape& tape, const Tensor& true_onehot, Var probs,
               std::optional<int> censored_class, std::span<const uint8_t> coverage) {
    const Tensor& p = tape.value(probs);
    if (p.rank() != 2 || !p.same_shape(true_onehot)) {
        throw std::invalid_argument("ce_loss: probs " + p.shape_str() + " vs labels " +
                                    true_onehot.shape_str());
    }
    int rows = p.extent(0), classes = p.extent(1);
    if (!coverage.empty() && static_cast<int>(coverage.size()) != rows) {
        throw std::invalid_argument("ce_loss: coverage length does not match rows");
    }

    Tensor include({rows, classes});
    long included = 0;
    for (int r = 0; r < rows; ++r) {
        bool covered = coverage.empty() || coverage[static_cast<size_t>(r)];
        int label = -1;
        for (int c = 0; c < classes; ++c) {
            if (true_onehot.at(r, c) == 1.0) label = c;
        }
        bool censored = censored_class && label == *censored_class;
        if (!covered || censored) continue;
        double row_sum = 0;
        for (int c = 0; c < classes; ++c) row_sum += p.at(r, c);
        if (std::abs(row_sum - 1.0) > 1e-6) {
            throw std::invalid_argument("ce_loss: probability row " + std::to_string(r) +
                                        " sums to " + format_double(row_sum));
        }
        for (int c = 0; c < classes; ++c) include.at(r, c) = 1.0;
        ++included;
    }
    if (included == 0) {
        return CeLoss{tape.input(Tensor::scalar(0.0)), 0};
    }
    Var picked = mul(tape.input(std::move(include)), mul(tape.input(true_onehot), log_clamped(probs)));
    Var loss = scale(sum_all(picked), -1.0 / static_cast<double>(included));
    return CeLoss{loss, included};
}

SslLoss ssl_mse_loss(Tape& tape, const Observation& obs, std::span<const Var> predictions,
                     const std::vector<std::vector<uint8_t>>& coverage) {
    if (predictions.size() != obs.modalities.size()) {
        throw std::invalid_argument("ssl_mse_loss: prediction count does not match modalities");
    }
    Var total = tape.input(Tensor::scalar(0.0));
    long included = 0;
    for (size_t m = 0; m < obs.modalities.size(); ++m) {
        const ModalitySeries& series = obs.modalities[m];
        const Tensor& pred = tape.value(predictions[m]);
        if (!pred.same_shape(series.values)) {
            throw std::invalid_argument("ssl_mse_loss: prediction shape " + pred.shape_str() +
                                        " vs data " + series.values.shape_str() + " for modality " +
                                        series.name);
        }
        int rows = series.values.extent(0);
        if (rows == 0) continue;
        int cols = series.values.extent(1);
        const auto& cov = coverage.at(m);
        Tensor mask({rows, cols});
        long rows_in = 0;
        for (int r = 1; r < rows; ++r) {  // one-step-ahead targets start at the second sample
            bool covered = cov.empty() || cov[static_cast<size_t>(r)];
            if (!covered) continue;
            for (int c = 0; c < cols; ++c) mask.at(r, c) = 1.0;
            ++rows_in;
        }
        if (rows_in == 0) continue;
        included += rows_in;
        Var diff = sub(predictions[m], tape.input(series.values));
        Var masked = mul(tape.input(std::move(mask)), mul(diff, diff));
        total = total + scale(sum_all(masked), 1.0 / static_cast<double>(rows));
    }
    return SslLoss{total, included};
}

Var combined_loss(size_t obs_index, const LossConfig& cfg, std::optional<Var> ce, Var ssl) {
    if (cfg.scheme != Scheme::CE_SSL) {
        throw std::logic_error("combined_loss is only defined for the CE+SSL scheme");
    }
    if (cfg.labeled.count(obs_index)) {
        if (!ce) throw std::logic_error("labeled observation needs a CE term");
        return add(ssl, *ce);
    }
    return ssl;
}

PhaseUse schedule_select(int epoch, size_t obs_index, const LossConfig& cfg) {
    if (cfg.scheme != Scheme::GPT_then_CE) {
        throw std::logic_error("schedule_select is only defined for the GPT->CE scheme");
    }
    if (epoch < 1 || epoch > cfg.pretrain_epochs + cfg.finetune_epochs) {
        throw std::invalid_argument("epoch " + std::to_string(epoch) + " outside the " +
                                    std::to_string(cfg.pretrain_epochs + cfg.finetune_epochs) +
                                    "-epoch GPT->CE budget");
    }
    if (epoch <= cfg.pretrain_epochs) return PhaseUse::UseMse;
    if (cfg.labeled.count(obs_index)) return PhaseUse::UseCe;
    return PhaseUse::Skip;
}

std::vector<size_t> subsample_labels(const Dataset& ds, std::span<const size_t> indices,
                                     double fraction, uint64_t seed) {
    if (!(fraction > 0.0 && fraction <= 1.0)) {
        throw std::invalid_argument("label fraction must be in (0, 1]");
    }
    size_t n = indices.size();
    auto total = static_cast<size_t>(std::llround(fraction * static_cast<double>(n)));
    if (total == 0) {
        throw data_error("label fraction " + format_double(fraction) + " of " + std::to_string(n) +
                         " observations selects no labels; increase the fraction or the dataset");
    }

    // stratum = most frequent class of the observation (ties toward lower id);
    // observations without targets cannot contribute labels
    std::map<int, std::vector<size_t>> strata;
    for (size_t idx : indices) {
        const Observation& obs = ds.observations.at(idx);
        if (!obs.target || obs.target->labels.empty()) continue;
        std::map<int, int> counts;
        for (int label : obs.target->labels) counts[label]++;
        int best = -1, best_count = -1;
        for (const auto& [label, count] : counts) {
            if (count > best_count) {
                best = label;
                best_count = count;
            }
        }
        strata[best].push_back(idx);
    }
    size_t labeled_available = 0;
    for (const auto& [c, members] : strata) labeled_available += members.size();
    if (labeled_available == 0) {
        throw data_error("no observation carries labels; cannot subsample");
    }
    total = std::min(total, labeled_available);

    // largest-remainder allocation over strata
    std::map<int, size_t> quota;
    std::vector<std::pair<double, int>> remainders;
    size_t assigned = 0;
    for (const auto& [c, members] : strata) {
        double exact = static_cast<double>(total) * members.size() / labeled_available;
        size_t q = static_cast<size_t>(exact);
        quota[c] = q;
        assigned += q;
        remainders.push_back({exact - static_cast<double>(q), c});
    }
    std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (size_t i = 0; assigned < total; ++i) {
        int c = remainders[i % remainders.size()].second;
        if (quota[c] < strata[c].size()) {
            quota[c]++;
            assigned++;
        }
    }

    std::vector<size_t> picked;
    Rng rng(Rng::derive(seed, 0x1abe1));
    for (auto& [c, members] : strata) {
        rng.shuffle(members);
        for (size_t i = 0; i < quota[c]; ++i) picked.push_back(members[i]);
    }
    std::sort(picked.begin(), picked.end());
    return picked;
}

}  // namespace itgpt
