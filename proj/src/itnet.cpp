#include "itgpt/itnet.hpp"

#include <stdexcept>

#include "itgpt/util.hpp"

namespace itgpt {

const char* mixing_name(MixingKind k) {
    switch (k) {
        case MixingKind::Linear: return "linear";
        case MixingKind::Mlp1: return "mlp1";
        case MixingKind::Mlp2: return "mlp2";
    }
    return "?";
}

MixingKind parse_mixing(const std::string& name) {
    if (name == "linear") return MixingKind::Linear;
    if (name == "mlp1") return MixingKind::Mlp1;
    if (name == "mlp2") return MixingKind::Mlp2;
    throw usage_error("unknown mixing layer '" + name + "' (choose linear, mlp1, mlp2)");
}

Var dropout(Var x, double p, bool training, Rng* rng) {
    if (!training || p <= 0.0) return x;
    if (p >= 1.0) throw std::invalid_argument("dropout probability must be < 1");
    if (!rng) throw std::invalid_argument("training-mode dropout needs an rng");
    Tape& tape = *x.tape;
    const Tensor& v = tape.value(x);
    Tensor mask(v.shape());
    double keep = 1.0 / (1.0 - p);
    for (size_t i = 0; i < mask.numel(); ++i) {
        mask.data()[i] = rng->uniform01() >= p ? keep : 0.0;
    }
    return mul(x, tape.input(std::move(mask)));
}

Var mixing_apply(Var concat, const MixingVars& layer, bool training, Rng* rng) {
    size_t n_affines = layer.kind == MixingKind::Linear ? 1
                       : layer.kind == MixingKind::Mlp1 ? 2
                                                        : 3;
    if (layer.weights.size() != n_affines || layer.biases.size() != n_affines) {
        throw std::invalid_argument("mixing layer has wrong number of affine maps");
    }
    Tape& tape = *concat.tape;
    const Tensor& in = tape.value(concat);
    if (in.rank() != 2 || in.extent(1) != tape.value(layer.weights[0]).extent(0)) {
        throw std::invalid_argument("mixing width mismatch: input " + in.shape_str() +
                                    " vs weight " + tape.value(layer.weights[0]).shape_str());
    }
    Var h = concat;
    for (size_t i = 0; i < n_affines; ++i) {
        h = affine(h, layer.weights[i], layer.biases[i]);
        if (i + 1 < n_affines) {
            h = dropout(relu(h), layer.dropout_p, training, rng);
        }
    }
    return h;
}

Var itnet_forward(Tape& tape, std::span<const ModalityInput> modalities,
                  std::span<const double> out_times, const ItnetVars& params,
                  const PeConfig& pe_key, const PeConfig& pe_value, bool training, Rng* rng) {
    if (modalities.size() != params.per_modality.size()) {
        throw std::invalid_argument("itnet_forward: " + std::to_string(modalities.size()) +
                                    " modalities but params for " +
                                    std::to_string(params.per_modality.size()));
    }
    require_sorted(out_times, "out_times");
    std::vector<Var> blocks;
    blocks.reserve(modalities.size());
    for (size_t m = 0; m < modalities.size(); ++m) {
        AttentionOutput att = causal_cross_attention(tape, out_times, modalities[m].times,
                                                     modalities[m].data, params.per_modality[m],
                                                     pe_key, pe_value);
        blocks.push_back(att.values);
    }
    Var cat = blocks.size() == 1 ? blocks[0] : concat_cols(blocks);
    return mixing_apply(cat, params.mixing, training, rng);
}

}  // namespace itgpt
