#pragma once

#include <span>
#include <string>
#include <vector>

#include "itgpt/attention.hpp"
#include "itgpt/rng.hpp"

namespace itgpt {

enum class MixingKind { Linear, Mlp1, Mlp2 };

const char* mixing_name(MixingKind k);
MixingKind parse_mixing(const std::string& name);

// Mixing layer applied to the concatenated per-modality attention outputs:
// Linear is one affine map, Mlp1/Mlp2 insert 1 or 2 hidden layers of width
// d_a with ReLU and train-time dropout on the hidden activations.
struct MixingVars {
    MixingKind kind = MixingKind::Linear;
    std::vector<Var> weights;  // affines in order, each [in x out]
    std::vector<Var> biases;
    double dropout_p = 0.0;
};

// Inverted-scaling dropout; identity when not training or p == 0.
Var dropout(Var x, double p, bool training, Rng* rng);

Var mixing_apply(Var concat, const MixingVars& layer, bool training, Rng* rng);

struct ModalityInput {
    std::span<const double> times;
    Var data;  // [L_m x d_m]
};

struct ItnetVars {
    std::vector<AttentionVars> per_modality;
    MixingVars mixing;
};

// One ITNet layer: M causal cross-attentions onto a shared output timeline,
// concatenated and mixed. Uncovered rows contribute zero blocks.
Var itnet_forward(Tape& tape, std::span<const ModalityInput> modalities,
                  std::span<const double> out_times, const ItnetVars& params,
                  const PeConfig& pe_key, const PeConfig& pe_value, bool training, Rng* rng);

}  // namespace itgpt
