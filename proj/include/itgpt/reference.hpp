#pragma once

#include <optional>
#include <span>
#include <vector>

#include "itgpt/data.hpp"
#include "itgpt/itgpt.hpp"

namespace itgpt::reference {

// Scalar-loop reference implementations. Triple-nested loops, no
// vectorization, no tape, no max-shift; capped at desk scale and used only by
// the check suites and tests, never by a model forward path.

struct OracleAttention {
    std::vector<std::vector<double>> values;   // [L_q][d_o]
    std::vector<std::vector<double>> weights;  // [L_q][L_kv]
    std::vector<uint8_t> coverage;
};

OracleAttention attention_oracle(std::span<const double> query_times,
                                 std::span<const double> key_times, const Tensor& key_data,
                                 const Tensor& w_key, const Tensor& w_value,
                                 const Tensor* w_query, const PeConfig& pe_key,
                                 const PeConfig& pe_value);

struct OracleModality {
    std::vector<double> times;
    Tensor values;
};

struct OracleAttentionParams {
    Tensor w_key, w_value;
    std::optional<Tensor> w_query;
};

struct OracleMixing {
    MixingKind kind;
    std::vector<Tensor> weights;
    std::vector<Tensor> biases;
};

// Eq. (4): per-modality attention, concatenation, mixing by scalar loops.
std::vector<std::vector<double>> itnet_oracle(std::span<const OracleModality> modalities,
                                              std::span<const double> out_times,
                                              std::span<const OracleAttentionParams> attn,
                                              const OracleMixing& mixing, const PeConfig& pe_key,
                                              const PeConfig& pe_value);

struct OracleItgpt {
    std::vector<std::vector<double>> anchor;                    // Z^(depth)
    std::vector<std::vector<std::vector<double>>> embeddings;   // per modality
    std::vector<std::vector<double>> logits;                    // label head
    std::vector<std::vector<std::vector<double>>> next_inputs;  // ssl heads
};

// Chains Eq. (13)-(15) plus both heads by reading the model's parameter
// store directly; shares nothing with the tape implementation.
OracleItgpt itgpt_oracle(const ItgptModel& model, const Observation& obs,
                         const AnchorSpec& anchor, std::span<const double> target_times);

}  // namespace itgpt::reference
