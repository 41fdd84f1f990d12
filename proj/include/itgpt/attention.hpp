#pragma once

#include <optional>
#include <span>
#include <vector>

#include "itgpt/tape.hpp"
#include "itgpt/time_encoding.hpp"

namespace itgpt {

// Trainable maps of one causal cross-attention mechanism, bound on a tape.
// w_key: [d_in x d_k], w_value: [d_in x d_o], optional square query map
// w_query: [d_k x d_k] (queries default to the raw position encoding).
struct AttentionVars {
    Var w_key;
    Var w_value;
    std::optional<Var> w_query;
};

struct AttentionOutput {
    Var values;                      // [L_q x d_o]
    Var weights;                     // [L_q x L_kv], row-stochastic or all-zero
    std::vector<uint8_t> coverage;   // per query: has at least one strictly-past key
};

void require_sorted(std::span<const double> times, const char* name);

// mask[q*L_kv + k] = key_times[k] < query_times[q] (strictly before).
SoftmaxMask strict_past_mask(std::span<const double> query_times,
                             std::span<const double> key_times);

// Strictly-causal cross-attention: queries are the position encoding of the
// query timeline, keys/values are data projections with additive position
// encoding of the key timeline. Keys at times >= the query time carry weight
// exactly 0; queries with no strictly-past key produce a zero output row and
// coverage 0.
AttentionOutput causal_cross_attention(Tape& tape,
                                       std::span<const double> query_times,
                                       std::span<const double> key_times,
                                       Var key_data,
                                       const AttentionVars& params,
                                       const PeConfig& pe_key,
                                       const PeConfig& pe_value);

}  // namespace itgpt
