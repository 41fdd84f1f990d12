#include "itgpt/attention.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace itgpt {

void require_sorted(std::span<const double> times, const char* name) {
    for (size_t i = 1; i < times.size(); ++i) {
        if (times[i] < times[i - 1]) {
            throw std::invalid_argument(std::string(name) + ": timeline not sorted at index " +
                                        std::to_string(i));
        }
    }
}

SoftmaxMask strict_past_mask(std::span<const double> query_times,
                             std::span<const double> key_times) {
    auto mask = std::make_shared<std::vector<uint8_t>>(query_times.size() * key_times.size(), 0);
    for (size_t q = 0; q < query_times.size(); ++q) {
        for (size_t k = 0; k < key_times.size(); ++k) {
            (*mask)[q * key_times.size() + k] = key_times[k] < query_times[q] ? 1 : 0;
        }
    }
    return mask;
}

AttentionOutput causal_cross_attention(Tape& tape,
                                       std::span<const double> query_times,
                                       std::span<const double> key_times,
                                       Var key_data,
                                       const AttentionVars& params,
                                       const PeConfig& pe_key,
                                       const PeConfig& pe_value) {
    require_sorted(query_times, "query_times");
    require_sorted(key_times, "key_times");
    const Tensor& kd = tape.value(key_data);
    if (kd.rank() != 2 || kd.extent(0) != static_cast<int>(key_times.size())) {
        throw std::invalid_argument("key_data rows " + kd.shape_str() + " do not match " +
                                    std::to_string(key_times.size()) + " key timestamps");
    }
    int d_k = pe_key.dim;

    Var keys = tape.input(encode_timeline(key_times, pe_key)) + matmul(key_data, params.w_key);
    Var values = tape.input(encode_timeline(key_times, pe_value)) + matmul(key_data, params.w_value);
    Var queries = tape.input(encode_timeline(query_times, pe_key));
    if (params.w_query) queries = matmul(queries, *params.w_query);

    Var scores = scale(matmul(queries, transpose(keys)), 1.0 / std::sqrt(static_cast<double>(d_k)));
    SoftmaxMask mask = strict_past_mask(query_times, key_times);
    Var weights = masked_softmax_rows(scores, mask);
    Var out = matmul(weights, values);

    std::vector<uint8_t> coverage(query_times.size(), 0);
    for (size_t q = 0; q < query_times.size(); ++q) {
        for (size_t k = 0; k < key_times.size(); ++k) {
            if ((*mask)[q * key_times.size() + k]) {
                coverage[q] = 1;
                break;
            }
        }
    }
    return AttentionOutput{out, weights, std::move(coverage)};
}

}  // namespace itgpt
