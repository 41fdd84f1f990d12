#pragma once

#include <string>
#include <vector>

#include "itgpt/itgpt.hpp"

namespace itgpt::checks {

struct CheckResult {
    std::string name;
    double max_err = 0.0;
    double threshold = 0.0;
    bool pass = false;
    std::string detail;

    std::string line() const;  // "[PASS] name: max_err=... threshold=..."
};

// |p(t).p(t') - sum_i cos(w_i (t - t'))| over random pairs and dims.
CheckResult check_pe_translation(int n_pairs, const std::vector<int>& dims, uint64_t seed);

// Central finite differences vs analytic gradients for every registered op,
// sampled away from ReLU kinks.
CheckResult check_grad_ops(int n_cases, uint64_t seed);

// Full ITGPT CE+SSL loss on a toy 2-modality observation: analytic gradient
// vs central differences over randomly sampled parameter coordinates.
CheckResult check_grad_model(int depth, int n_coords, uint64_t seed);

// Tape implementations vs scalar-loop oracles of the attention, ITNet and
// ITGPT chains on random small instances.
CheckResult check_oracle_equivalence(int n_instances, uint64_t seed);

// Perturb all data at times >= a random cut; every output at times < cut
// must be bitwise unchanged.
CheckResult check_causality(int n_observations, int n_cuts, uint64_t seed);

// Toy fixtures shared with the acceptance suite.
Dataset random_toy_dataset(int n_obs, int n_modalities, int max_len, double span, uint64_t seed);

}  // namespace itgpt::checks
