#pragma once

#include <span>
#include <vector>

#include "itgpt/tensor.hpp"

namespace itgpt {

// Sinusoidal continuous-time position encoding
//   p(t) = [sin(w_1 t), cos(w_1 t), ..., sin(w_{dim/2} t), cos(w_{dim/2} t)]
// with w_i = lambda^(-2i/dim). lambda must exceed the largest timestamp the
// encoding will see; dim must be even so sin/cos pair up.
struct PeConfig {
    int dim = 0;
    double lambda = 0.0;

    void validate() const;
};

double pe_omega(const PeConfig& cfg, int i);  // i in [1, dim/2]

Tensor encode_time(double t, const PeConfig& cfg);

// Row i is encode_time(tau[i]); tau must be sorted ascending.
Tensor encode_timeline(std::span<const double> tau, const PeConfig& cfg);

}  // namespace itgpt
