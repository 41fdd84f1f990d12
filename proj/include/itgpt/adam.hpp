#pragma once

#include <map>
#include <string>

#include "itgpt/itgpt.hpp"

namespace itgpt {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::map<std::string, Tensor> m, v;
    long step = 0;
};

using GradMap = std::map<std::string, Tensor>;

// Standard bias-corrected update. Parameters absent from grads get a zero
// gradient (moments decay). A non-finite gradient aborts the whole step
// before any parameter is touched, naming the offending path.
void adam_step(ParamStore& params, const GradMap& grads, AdamState& state, double lr,
               const AdamConfig& cfg = {});

}  // namespace itgpt
