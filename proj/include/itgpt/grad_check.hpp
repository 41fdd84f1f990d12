#pragma once

#include <functional>

#include "itgpt/tape.hpp"
#include "itgpt/tensor.hpp"

namespace itgpt {

// Max over coordinates of |analytic - central difference| / max(1, |analytic|)
// for a scalar-valued graph function of one tensor input.
double grad_check(const std::function<Var(Tape&, Var)>& f, const Tensor& x, double eps);

}  // namespace itgpt
