#include "itgpt/grad_check.hpp"

#include <cmath>
#include <stdexcept>

namespace itgpt {

namespace {

double eval_scalar(const std::function<Var(Tape&, Var)>& f, const Tensor& x) {
    Tape tape;
    Var out = f(tape, tape.input(x));
    const Tensor& v = tape.value(out);
    if (v.numel() != 1) {
        throw std::invalid_argument("grad_check: function output is not scalar, shape " +
                                    v.shape_str());
    }
    return v.as_scalar();
}

}  // namespace

double grad_check(const std::function<Var(Tape&, Var)>& f, const Tensor& x, double eps) {
    if (!(eps > 0)) throw std::invalid_argument("grad_check: eps must be positive");

    Tape tape;
    Var xv = tape.input(x);
    Var out = f(tape, xv);
    if (tape.value(out).numel() != 1) {
        throw std::invalid_argument("grad_check: function output is not scalar, shape " +
                                    tape.value(out).shape_str());
    }
    tape.backward(out);
    Tensor analytic = tape.grad(xv);

    double worst = 0.0;
    Tensor probe = x;
    for (size_t i = 0; i < x.numel(); ++i) {
        double orig = probe.data()[i];
        probe.data()[i] = orig + eps;
        double up = eval_scalar(f, probe);
        probe.data()[i] = orig - eps;
        double down = eval_scalar(f, probe);
        probe.data()[i] = orig;
        double fd = (up - down) / (2.0 * eps);
        double a = analytic.data()[i];
        double rel = std::abs(a - fd) / std::max(1.0, std::abs(a));
        worst = std::max(worst, rel);
    }
    return worst;
}

}  // namespace itgpt
