#include "itgpt/adam.hpp"

#include <cmath>

#include "itgpt/util.hpp"

namespace itgpt {

void adam_step(ParamStore& params, const GradMap& grads, AdamState& state, double lr,
               const AdamConfig& cfg) {
    for (const auto& [path, g] : grads) {
        auto it = params.find(path);
        if (it == params.end()) throw std::invalid_argument("gradient for unknown parameter " + path);
        if (!g.same_shape(it->second)) {
            throw std::invalid_argument("gradient shape " + g.shape_str() + " vs parameter " +
                                        it->second.shape_str() + " at " + path);
        }
        if (!g.all_finite()) {
            throw numeric_error("non-finite gradient for parameter " + path);
        }
    }

    if (state.m.empty()) {
        for (const auto& [path, p] : params) {
            state.m[path] = Tensor::zeros(p.shape());
            state.v[path] = Tensor::zeros(p.shape());
        }
    }
    ++state.step;
    double bc1 = 1.0 - std::pow(cfg.beta1, state.step);
    double bc2 = 1.0 - std::pow(cfg.beta2, state.step);

    static const Tensor kEmpty;
    for (auto& [path, p] : params) {
        auto git = grads.find(path);
        const Tensor& g = git == grads.end() ? kEmpty : git->second;
        Tensor& m = state.m[path];
        Tensor& v = state.v[path];
        for (size_t i = 0; i < p.numel(); ++i) {
            double gi = g.numel() ? g.data()[i] : 0.0;
            m.data()[i] = cfg.beta1 * m.data()[i] + (1.0 - cfg.beta1) * gi;
            v.data()[i] = cfg.beta2 * v.data()[i] + (1.0 - cfg.beta2) * gi * gi;
            double m_hat = m.data()[i] / bc1;
            double v_hat = v.data()[i] / bc2;
            p.data()[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
        }
    }
}

}  // namespace itgpt
