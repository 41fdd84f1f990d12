#include "itgpt/time_encoding.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace itgpt {

void PeConfig::validate() const {
    if (dim <= 0 || dim % 2 != 0) {
        throw std::invalid_argument("position encoding dim must be even and positive, got " +
                                    std::to_string(dim));
    }
    if (!(lambda > 0.0)) {
        throw std::invalid_argument("position encoding lambda must be positive");
    }
}

double pe_omega(const PeConfig& cfg, int i) {
    return std::pow(cfg.lambda, -2.0 * i / cfg.dim);
}

Tensor encode_time(double t, const PeConfig& cfg) {
    cfg.validate();
    Tensor out({cfg.dim});
    for (int i = 1; i <= cfg.dim / 2; ++i) {
        double w = pe_omega(cfg, i);
        out.at(2 * (i - 1)) = std::sin(w * t);
        out.at(2 * (i - 1) + 1) = std::cos(w * t);
    }
    return out;
}

Tensor encode_timeline(std::span<const double> tau, const PeConfig& cfg) {
    cfg.validate();
    for (size_t i = 1; i < tau.size(); ++i) {
        if (tau[i] < tau[i - 1]) {
            throw std::invalid_argument("encode_timeline: timestamps not sorted at index " +
                                        std::to_string(i));
        }
    }
    Tensor out({static_cast<int>(tau.size()), cfg.dim});
    for (size_t r = 0; r < tau.size(); ++r) {
        for (int i = 1; i <= cfg.dim / 2; ++i) {
            double w = pe_omega(cfg, i);
            out.at(static_cast<int>(r), 2 * (i - 1)) = std::sin(w * tau[r]);
            out.at(static_cast<int>(r), 2 * (i - 1) + 1) = std::cos(w * tau[r]);
        }
    }
    return out;
}

}  // namespace itgpt
