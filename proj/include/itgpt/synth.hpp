#pragma once

#include <string>
#include <vector>

#include "itgpt/data.hpp"
#include "itgpt/util.hpp"

namespace itgpt {

// Desk-scale synthetic benchmark: a smooth latent process (sum of random
// low-frequency sinusoids per channel), per-modality linear readouts sampled
// on independent Poisson timelines, and labels from a thresholded latent
// functional on its own timeline. The data-to-label relation is causal and
// learnable by construction.
struct SynthSpec {
    int n_obs = 0;
    int n_latent = 3;
    int sinusoids = 3;
    double freq_min = 0.01;
    double freq_max = 0.05;
    double t_span = 100.0;
    std::vector<std::string> modality_names;
    std::vector<int> dims;
    std::vector<double> rates;     // expected samples per unit time, per modality
    double target_rate = 0.15;
    int n_classes = 2;
    std::string label_rule = "sign";  // sign (binary, latent0 > 0) or quantile
    double amplitude = 1.0;           // readout magnitude scale
    double noise = 0.05;              // observation noise std on readouts
    double missing = 0.0;             // per-sample drop probability

    void validate() const;
    KvMap to_kv() const;
    static SynthSpec from_kv(const KvMap& kv, const std::string& context);
};

Dataset synth_generate(const SynthSpec& spec, uint64_t seed);

}  // namespace itgpt
