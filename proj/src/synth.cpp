#include "itgpt/synth.hpp"

#include <algorithm>
#include <cmath>

#include "itgpt/rng.hpp"

namespace itgpt {

void SynthSpec::validate() const {
    if (n_obs <= 0) throw data_error("synth spec: n_obs must be positive");
    if (modality_names.empty()) throw data_error("synth spec: zero modalities");
    if (modality_names.size() != dims.size() || dims.size() != rates.size()) {
        throw data_error("synth spec: modality name/dim/rate counts differ");
    }
    for (double r : rates) {
        if (!(r > 0)) throw data_error("synth spec: rates must be positive");
    }
    if (n_latent <= 0 || sinusoids <= 0) throw data_error("synth spec: latent sizes must be positive");
    if (!(freq_min > 0 && freq_max >= freq_min)) throw data_error("synth spec: bad frequency range");
    if (!(t_span > 0)) throw data_error("synth spec: t_span must be positive");
    if (!(target_rate > 0)) throw data_error("synth spec: target_rate must be positive");
    if (n_classes < 2) throw data_error("synth spec: need at least 2 classes");
    if (label_rule != "sign" && label_rule != "quantile") {
        throw data_error("synth spec: label_rule must be sign or quantile");
    }
    if (label_rule == "sign" && n_classes != 2) {
        throw data_error("synth spec: the sign label rule is binary");
    }
    if (!(amplitude > 0)) throw data_error("synth spec: amplitude must be positive");
    if (!(noise >= 0)) throw data_error("synth spec: noise must be nonnegative");
    if (!(missing >= 0 && missing < 1)) throw data_error("synth spec: missing must be in [0,1)");
}

KvMap SynthSpec::to_kv() const {
    KvMap kv;
    kv["n_obs"] = std::to_string(n_obs);
    kv["n_latent"] = std::to_string(n_latent);
    kv["sinusoids"] = std::to_string(sinusoids);
    kv["freq_min"] = format_double(freq_min);
    kv["freq_max"] = format_double(freq_max);
    kv["t_span"] = format_double(t_span);
    std::string names, dim_s, rate_s;
    for (size_t i = 0; i < modality_names.size(); ++i) {
        if (i) {
            names += ",";
            dim_s += ",";
            rate_s += ",";
        }
        names += modality_names[i];
        dim_s += std::to_string(dims[i]);
        rate_s += format_double(rates[i]);
    }
    kv["modalities"] = names;
    kv["dims"] = dim_s;
    kv["rates"] = rate_s;
    kv["target_rate"] = format_double(target_rate);
    kv["classes"] = std::to_string(n_classes);
    kv["label_rule"] = label_rule;
    kv["amplitude"] = format_double(amplitude);
    kv["noise"] = format_double(noise);
    kv["missing"] = format_double(missing);
    return kv;
}

SynthSpec SynthSpec::from_kv(const KvMap& kv, const std::string& context) {
    SynthSpec spec;
    auto get = [&](const char* key) -> const std::string* {
        auto it = kv.find(key);
        return it == kv.end() ? nullptr : &it->second;
    };
    if (auto* v = get("n_obs")) spec.n_obs = static_cast<int>(parse_long(*v, context));
    if (auto* v = get("n_latent")) spec.n_latent = static_cast<int>(parse_long(*v, context));
    if (auto* v = get("sinusoids")) spec.sinusoids = static_cast<int>(parse_long(*v, context));
    if (auto* v = get("freq_min")) spec.freq_min = parse_double(*v, context);
    if (auto* v = get("freq_max")) spec.freq_max = parse_double(*v, context);
    if (auto* v = get("t_span")) spec.t_span = parse_double(*v, context);
    if (auto* v = get("modalities")) {
        for (const auto& n : split(*v, ',')) spec.modality_names.push_back(trim(n));
    }
    if (auto* v = get("dims")) {
        for (const auto& n : split(*v, ',')) {
            spec.dims.push_back(static_cast<int>(parse_long(trim(n), context)));
        }
    }
    if (auto* v = get("rates")) {
        for (const auto& n : split(*v, ',')) spec.rates.push_back(parse_double(trim(n), context));
    }
    if (auto* v = get("target_rate")) spec.target_rate = parse_double(*v, context);
    if (auto* v = get("classes")) spec.n_classes = static_cast<int>(parse_long(*v, context));
    if (auto* v = get("label_rule")) spec.label_rule = *v;
    if (auto* v = get("amplitude")) spec.amplitude = parse_double(*v, context);
    if (auto* v = get("noise")) spec.noise = parse_double(*v, context);
    if (auto* v = get("missing")) spec.missing = parse_double(*v, context);
    spec.validate();
    return spec;
}

namespace {

struct LatentProcess {
    // per channel, per sinusoid: amplitude, frequency (cycles/unit), phase
    std::vector<double> amp, freq, phase;
    int channels, k;

    double eval(int channel, double t) const {
        double z = 0;
        for (int j = 0; j < k; ++j) {
            size_t idx = static_cast<size_t>(channel) * k + j;
            z += amp[idx] * std::sin(2.0 * M_PI * freq[idx] * t + phase[idx]);
        }
        return z / std::sqrt(static_cast<double>(k));
    }
};

LatentProcess draw_latent(const SynthSpec& spec, Rng& rng) {
    LatentProcess lat;
    lat.channels = spec.n_latent;
    lat.k = spec.sinusoids;
    size_t n = static_cast<size_t>(spec.n_latent) * spec.sinusoids;
    lat.amp.resize(n);
    lat.freq.resize(n);
    lat.phase.resize(n);
    for (size_t i = 0; i < n; ++i) {
        lat.amp[i] = rng.normal();
        lat.freq[i] = rng.uniform(spec.freq_min, spec.freq_max);
        lat.phase[i] = rng.uniform(0.0, 2.0 * M_PI);
    }
    return lat;
}

std::vector<double> poisson_timeline(double rate, double span, double missing, Rng& rng) {
    std::vector<double> times;
    double t = rng.exponential(rate);
    while (t < span) {
        if (missing <= 0.0 || rng.uniform01() >= missing) times.push_back(t);
        t += rng.exponential(rate);
    }
    return times;
}

}  // namespace

Dataset synth_generate(const SynthSpec& spec, uint64_t seed) {
    spec.validate();
    Dataset ds;
    ds.schema.modality_names = spec.modality_names;
    ds.schema.modality_dims = spec.dims;
    ds.schema.n_classes = spec.n_classes;

    // fixed readout maps shared by the whole dataset; observations differ in
    // their latent draws and sampling timelines
    Rng map_rng(Rng::derive(seed, 0x4ead));
    std::vector<Tensor> readouts;
    for (size_t m = 0; m < spec.dims.size(); ++m) {
        Tensor r({spec.dims[m], spec.n_latent});
        for (size_t i = 0; i < r.numel(); ++i) {
            r.data()[i] = spec.amplitude * map_rng.uniform(-1.0, 1.0);
        }
        readouts.push_back(std::move(r));
    }

    std::vector<double> label_scores;  // z0 at every target row, for quantile cuts
    for (int i = 0; i < spec.n_obs; ++i) {
        Rng rng(Rng::derive(seed, 0x0b5 + static_cast<uint64_t>(i)));
        LatentProcess lat = draw_latent(spec, rng);

        Observation obs;
        obs.id = std::to_string(i);
        // zero-padded ids keep directory listings and loads in generation order
        obs.id = std::string(6 - std::min<size_t>(6, obs.id.size()), '0') + obs.id;

        for (size_t m = 0; m < spec.dims.size(); ++m) {
            ModalitySeries series;
            series.name = spec.modality_names[m];
            series.times = poisson_timeline(spec.rates[m], spec.t_span, spec.missing, rng);
            int rows = static_cast<int>(series.times.size());
            series.values = Tensor({rows, spec.dims[m]});
            for (int r = 0; r < rows; ++r) {
                for (int d = 0; d < spec.dims[m]; ++d) {
                    double x = 0;
                    for (int c = 0; c < spec.n_latent; ++c) {
                        x += readouts[m].at(d, c) * lat.eval(c, series.times[static_cast<size_t>(r)]);
                    }
                    if (spec.noise > 0) x += spec.noise * rng.normal();
                    series.values.at(r, d) = x;
                }
            }
            obs.modalities.push_back(std::move(series));
        }

        TargetSeries target;
        target.times = poisson_timeline(spec.target_rate, spec.t_span, 0.0, rng);
        for (double t : target.times) {
            double z0 = lat.eval(0, t);
            label_scores.push_back(z0);
            target.labels.push_back(spec.label_rule == "sign" ? (z0 > 0 ? 1 : 0) : 0);
        }
        obs.target = std::move(target);
        ds.observations.push_back(std::move(obs));
    }

    if (spec.label_rule == "quantile") {
        std::vector<double> sorted = label_scores;
        std::sort(sorted.begin(), sorted.end());
        std::vector<double> cuts;
        for (int c = 1; c < spec.n_classes; ++c) {
            size_t pos = sorted.size() * static_cast<size_t>(c) / spec.n_classes;
            cuts.push_back(sorted[std::min(pos, sorted.size() - 1)]);
        }
        size_t at = 0;
        for (auto& obs : ds.observations) {
            for (size_t r = 0; r < obs.target->labels.size(); ++r, ++at) {
                int klass = 0;
                for (double cut : cuts) klass += label_scores[at] >= cut ? 1 : 0;
                obs.target->labels[r] = klass;
            }
        }
    }
    return ds;
}

}  // namespace itgpt
