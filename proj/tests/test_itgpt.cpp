#include <doctest.h>

#include <stdexcept>

#include "itgpt/util.hpp"

#include <cmath>

#include "itgpt/checks.hpp"
#include "itgpt/itgpt.hpp"
#include "itgpt/reference.hpp"
#include "itgpt/rng.hpp"

using namespace itgpt;

namespace {

ModelConfig toy_config(int depth) {
    ModelConfig cfg;
    cfg.d_k = 4;
    cfg.d_o = 4;
    cfg.d_a = 6;
    cfg.depth = depth;
    cfg.anchor_len = 8;
    cfg.lambda = 500.0;
    return cfg;
}

void zero_params_with_prefix(ItgptModel& model, const std::string& prefix) {
    for (auto& [path, tensor] : model.params()) {
        if (path.rfind(prefix, 0) == 0) tensor.fill(0.0);
    }
}

}  // namespace

TEST_CASE("anchor spec") {
    AnchorSpec a = AnchorSpec::uniform(2.0, 10.0, 5);
    CHECK(a.times.front() == 2.0);
    CHECK(a.times.back() == 10.0);
    CHECK(a.times[2] == doctest::Approx(6.0));
    CHECK_THROWS_AS(AnchorSpec::uniform(5.0, 1.0, 4), std::invalid_argument);
    AnchorSpec single = AnchorSpec::uniform(3.0, 3.0, 1);
    CHECK(single.times == std::vector<double>{3.0});
}

TEST_CASE("residual identity: zero encoder weights give a zero anchor") {
    Dataset ds = checks::random_toy_dataset(1, 2, 10, 40.0, 31);
    ItgptModel model(toy_config(3), ds.schema);
    model.init_params(31);
    for (int l = 0; l < 3; ++l) {
        zero_params_with_prefix(model, "layers." + std::to_string(l) + ".encoder.");
    }
    const Observation& obs = ds.observations[0];
    AnchorSpec anchor = AnchorSpec::for_observation(obs, 8);
    Tape tape;
    auto bound = model.bind(tape);
    ItgptOutput out = model.forward(tape, bound, obs, anchor, false, nullptr);
    const Tensor& z = tape.value(out.anchor);
    for (size_t i = 0; i < z.numel(); ++i) CHECK(z.data()[i] == 0.0);
}

TEST_CASE("zero decoder weights and affine give zero embeddings") {
    Dataset ds = checks::random_toy_dataset(1, 2, 10, 40.0, 32);
    ItgptModel model(toy_config(1), ds.schema);
    model.init_params(32);
    zero_params_with_prefix(model, "layers.0.decoder.");
    const Observation& obs = ds.observations[0];
    AnchorSpec anchor = AnchorSpec::for_observation(obs, 8);
    Tape tape;
    auto bound = model.bind(tape);
    ItgptOutput out = model.forward(tape, bound, obs, anchor, false, nullptr);
    for (const Var& e : out.embeddings) {
        const Tensor& v = tape.value(e);
        for (size_t i = 0; i < v.numel(); ++i) CHECK(v.data()[i] == 0.0);
    }
}

TEST_CASE("depth-2 random instance matches the hand-chained oracle") {
    for (uint64_t seed : {101ull, 102ull, 103ull}) {
        Dataset ds = checks::random_toy_dataset(1, 3, 8, 40.0, seed);
        ModelConfig cfg = toy_config(2);
        ItgptModel model(cfg, ds.schema);
        model.init_params(seed);
        const Observation& obs = ds.observations[0];
        AnchorSpec anchor = AnchorSpec::for_observation(obs, cfg.anchor_len);

        Tape tape;
        auto bound = model.bind(tape);
        ItgptOutput out = model.forward(tape, bound, obs, anchor, false, nullptr);
        LabelPrediction labels = model.predict_labels(tape, bound, out, anchor, obs.target->times);
        std::vector<Var> next = model.predict_next_inputs(tape, bound, out);
        auto want = reference::itgpt_oracle(model, obs, anchor, obs.target->times);

        const Tensor& z = tape.value(out.anchor);
        for (int i = 0; i < z.extent(0); ++i) {
            for (int j = 0; j < z.extent(1); ++j) {
                CHECK(std::abs(z.at(i, j) - want.anchor[static_cast<size_t>(i)][static_cast<size_t>(j)]) < 1e-8);
            }
        }
        for (size_t m = 0; m < out.embeddings.size(); ++m) {
            const Tensor& e = tape.value(out.embeddings[m]);
            const Tensor& p = tape.value(next[m]);
            for (int r = 0; r < e.extent(0); ++r) {
                for (int c = 0; c < e.extent(1); ++c) {
                    CHECK(std::abs(e.at(r, c) - want.embeddings[m][static_cast<size_t>(r)][static_cast<size_t>(c)]) < 1e-8);
                    CHECK(std::abs(p.at(r, c) - want.next_inputs[m][static_cast<size_t>(r)][static_cast<size_t>(c)]) < 1e-8);
                }
            }
        }
        const Tensor& logits = tape.value(labels.logits);
        for (int r = 0; r < logits.extent(0); ++r) {
            for (int c = 0; c < logits.extent(1); ++c) {
                CHECK(std::abs(logits.at(r, c) - want.logits[static_cast<size_t>(r)][static_cast<size_t>(c)]) < 1e-8);
            }
        }
    }
}

TEST_CASE("label head") {
    Dataset ds = checks::random_toy_dataset(1, 2, 10, 40.0, 33);
    ModelConfig cfg = toy_config(1);
    ItgptModel model(cfg, ds.schema);
    model.init_params(33);
    const Observation& obs = ds.observations[0];
    AnchorSpec anchor = AnchorSpec::for_observation(obs, cfg.anchor_len);

    SUBCASE("uncovered target rows get exactly zero logits") {
        std::vector<double> target_times{anchor.times.front() - 1.0, anchor.times.back()};
        // first target precedes every anchor point
        std::vector<double> sorted = target_times;
        std::sort(sorted.begin(), sorted.end());
        Tape tape;
        auto bound = model.bind(tape);
        ItgptOutput out = model.forward(tape, bound, obs, anchor, false, nullptr);
        LabelPrediction pred = model.predict_labels(tape, bound, out, anchor, sorted);
        CHECK(pred.coverage[0] == 0);
        CHECK(pred.coverage[1] == 1);
        const Tensor& logits = tape.value(pred.logits);
        for (int c = 0; c < 2; ++c) CHECK(logits.at(0, c) == 0.0);
    }

    SUBCASE("perturbing data at times >= t leaves logits at t unchanged") {
        Rng rng(44);
        double cut = 0.5 * (anchor.times.front() + anchor.times.back());
        std::vector<double> targets{cut - 1.0, anchor.times.back() + 1.0};
        auto run = [&](const Observation& o) {
            Tape tape;
            auto bound = model.bind(tape);
            ItgptOutput out = model.forward(tape, bound, o, anchor, false, nullptr);
            return tape.value(model.predict_labels(tape, bound, out, anchor, targets).logits);
        };
        Tensor base = run(obs);
        Observation perturbed = obs;
        for (auto& m : perturbed.modalities) {
            for (size_t r = 0; r < m.times.size(); ++r) {
                if (m.times[r] < cut) continue;
                for (int d = 0; d < m.values.extent(1); ++d) {
                    m.values.at(static_cast<int>(r), d) += rng.uniform(-3.0, 3.0);
                }
            }
        }
        Tensor moved = run(perturbed);
        for (int c = 0; c < 2; ++c) CHECK(moved.at(0, c) == base.at(0, c));
        // the later row is allowed to change; with random perturbations it does
        bool later_changed = false;
        for (int c = 0; c < 2; ++c) later_changed = later_changed || moved.at(1, c) != base.at(1, c);
        CHECK(later_changed);
    }
}

TEST_CASE("predict_next_inputs") {
    Dataset ds = checks::random_toy_dataset(1, 2, 8, 30.0, 34);
    ModelConfig cfg = toy_config(1);
    ItgptModel model(cfg, ds.schema);
    model.init_params(34);
    const Observation& obs = ds.observations[0];
    AnchorSpec anchor = AnchorSpec::for_observation(obs, cfg.anchor_len);

    SUBCASE("zero heads give zero predictions") {
        zero_params_with_prefix(model, "ssl_head.");
        Tape tape;
        auto bound = model.bind(tape);
        ItgptOutput out = model.forward(tape, bound, obs, anchor, false, nullptr);
        for (Var p : model.predict_next_inputs(tape, bound, out)) {
            const Tensor& v = tape.value(p);
            for (size_t i = 0; i < v.numel(); ++i) CHECK(v.data()[i] == 0.0);
        }
    }
    SUBCASE("first sample of each modality is uncovered") {
        // the anchor starts at the first sample time, so no anchor point is
        // strictly before it
        Tape tape;
        auto bound = model.bind(tape);
        ItgptOutput out = model.forward(tape, bound, obs, anchor, false, nullptr);
        auto [lo, hi] = obs.span();
        for (size_t m = 0; m < obs.modalities.size(); ++m) {
            if (obs.modalities[m].times.empty()) continue;
            if (obs.modalities[m].times.front() == lo) {
                CHECK(out.embedding_coverage[m][0] == 0);
            }
        }
    }
}

TEST_CASE("parameter count grows by exactly one encoder/decoder pair per layer") {
    Dataset ds = checks::random_toy_dataset(1, 2, 8, 30.0, 35);
    size_t pair_size = 0;
    {
        ItgptModel probe(toy_config(1), ds.schema);
        for (const auto& [path, t] : probe.params()) {
            if (path.rfind("layers.0.", 0) == 0) pair_size += t.numel();
        }
    }
    std::vector<size_t> counts;
    for (int depth = 1; depth <= 4; ++depth) {
        counts.push_back(ItgptModel(toy_config(depth), ds.schema).param_count());
    }
    for (size_t i = 1; i < counts.size(); ++i) CHECK(counts[i] - counts[i - 1] == pair_size);
}

TEST_CASE("config validation") {
    Dataset ds = checks::random_toy_dataset(1, 2, 8, 30.0, 36);
    ModelConfig cfg = toy_config(1);
    cfg.depth = 0;
    CHECK_THROWS_AS(ItgptModel(cfg, ds.schema), std::invalid_argument);
    cfg = toy_config(1);
    cfg.d_k = 5;
    CHECK_THROWS_AS(ItgptModel(cfg, ds.schema), std::invalid_argument);
}

TEST_CASE("anchor must span the observation") {
    Dataset ds = checks::random_toy_dataset(1, 2, 8, 30.0, 37);
    ModelConfig cfg = toy_config(1);
    ItgptModel model(cfg, ds.schema);
    model.init_params(37);
    const Observation& obs = ds.observations[0];
    auto [lo, hi] = obs.span();
    AnchorSpec bad = AnchorSpec::uniform(lo, hi * 0.5, 4);
    Tape tape;
    auto bound = model.bind(tape);
    CHECK_THROWS_AS(model.forward(tape, bound, obs, bad, false, nullptr), data_error);
}

TEST_CASE("same seed gives bit-identical initialization") {
    Dataset ds = checks::random_toy_dataset(1, 2, 8, 30.0, 38);
    ItgptModel a(toy_config(2), ds.schema), b(toy_config(2), ds.schema);
    a.init_params(99);
    b.init_params(99);
    for (const auto& [path, t] : a.params()) {
        const Tensor& u = b.params().at(path);
        for (size_t i = 0; i < t.numel(); ++i) CHECK(t.data()[i] == u.data()[i]);
    }
}
