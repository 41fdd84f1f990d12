#include <doctest.h>

#include <stdexcept>

#include <cmath>

#include "itgpt/objectives.hpp"
#include "itgpt/rng.hpp"
#include "itgpt/util.hpp"

using namespace itgpt;

namespace {

Tensor one_hot_rows(const std::vector<int>& labels, int classes) {
    Tensor t({static_cast<int>(labels.size()), classes});
    for (size_t i = 0; i < labels.size(); ++i) t.at(static_cast<int>(i), labels[i]) = 1.0;
    return t;
}

// scalar-loop CE used to freeze expected values
double ce_oracle(const Tensor& onehot, const Tensor& probs, std::optional<int> censored,
                 const std::vector<uint8_t>& coverage) {
    double total = 0;
    long n = 0;
    for (int r = 0; r < probs.extent(0); ++r) {
        int label = -1;
        for (int c = 0; c < probs.extent(1); ++c)
            if (onehot.at(r, c) == 1.0) label = c;
        if (!coverage.empty() && !coverage[static_cast<size_t>(r)]) continue;
        if (censored && label == *censored) continue;
        total -= std::log(std::max(probs.at(r, label), 1e-12));
        ++n;
    }
    return n ? total / static_cast<double>(n) : 0.0;
}

}  // namespace

TEST_CASE("ce_loss") {
    SUBCASE("perfect prediction gives zero") {
        Tape tape;
        Tensor onehot = one_hot_rows({0, 1}, 2);
        Var probs = tape.input(Tensor::matrix(2, 2, {1.0, 0.0, 0.0, 1.0}));
        CeLoss l = ce_loss(tape, onehot, probs, std::nullopt, {});
        CHECK(l.included_rows == 2);
        CHECK(tape.value(l.loss).as_scalar() == doctest::Approx(0.0).epsilon(1e-10));
    }
    SUBCASE("uniform prediction over 5 classes costs ln 5 per row") {
        Tape tape;
        Tensor onehot = one_hot_rows({0, 3, 4}, 5);
        Var probs = tape.input(Tensor::full({3, 5}, 0.2));
        CeLoss l = ce_loss(tape, onehot, probs, std::nullopt, {});
        double want = ce_oracle(onehot, Tensor::full({3, 5}, 0.2), std::nullopt, {});
        CHECK(want == doctest::Approx(std::log(5.0)));
        CHECK(tape.value(l.loss).as_scalar() == doctest::Approx(want));
        CHECK(tape.value(l.loss).as_scalar() == doctest::Approx(1.6094379124341003));
    }
    SUBCASE("censored rows are excluded; all-censored is zero with the empty signal") {
        Tape tape;
        Tensor onehot = one_hot_rows({2, 2}, 3);
        Var probs = tape.input(Tensor::full({2, 3}, 1.0 / 3.0));
        CeLoss l = ce_loss(tape, onehot, probs, 2, {});
        CHECK(l.empty());
        CHECK(tape.value(l.loss).as_scalar() == 0.0);
    }
    SUBCASE("uncovered rows are excluded") {
        Tape tape;
        Tensor onehot = one_hot_rows({0, 1}, 2);
        Tensor p = Tensor::matrix(2, 2, {0.9, 0.1, 0.5, 0.5});
        std::vector<uint8_t> coverage{1, 0};
        CeLoss l = ce_loss(tape, onehot, tape.input(p), std::nullopt, coverage);
        CHECK(l.included_rows == 1);
        CHECK(tape.value(l.loss).as_scalar() == doctest::Approx(-std::log(0.9)));
    }
    SUBCASE("random cases match the scalar oracle and stay nonnegative") {
        Rng rng(51);
        for (int rep = 0; rep < 50; ++rep) {
            int rows = 1 + static_cast<int>(rng.below(6));
            int classes = 2 + static_cast<int>(rng.below(4));
            std::vector<int> labels;
            std::vector<uint8_t> coverage;
            for (int r = 0; r < rows; ++r) {
                labels.push_back(static_cast<int>(rng.below(static_cast<uint64_t>(classes))));
                coverage.push_back(rng.uniform01() < 0.8 ? 1 : 0);
            }
            Tensor probs({rows, classes});
            for (int r = 0; r < rows; ++r) {
                double sum = 0;
                for (int c = 0; c < classes; ++c) {
                    probs.at(r, c) = rng.uniform(0.01, 1.0);
                    sum += probs.at(r, c);
                }
                for (int c = 0; c < classes; ++c) probs.at(r, c) /= sum;
            }
            Tensor onehot = one_hot_rows(labels, classes);
            Tape tape;
            CeLoss l = ce_loss(tape, onehot, tape.input(probs), std::nullopt, coverage);
            double got = tape.value(l.loss).as_scalar();
            CHECK(got >= 0.0);
            CHECK(got == doctest::Approx(ce_oracle(onehot, probs, std::nullopt, coverage)).epsilon(1e-12));
        }
    }
    SUBCASE("rows that do not sum to one are rejected") {
        Tape tape;
        Tensor onehot = one_hot_rows({0}, 2);
        CHECK_THROWS_AS(
            ce_loss(tape, onehot, tape.input(Tensor::matrix(1, 2, {0.9, 0.3})), std::nullopt, {}),
            std::invalid_argument);
    }
}

TEST_CASE("ssl_mse_loss") {
    auto make_obs = [](const std::vector<double>& data) {
        Observation obs;
        obs.id = "t";
        ModalitySeries m;
        m.name = "m0";
        for (size_t i = 0; i < data.size(); ++i) m.times.push_back(static_cast<double>(i));
        m.values = Tensor({static_cast<int>(data.size()), 1}, data);
        obs.modalities.push_back(std::move(m));
        return obs;
    };
    SUBCASE("predictions equal to data give zero") {
        Observation obs = make_obs({1.0, 2.0, 3.0});
        Tape tape;
        std::vector<Var> preds{tape.input(obs.modalities[0].values)};
        std::vector<std::vector<uint8_t>> coverage{{1, 1, 1}};
        SslLoss l = ssl_mse_loss(tape, obs, preds, coverage);
        CHECK(tape.value(l.loss).as_scalar() == 0.0);
    }
    SUBCASE("hand case: data [1,2,3], zero predictions for t>=2 cost 13/3") {
        Observation obs = make_obs({1.0, 2.0, 3.0});
        Tape tape;
        std::vector<Var> preds{tape.input(Tensor::zeros({3, 1}))};
        std::vector<std::vector<uint8_t>> coverage{{1, 1, 1}};
        SslLoss l = ssl_mse_loss(tape, obs, preds, coverage);
        CHECK(l.included_rows == 2);
        CHECK(tape.value(l.loss).as_scalar() == doctest::Approx(13.0 / 3.0));
    }
    SUBCASE("uncovered rows drop out; all-uncovered gives zero") {
        Observation obs = make_obs({1.0, 2.0, 3.0});
        Tape tape;
        std::vector<Var> preds{tape.input(Tensor::zeros({3, 1}))};
        std::vector<std::vector<uint8_t>> coverage{{0, 0, 0}};
        SslLoss l = ssl_mse_loss(tape, obs, preds, coverage);
        CHECK(l.included_rows == 0);
        CHECK(tape.value(l.loss).as_scalar() == 0.0);
    }
    SUBCASE("shape mismatch is rejected") {
        Observation obs = make_obs({1.0, 2.0});
        Tape tape;
        std::vector<Var> preds{tape.input(Tensor::zeros({3, 1}))};
        std::vector<std::vector<uint8_t>> coverage{{1, 1}};
        CHECK_THROWS_AS(ssl_mse_loss(tape, obs, preds, coverage), std::invalid_argument);
    }
}

TEST_CASE("combined_loss") {
    LossConfig cfg;
    cfg.scheme = Scheme::CE_SSL;
    cfg.labeled = {0, 2};
    Tape tape;
    Var ce = tape.input(Tensor::scalar(0.5));
    Var ssl = tape.input(Tensor::scalar(0.25));
    SUBCASE("unlabeled index uses ssl alone") {
        Var l = combined_loss(1, cfg, std::nullopt, ssl);
        CHECK(tape.value(l).as_scalar() == 0.25);
    }
    SUBCASE("labeled index sums both") {
        Var l = combined_loss(0, cfg, ce, ssl);
        CHECK(tape.value(l).as_scalar() == 0.75);
    }
    SUBCASE("all labeled means ce + ssl for every index") {
        cfg.labeled = {0, 1, 2, 3};
        for (size_t i = 0; i < 4; ++i) {
            CHECK(tape.value(combined_loss(i, cfg, ce, ssl)).as_scalar() == 0.75);
        }
    }
    SUBCASE("wrong scheme is a logic error") {
        cfg.scheme = Scheme::CE;
        CHECK_THROWS_AS(combined_loss(0, cfg, ce, ssl), std::logic_error);
    }
}

TEST_CASE("schedule_select follows the two-phase schedule") {
    LossConfig cfg;
    cfg.scheme = Scheme::GPT_then_CE;
    cfg.pretrain_epochs = 2;
    cfg.finetune_epochs = 5;
    cfg.labeled = {1};
    SUBCASE("epochs 1-2 are MSE for everyone") {
        for (int n = 1; n <= 2; ++n) {
            CHECK(schedule_select(n, 0, cfg) == PhaseUse::UseMse);
            CHECK(schedule_select(n, 1, cfg) == PhaseUse::UseMse);
        }
    }
    SUBCASE("after pretraining, labeled gets CE and unlabeled is skipped") {
        CHECK(schedule_select(3, 1, cfg) == PhaseUse::UseCe);
        CHECK(schedule_select(5, 0, cfg) == PhaseUse::Skip);
    }
    SUBCASE("pure function: repeated calls agree") {
        for (int rep = 0; rep < 3; ++rep) CHECK(schedule_select(4, 1, cfg) == PhaseUse::UseCe);
    }
    SUBCASE("epochs outside the budget are rejected") {
        CHECK_THROWS_AS(schedule_select(0, 0, cfg), std::invalid_argument);
        CHECK_THROWS_AS(schedule_select(8, 0, cfg), std::invalid_argument);
    }
}

TEST_CASE("subsample_labels") {
    auto make_dataset = [](int n, int classes) {
        Dataset ds;
        ds.schema.modality_names = {"m0"};
        ds.schema.modality_dims = {1};
        ds.schema.n_classes = classes;
        Rng rng(2);
        for (int i = 0; i < n; ++i) {
            Observation obs;
            obs.id = std::to_string(i);
            ModalitySeries m;
            m.name = "m0";
            m.times = {0.0};
            m.values = Tensor({1, 1});
            obs.modalities.push_back(m);
            TargetSeries t;
            t.times = {1.0};
            t.labels = {static_cast<int>(rng.below(static_cast<uint64_t>(classes)))};
            obs.target = t;
            ds.observations.push_back(std::move(obs));
        }
        return ds;
    };
    std::vector<size_t> all;
    Dataset ds = make_dataset(1000, 2);
    for (size_t i = 0; i < ds.size(); ++i) all.push_back(i);

    SUBCASE("fraction 1.0 selects everything") {
        CHECK(subsample_labels(ds, all, 1.0, 7).size() == 1000);
    }
    SUBCASE("same seed twice is identical, different seed differs") {
        auto a = subsample_labels(ds, all, 0.05, 7);
        auto b = subsample_labels(ds, all, 0.05, 7);
        auto c = subsample_labels(ds, all, 0.05, 8);
        CHECK(a == b);
        CHECK(a != c);
    }
    SUBCASE("N=1000 with fraction 0.001 selects exactly one") {
        CHECK(subsample_labels(ds, all, 0.001, 7).size() == 1);
    }
    SUBCASE("empty selection is an error telling the user to raise the fraction") {
        CHECK_THROWS_WITH_AS(subsample_labels(ds, all, 0.0004, 7), doctest::Contains("increase"),
                             data_error);
    }
    SUBCASE("stratification keeps class shares") {
        Dataset skew = make_dataset(200, 2);
        // force 150/50 class split by majority label
        for (int i = 0; i < 200; ++i) skew.observations[static_cast<size_t>(i)].target->labels = {i < 150 ? 0 : 1};
        std::vector<size_t> idx;
        for (size_t i = 0; i < skew.size(); ++i) idx.push_back(i);
        auto picked = subsample_labels(skew, idx, 0.1, 3);
        REQUIRE(picked.size() == 20);
        int c0 = 0;
        for (size_t i : picked) c0 += skew.observations[i].target->labels[0] == 0 ? 1 : 0;
        CHECK(c0 == 15);
    }
}
