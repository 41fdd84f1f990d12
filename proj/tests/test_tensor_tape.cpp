#include <doctest.h>

#include <cmath>

#include "itgpt/grad_check.hpp"
#include "itgpt/rng.hpp"
#include "itgpt/tape.hpp"
#include "itgpt/util.hpp"

using namespace itgpt;

namespace {

// scalar-loop matmul used as the oracle for the vectorized op
Tensor matmul_oracle(const Tensor& a, const Tensor& b) {
    Tensor out({a.extent(0), b.extent(1)});
    for (int i = 0; i < a.extent(0); ++i) {
        for (int j = 0; j < b.extent(1); ++j) {
            double acc = 0;
            for (int k = 0; k < a.extent(1); ++k) acc += a.at(i, k) * b.at(k, j);
            out.at(i, j) = acc;
        }
    }
    return out;
}

Tensor random_tensor(std::vector<int> shape, Rng& rng) {
    Tensor t(std::move(shape));
    for (size_t i = 0; i < t.numel(); ++i) t.data()[i] = rng.uniform(-1.0, 1.0);
    return t;
}

}  // namespace

TEST_CASE("matmul forward") {
    Tape tape;
    SUBCASE("identity times B is B") {
        Var identity = tape.input(Tensor::matrix(2, 2, {1, 0, 0, 1}));
        Var b = tape.input(Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6}));
        const Tensor& out = tape.value(matmul(identity, b));
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 3; ++j) CHECK(out.at(i, j) == tape.value(b).at(i, j));
    }
    SUBCASE("hand case matches the scalar oracle") {
        Tensor a = Tensor::matrix(2, 2, {1, 2, 3, 4});
        Tensor b = Tensor::matrix(2, 1, {1, 1});
        const Tensor& out = tape.value(matmul(tape.input(a), tape.input(b)));
        CHECK(out.at(0, 0) == 3.0);
        CHECK(out.at(1, 0) == 7.0);
        Tensor want = matmul_oracle(a, b);
        CHECK(out.at(0, 0) == want.at(0, 0));
        CHECK(out.at(1, 0) == want.at(1, 0));
    }
    SUBCASE("random instances match the scalar oracle") {
        Rng rng(7);
        for (int rep = 0; rep < 20; ++rep) {
            int m = 1 + static_cast<int>(rng.below(4));
            int k = 1 + static_cast<int>(rng.below(4));
            int n = 1 + static_cast<int>(rng.below(4));
            Tensor a = random_tensor({m, k}, rng);
            Tensor b = random_tensor({k, n}, rng);
            const Tensor& got = tape.value(matmul(tape.input(a), tape.input(b)));
            Tensor want = matmul_oracle(a, b);
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) CHECK(got.at(i, j) == doctest::Approx(want.at(i, j)).epsilon(1e-12));
        }
    }
    SUBCASE("shape mismatch names both shapes") {
        Var a = tape.input(Tensor::zeros({2, 3}));
        Var b = tape.input(Tensor::zeros({2, 3}));
        CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("[2x3]"), std::invalid_argument);
    }
}

TEST_CASE("matmul gradient matches central differences") {
    Rng rng(13);
    Tensor a = random_tensor({3, 2}, rng);
    Tensor b = random_tensor({2, 4}, rng);
    double err_a = grad_check(
        [&](Tape& t, Var x) { return sum_all(matmul(x, t.input(b))); }, a, 1e-5);
    double err_b = grad_check(
        [&](Tape& t, Var x) { return sum_all(matmul(t.input(a), x)); }, b, 1e-5);
    CHECK(err_a < 1e-6);
    CHECK(err_b < 1e-6);
}

TEST_CASE("elementwise ops") {
    Tape tape;
    SUBCASE("relu") {
        const Tensor& out = tape.value(relu(tape.input(Tensor({2}, {-1.0, 2.0}))));
        CHECK(out.at(0) == 0.0);
        CHECK(out.at(1) == 2.0);
    }
    SUBCASE("exp(0) is 1 with derivative 1") {
        Tape t2;
        Var x = t2.input(Tensor::scalar(0.0));
        Var y = exp(x);
        CHECK(t2.value(y).as_scalar() == 1.0);
        t2.backward(y);
        CHECK(t2.grad(x).as_scalar() == 1.0);
    }
    SUBCASE("ln1p fixed point at zero") {
        CHECK(tape.value(ln1p(tape.input(Tensor::scalar(0.0)))).as_scalar() == 0.0);
    }
    SUBCASE("scalar broadcast") {
        Var m = tape.input(Tensor::matrix(2, 2, {1, 2, 3, 4}));
        Var s = tape.input(Tensor::scalar(10.0));
        const Tensor& out = tape.value(mul(m, s));
        CHECK(out.at(1, 1) == 40.0);
        CHECK_THROWS_AS(add(m, tape.input(Tensor::zeros({3, 3}))), std::invalid_argument);
    }
    SUBCASE("non-finite forward is an error") {
        Var big = tape.input(Tensor::scalar(1e308));
        CHECK_THROWS_AS(exp(big), numeric_error);
        CHECK_THROWS_AS(mul(big, big), numeric_error);
    }
}

TEST_CASE("reductions") {
    Tape tape;
    SUBCASE("sum of a vector") {
        Var x = tape.input(Tensor({3}, {1, 2, 3}));
        CHECK(tape.value(reduce_sum(x, 0)).as_scalar() == 6.0);
    }
    SUBCASE("mean over axis 0 of ones") {
        Var x = tape.input(Tensor::full({4, 3}, 1.0));
        const Tensor& out = tape.value(reduce_mean(x, 0));
        REQUIRE(out.shape() == std::vector<int>{3});
        for (int i = 0; i < 3; ++i) CHECK(out.at(i) == 1.0);
    }
    SUBCASE("max backward routes only to the argmax") {
        Tape t2;
        Tensor x({4}, {0.3, -0.2, 0.9, 0.1});
        Var xv = t2.input(x);
        Var y = reduce_max(xv, 0);
        t2.backward(y);
        Tensor g = t2.grad(xv);
        CHECK(g.at(0) == 0.0);
        CHECK(g.at(2) == 1.0);
        double err = grad_check(
            [](Tape& t, Var v) { return reduce_max(v, 0); }, x, 1e-6);
        CHECK(err < 1e-6);
    }
    SUBCASE("empty reduction is an explicit error") {
        Var x = tape.input(Tensor::zeros({0, 3}));
        CHECK_THROWS_WITH_AS(reduce_sum(x, 0), doctest::Contains("empty reduction"),
                             std::invalid_argument);
    }
    SUBCASE("axis out of range") {
        Var x = tape.input(Tensor::zeros({2, 2}));
        CHECK_THROWS_AS(reduce_sum(x, 2), std::invalid_argument);
    }
}

TEST_CASE("masked softmax rows") {
    Tape tape;
    auto mask = std::make_shared<std::vector<uint8_t>>(std::vector<uint8_t>{1, 1, 0, 0, 0, 0});
    Var s = tape.input(Tensor::matrix(2, 3, {1.0, 1.0, 99.0, 5.0, 6.0, 7.0}));
    Var w = masked_softmax_rows(s, mask);
    const Tensor& out = tape.value(w);
    CHECK(out.at(0, 0) == doctest::Approx(0.5));
    CHECK(out.at(0, 1) == doctest::Approx(0.5));
    CHECK(out.at(0, 2) == 0.0);  // masked despite the huge score
    for (int j = 0; j < 3; ++j) CHECK(out.at(1, j) == 0.0);  // fully masked row

    SUBCASE("shift invariance") {
        Tape t2;
        Tensor base = Tensor::matrix(1, 3, {0.3, -0.4, 1.2});
        Tensor shifted = Tensor::matrix(1, 3, {0.3 + 17.0, -0.4 + 17.0, 1.2 + 17.0});
        const Tensor& a = t2.value(masked_softmax_rows(t2.input(base), nullptr));
        const Tensor& b = t2.value(masked_softmax_rows(t2.input(shifted), nullptr));
        for (int j = 0; j < 3; ++j) CHECK(std::abs(a.at(0, j) - b.at(0, j)) < 1e-12);
    }
    SUBCASE("gradient") {
        Rng rng(5);
        Tensor scores = random_tensor({3, 4}, rng);
        Tensor c = random_tensor({3, 4}, rng);
        auto m = std::make_shared<std::vector<uint8_t>>(12, 1);
        (*m)[3] = 0;
        (*m)[7] = 0;
        double err = grad_check(
            [&](Tape& t, Var v) { return sum_all(mul(masked_softmax_rows(v, m), t.input(c))); },
            scores, 1e-5);
        CHECK(err < 1e-7);
    }
}

TEST_CASE("grad_check on simple functions") {
    SUBCASE("f(x) = sum(x^2)") {
        Tensor x({2}, {1.0, 2.0});
        Tape tape;
        Var xv = tape.input(x);
        Var y = sum_all(mul(xv, xv));
        tape.backward(y);
        Tensor g = tape.grad(xv);
        CHECK(g.at(0) == doctest::Approx(2.0));
        CHECK(g.at(1) == doctest::Approx(4.0));
        double err = grad_check([](Tape&, Var v) { return sum_all(mul(v, v)); }, x, 1e-5);
        CHECK(err < 1e-6);
    }
    SUBCASE("constant function has exactly zero gradient") {
        Tensor x({3}, {1.0, -2.0, 0.5});
        Tape tape;
        Var xv = tape.input(x);
        Var c = tape.input(Tensor::scalar(3.0));
        Var y = sum_all(c);
        tape.backward(y);
        Tensor g = tape.grad(xv);
        for (int i = 0; i < 3; ++i) CHECK(g.at(i) == 0.0);
    }
    SUBCASE("non-scalar output is rejected") {
        CHECK_THROWS_AS(
            grad_check([](Tape&, Var v) { return mul(v, v); }, Tensor({2}, {1, 2}), 1e-5),
            std::invalid_argument);
    }
}

TEST_CASE("tape invariants") {
    SUBCASE("node ids are topological by construction") {
        Tape tape;
        Var a = tape.input(Tensor::scalar(1.0));
        Var b = tape.input(Tensor::scalar(2.0));
        Var c = add(a, b);
        Var d = mul(c, a);
        CHECK(a.id < c.id);
        CHECK(c.id < d.id);
    }
    SUBCASE("forward+backward reruns are bit-identical") {
        Rng rng(21);
        Tensor x = random_tensor({4, 3}, rng);
        Tensor w = random_tensor({3, 2}, rng);
        auto run = [&]() {
            Tape tape;
            Var xv = tape.input(x);
            Var y = sum_all(exp(scale(matmul(xv, tape.input(w)), 0.1)));
            tape.backward(y);
            return std::pair<double, Tensor>{tape.value(y).as_scalar(), tape.grad(xv)};
        };
        auto [v1, g1] = run();
        auto [v2, g2] = run();
        CHECK(v1 == v2);
        for (size_t i = 0; i < g1.numel(); ++i) CHECK(g1.data()[i] == g2.data()[i]);
    }
    SUBCASE("adjoint is linear: grad of f+g is grad f plus grad g") {
        Rng rng(22);
        Tensor x = random_tensor({3, 3}, rng);
        Tensor w = random_tensor({3, 3}, rng);
        auto grad_of = [&](int which) {
            Tape tape;
            Var xv = tape.input(x);
            Var f = sum_all(mul(xv, xv));
            Var g = sum_all(matmul(xv, tape.input(w)));
            Var root = which == 0 ? f : which == 1 ? g : add(f, g);
            tape.backward(root);
            return tape.grad(xv);
        };
        Tensor gf = grad_of(0), gg = grad_of(1), gsum = grad_of(2);
        for (size_t i = 0; i < gf.numel(); ++i) {
            CHECK(gsum.data()[i] == doctest::Approx(gf.data()[i] + gg.data()[i]).epsilon(1e-12));
        }
    }
}
