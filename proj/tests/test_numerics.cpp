#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "bts/matrix.hpp"
#include "bts/rand.hpp"

using namespace bts;

namespace {

// Scalar triple-loop oracle for W x + b, independent of the library kernels.
std::vector<double> affine_oracle(const std::vector<double>& x, const Matrix<double>& w,
                                  const std::vector<double>& b) {
    std::vector<double> y(w.rows, 0.0);
    for (std::size_t i = 0; i < w.rows; ++i) {
        y[i] = b[i];
        for (std::size_t j = 0; j < w.cols; ++j) y[i] += w.at(i, j) * x[j];
    }
    return y;
}

// Naive 64-bit exp/sum softmax, no max subtraction.
std::vector<double> softmax_oracle(const std::vector<double>& v) {
    std::vector<double> p(v.size());
    double s = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        p[i] = std::exp(v[i]);
        s += p[i];
    }
    for (double& x : p) x /= s;
    return p;
}

Matrix<double> random_matrix(std::size_t r, std::size_t c, Rng& rng) {
    Matrix<double> m(r, c);
    for (double& v : m.data) v = uniform_real(rng, -1.0, 1.0);
    return m;
}

}  // namespace

TEST_CASE("affine identity and hand-computed cases") {
    Matrix<float> id(2, 2);
    id.at(0, 0) = 1;
    id.at(1, 1) = 1;
    std::vector<float> x{1, 0}, b{0, 0};
    auto y = affine<float>(x, id, b);
    CHECK(y[0] == doctest::Approx(1));
    CHECK(y[1] == doctest::Approx(0));

    Matrix<float> w(2, 2);
    w.at(0, 0) = 1;
    w.at(0, 1) = 1;
    w.at(1, 0) = 0;
    w.at(1, 1) = 1;
    std::vector<float> x2{1, 2}, b2{1, 0};
    auto y2 = affine<float>(x2, w, b2);
    CHECK(y2[0] == doctest::Approx(4));
    CHECK(y2[1] == doctest::Approx(2));
}

TEST_CASE("affine dimension mismatch is a hard error") {
    Matrix<float> w(2, 3);
    std::vector<float> x{1, 2}, b{0, 0};
    CHECK_THROWS(affine<float>(x, w, b));
}

TEST_CASE("affine matches scalar-loop oracle on random inputs up to dim 64") {
    Rng rng(7);
    for (std::size_t dim : {5u, 13u, 32u, 64u}) {
        for (int rep = 0; rep < 10; ++rep) {
            auto w = random_matrix(dim, dim, rng);
            std::vector<double> x(dim), b(dim);
            for (auto& v : x) v = uniform_real(rng, -2, 2);
            for (auto& v : b) v = uniform_real(rng, -2, 2);
            auto got = affine<double>(x, w, b);
            auto want = affine_oracle(x, w, b);
            for (std::size_t i = 0; i < dim; ++i)
                CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-6));
        }
    }
}

TEST_CASE("matmul kernels match the scalar oracle and all thread counts agree") {
    Rng rng(21);
    for (int rep = 0; rep < 6; ++rep) {
        const std::size_t m = 1 + uniform_below(rng, 40);
        const std::size_t k = 1 + uniform_below(rng, 40);
        const std::size_t n = 1 + uniform_below(rng, 40);
        auto a = random_matrix(m, k, rng);
        auto b = random_matrix(k, n, rng);
        Matrix<double> want(m, n);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p)
                for (std::size_t j = 0; j < n; ++j) want.at(i, j) += a.at(i, p) * b.at(p, j);

        Matrix<double> c1(m, n);
        matmul_nn_accum(c1, a, b);
        Matrix<double> c2(m, n);
        auto at = transpose(a);
        matmul_tn_accum(c2, at, b);
        for (std::size_t i = 0; i < want.size(); ++i) {
            CHECK(c1.data[i] == doctest::Approx(want.data[i]).epsilon(1e-9));
            CHECK(c2.data[i] == doctest::Approx(want.data[i]).epsilon(1e-9));
        }
    }

    // Determinism across thread counts must be bitwise.
    auto a = random_matrix(64, 64, rng);
    auto b = random_matrix(64, 64, rng);
    Matrix<double> c_single(64, 64);
    matmul_nn_accum(c_single, a, b);
    set_matmul_threads(2);
    Matrix<double> c_multi(64, 64);
    matmul_nn_accum(c_multi, a, b);
    set_matmul_threads(1);
    CHECK(c_single.data == c_multi.data);
}

TEST_CASE("softmax symmetry and stability") {
    std::vector<float> z{0, 0, 0};
    auto p = softmax<float>(z);
    for (float v : p) CHECK(v == doctest::Approx(1.0f / 3.0f));

    std::vector<float> big{1000, 0};
    auto pb = softmax<float>(big);
    CHECK(pb[0] == doctest::Approx(1.0f));
    CHECK(pb[1] == doctest::Approx(0.0f));
    for (float v : pb) CHECK(std::isfinite(v));

    CHECK_THROWS(softmax<float>(std::span<const float>{}));
}

TEST_CASE("softmax matches 64-bit naive oracle on random length-7 logits") {
    Rng rng(3);
    for (int rep = 0; rep < 50; ++rep) {
        std::vector<double> z(7);
        for (auto& v : z) v = uniform_real(rng, -5, 5);
        auto got = softmax<double>(z);
        auto want = softmax_oracle(z);
        for (std::size_t i = 0; i < z.size(); ++i)
            CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-6));
    }
}

TEST_CASE("softmax sums to one and stays finite across extreme magnitudes") {
    Rng rng(11);
    for (int rep = 0; rep < 200; ++rep) {
        const std::size_t n = 1 + uniform_below(rng, 12);
        std::vector<double> z(n);
        for (auto& v : z) v = uniform_real(rng, -1e4, 1e4);
        auto p = softmax<double>(z);
        double s = 0;
        for (double v : p) {
            CHECK(std::isfinite(v));
            CHECK(v >= 0);
            s += v;
        }
        CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("cross entropy basics and oracle") {
    std::vector<float> sure{1.0f, 0.0f, 0.0f};
    CHECK(cross_entropy<float>(sure, 0) == doctest::Approx(0.0f));

    std::vector<float> half{0.5f, 0.5f};
    CHECK(cross_entropy<float>(half, 1) == doctest::Approx(std::log(2.0f)));

    CHECK_THROWS(cross_entropy<float>(half, 2));

    Rng rng(5);
    for (int rep = 0; rep < 50; ++rep) {
        const std::size_t n = 2 + uniform_below(rng, 8);
        std::vector<double> z(n);
        for (auto& v : z) v = uniform_real(rng, -3, 3);
        auto d = softmax<double>(z);
        const std::size_t t = uniform_below(rng, static_cast<std::uint32_t>(n));
        CHECK(cross_entropy<double>(d, t) == doctest::Approx(-std::log(d[t])).epsilon(1e-6));
        // log_sum_exp route must agree with the distribution route.
        CHECK(log_sum_exp<double>(z) - z[t] ==
              doctest::Approx(cross_entropy<double>(d, t)).epsilon(1e-9));
    }
}

TEST_CASE("clip_and_step hand cases") {
    ParamStore<float> store;
    store.add("p", 1, 2);
    store.find("p").grad.at(0, 0) = 3;
    store.find("p").grad.at(0, 1) = 4;
    clip_and_step(store, 1.0, 10.0);  // norm 5 < 10, no clipping
    CHECK(store.find("p").value.at(0, 0) == doctest::Approx(-3));
    CHECK(store.find("p").value.at(0, 1) == doctest::Approx(-4));
    CHECK(store.find("p").grad.at(0, 0) == 0);

    ParamStore<float> s2;
    s2.add("p", 1, 2);
    s2.find("p").grad.at(0, 0) = 3;
    s2.find("p").grad.at(0, 1) = 4;
    clip_and_step(s2, 1.0, 1.0);  // scaled by 1/5
    CHECK(s2.find("p").value.at(0, 0) == doctest::Approx(-0.6f));
    CHECK(s2.find("p").value.at(0, 1) == doctest::Approx(-0.8f));
}

TEST_CASE("global norm matches flatten-and-norm oracle over a multi-matrix store") {
    Rng rng(17);
    ParamStore<double> store;
    store.add("a", 3, 4);
    store.add("b", 7, 2);
    store.add("c", 1, 9);
    std::vector<double> flat;
    for (auto& e : store.entries) {
        for (double& g : e.grad.data) {
            g = uniform_real(rng, -2, 2);
            flat.push_back(g);
        }
    }
    double ss = 0;
    for (double g : flat) ss += g * g;
    CHECK(grad_norm(store) == doctest::Approx(std::sqrt(ss)).epsilon(1e-6));

    // Post-clip norm never exceeds the bound.
    for (double bound : {0.5, 2.0, 100.0}) {
        ParamStore<double> s;
        s.add("m", 5, 5);
        for (double& g : s.find("m").grad.data) g = uniform_real(rng, -3, 3);
        clip_gradients(s, bound);
        CHECK(grad_norm(s) <= bound * (1 + 1e-9));
    }
}

TEST_CASE("clip_and_step rejects non-finite gradients naming the parameter") {
    ParamStore<float> store;
    store.add("fine", 1, 1);
    store.add("broken", 1, 1);
    store.find("broken").grad.at(0, 0) = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_WITH_AS(clip_and_step(store, 0.1, 5.0),
                         doctest::Contains("broken"), std::runtime_error);
}

TEST_CASE("finite differences: analytic cases") {
    ParamStore<double> store;
    store.add("p", 1, 1).at(0, 0) = 3.0;

    auto square = [](ParamStore<double>& s) {
        const double p = s.find("p").value.at(0, 0);
        return p * p;
    };
    auto g = finite_difference_grad(square, store, 1e-5);
    CHECK(g[0].at(0, 0) == doctest::Approx(6.0).epsilon(1e-5));

    auto constant = [](ParamStore<double>&) { return 42.0; };
    auto gz = finite_difference_grad(constant, store, 1e-5);
    CHECK(gz[0].at(0, 0) == 0.0);
}
