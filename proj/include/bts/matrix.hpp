#pragma once

// Minimal dense linear algebra for the model: row-major matrices, two matmul
// kernels with a fixed (deterministic) accumulation order, softmax and
// cross-entropy, SGD with global-norm clipping, and a central-difference
// gradient oracle. Templated on the scalar type: training runs in float,
// gradient checking in double.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "bts/rand.hpp"

namespace bts {

template <class Real>
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<Real> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, Real(0)) {}

    Real& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    Real at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    Real* row(std::size_t r) { return data.data() + r * cols; }
    const Real* row(std::size_t r) const { return data.data() + r * cols; }
    std::size_t size() const { return data.size(); }

    void fill(Real v) { std::fill(data.begin(), data.end(), v); }

    bool finite() const {
        for (const Real v : data) {
            if (!std::isfinite(static_cast<double>(v))) return false;
        }
        return true;
    }
};

// Threads used by the matmul kernels. Row-partitioned, so the result is
// bitwise identical for any thread count.
inline int& matmul_threads() {
    static int n = 1;
    return n;
}

inline void set_matmul_threads(int n) {
    matmul_threads() = n < 1 ? 1 : n;
}

namespace detail {

template <class Real>
void mm_nn_rows(Matrix<Real>& c, const Matrix<Real>& a, const Matrix<Real>& b,
                std::size_t i0, std::size_t i1) {
    const std::size_t k = a.cols, n = b.cols;
    std::size_t i = i0;
    for (; i + 4 <= i1; i += 4) {
        Real* c0 = c.row(i);
        Real* c1 = c.row(i + 1);
        Real* c2 = c.row(i + 2);
        Real* c3 = c.row(i + 3);
        for (std::size_t p = 0; p < k; ++p) {
            const Real* bp = b.row(p);
            const Real a0 = a.at(i, p), a1 = a.at(i + 1, p);
            const Real a2 = a.at(i + 2, p), a3 = a.at(i + 3, p);
            for (std::size_t j = 0; j < n; ++j) {
                const Real bj = bp[j];
                c0[j] += a0 * bj;
                c1[j] += a1 * bj;
                c2[j] += a2 * bj;
                c3[j] += a3 * bj;
            }
        }
    }
    for (; i < i1; ++i) {
        Real* ci = c.row(i);
        for (std::size_t p = 0; p < k; ++p) {
            const Real* bp = b.row(p);
            const Real ai = a.at(i, p);
            for (std::size_t j = 0; j < n; ++j) ci[j] += ai * bp[j];
        }
    }
}

template <class Real>
void mm_tn_rows(Matrix<Real>& c, const Matrix<Real>& a, const Matrix<Real>& b,
                std::size_t i0, std::size_t i1) {
    const std::size_t k = a.rows, n = b.cols;
    std::size_t i = i0;
    for (; i + 4 <= i1; i += 4) {
        Real* c0 = c.row(i);
        Real* c1 = c.row(i + 1);
        Real* c2 = c.row(i + 2);
        Real* c3 = c.row(i + 3);
        for (std::size_t p = 0; p < k; ++p) {
            const Real* ap = a.row(p) + i;
            const Real* bp = b.row(p);
            const Real a0 = ap[0], a1 = ap[1], a2 = ap[2], a3 = ap[3];
            for (std::size_t j = 0; j < n; ++j) {
                const Real bj = bp[j];
                c0[j] += a0 * bj;
                c1[j] += a1 * bj;
                c2[j] += a2 * bj;
                c3[j] += a3 * bj;
            }
        }
    }
    for (; i < i1; ++i) {
        Real* ci = c.row(i);
        for (std::size_t p = 0; p < k; ++p) {
            const Real ai = a.at(p, i);
            const Real* bp = b.row(p);
            for (std::size_t j = 0; j < n; ++j) ci[j] += ai * bp[j];
        }
    }
}

template <class Real, class RowFn>
void mm_dispatch(Matrix<Real>& c, RowFn fn) {
    const int nt = matmul_threads();
    const std::size_t m = c.rows;
    if (nt <= 1 || m < 8 || c.size() < 16384) {
        fn(std::size_t(0), m);
        return;
    }
    const std::size_t per = (m + nt - 1) / nt;
    std::vector<std::thread> pool;
    for (int t = 1; t < nt; ++t) {
        const std::size_t lo = per * t;
        if (lo >= m) break;
        pool.emplace_back(fn, lo, std::min(m, lo + per));
    }
    fn(std::size_t(0), std::min(m, per));
    for (auto& th : pool) th.join();
}

}  // namespace detail

// C += A * B
template <class Real>
void matmul_nn_accum(Matrix<Real>& c, const Matrix<Real>& a, const Matrix<Real>& b) {
    if (a.cols != b.rows || c.rows != a.rows || c.cols != b.cols)
        throw std::invalid_argument("matmul_nn_accum: dimension mismatch");
    detail::mm_dispatch(c, [&](std::size_t i0, std::size_t i1) {
        detail::mm_nn_rows(c, a, b, i0, i1);
    });
}

// C += A^T * B  (A is k x m, B is k x n, C is m x n)
template <class Real>
void matmul_tn_accum(Matrix<Real>& c, const Matrix<Real>& a, const Matrix<Real>& b) {
    if (a.rows != b.rows || c.rows != a.cols || c.cols != b.cols)
        throw std::invalid_argument("matmul_tn_accum: dimension mismatch");
    detail::mm_dispatch(c, [&](std::size_t i0, std::size_t i1) {
        detail::mm_tn_rows(c, a, b, i0, i1);
    });
}

template <class Real>
Matrix<Real> transpose(const Matrix<Real>& a) {
    Matrix<Real> t(a.cols, a.rows);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j) t.at(j, i) = a.at(i, j);
    return t;
}

// y = W x + b
template <class Real>
std::vector<Real> affine(std::span<const Real> x, const Matrix<Real>& w,
                         std::span<const Real> b) {
    if (x.size() != w.cols || b.size() != w.rows)
        throw std::invalid_argument("affine: dimension mismatch");
    std::vector<Real> y(w.rows);
    for (std::size_t i = 0; i < w.rows; ++i) {
        const Real* wi = w.row(i);
        Real acc = b[i];
        for (std::size_t j = 0; j < w.cols; ++j) acc += wi[j] * x[j];
        y[i] = acc;
    }
    return y;
}

// Max-subtracted softmax. Never produces NaN for finite input.
template <class Real>
std::vector<Real> softmax(std::span<const Real> logits) {
    if (logits.empty()) throw std::invalid_argument("softmax: empty input");
    Real m = logits[0];
    for (const Real v : logits) m = std::max(m, v);
    std::vector<Real> p(logits.size());
    Real sum = 0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - m);
        sum += p[i];
    }
    const Real inv = Real(1) / sum;
    for (Real& v : p) v *= inv;
    return p;
}

// log(sum(exp(logits))), max-subtracted. -logit[t] + log_sum_exp(logits) is
// the stable form of cross_entropy(softmax(logits), t).
template <class Real>
Real log_sum_exp(std::span<const Real> logits) {
    Real m = logits[0];
    for (const Real v : logits) m = std::max(m, v);
    Real sum = 0;
    for (const Real v : logits) sum += std::exp(v - m);
    return m + std::log(sum);
}

template <class Real>
Real cross_entropy(std::span<const Real> dist, std::size_t target) {
    if (target >= dist.size()) throw std::out_of_range("cross_entropy: target out of range");
    return -std::log(dist[target]);
}

// Named parameter matrices plus same-shape gradients, in declaration order.
template <class Real>
struct ParamStore {
    struct Entry {
        std::string name;
        Matrix<Real> value;
        Matrix<Real> grad;
    };
    std::vector<Entry> entries;

    Matrix<Real>& add(const std::string& name, std::size_t rows, std::size_t cols) {
        for (const auto& e : entries)
            if (e.name == name) throw std::invalid_argument("ParamStore: duplicate name " + name);
        entries.push_back({name, Matrix<Real>(rows, cols), Matrix<Real>(rows, cols)});
        return entries.back().value;
    }

    Entry& find(const std::string& name) {
        for (auto& e : entries)
            if (e.name == name) return e;
        throw std::invalid_argument("ParamStore: unknown name " + name);
    }
    const Entry& find(const std::string& name) const {
        for (const auto& e : entries)
            if (e.name == name) return e;
        throw std::invalid_argument("ParamStore: unknown name " + name);
    }

    std::size_t param_count() const {
        std::size_t n = 0;
        for (const auto& e : entries) n += e.value.size();
        return n;
    }

    void zero_grads() {
        for (auto& e : entries) e.grad.fill(Real(0));
    }
};

// Global L2 norm over all gradients, accumulated in double.
template <class Real>
double grad_norm(const ParamStore<Real>& store) {
    double ss = 0;
    for (const auto& e : store.entries) {
        double s = 0;
        for (const Real g : e.grad.data) s += static_cast<double>(g) * static_cast<double>(g);
        if (!std::isfinite(s))
            throw std::runtime_error("non-finite gradient in parameter " + e.name);
        ss += s;
    }
    return std::sqrt(ss);
}

// Scales all gradients so their global norm is at most clip_norm.
// Returns the pre-clip norm.
template <class Real>
double clip_gradients(ParamStore<Real>& store, double clip_norm) {
    const double norm = grad_norm(store);
    if (norm > clip_norm && norm > 0) {
        const Real scale = static_cast<Real>(clip_norm / norm);
        for (auto& e : store.entries)
            for (Real& g : e.grad.data) g *= scale;
    }
    return norm;
}

template <class Real>
void sgd_step(ParamStore<Real>& store, double lr) {
    const Real r = static_cast<Real>(lr);
    for (auto& e : store.entries) {
        Real* p = e.value.data.data();
        const Real* g = e.grad.data.data();
        for (std::size_t i = 0; i < e.value.size(); ++i) p[i] -= r * g[i];
    }
}

// Clip, apply p <- p - lr * grad, zero the gradients. Returns pre-clip norm.
template <class Real>
double clip_and_step(ParamStore<Real>& store, double lr, double clip_norm) {
    const double norm = clip_gradients(store, clip_norm);
    sgd_step(store, lr);
    store.zero_grads();
    return norm;
}

// Central-difference gradient estimate, written into a parallel store of
// matrices. loss_fn must be deterministic; meant for double-precision runs.
template <class Real, class LossFn>
std::vector<Matrix<Real>> finite_difference_grad(LossFn&& loss_fn, ParamStore<Real>& store,
                                                 Real eps) {
    std::vector<Matrix<Real>> out;
    out.reserve(store.entries.size());
    for (auto& e : store.entries) {
        Matrix<Real> g(e.value.rows, e.value.cols);
        for (std::size_t i = 0; i < e.value.size(); ++i) {
            const Real saved = e.value.data[i];
            e.value.data[i] = saved + eps;
            const Real up = loss_fn(store);
            e.value.data[i] = saved - eps;
            const Real down = loss_fn(store);
            e.value.data[i] = saved;
            g.data[i] = (up - down) / (Real(2) * eps);
        }
        out.push_back(std::move(g));
    }
    return out;
}

}  // namespace bts
