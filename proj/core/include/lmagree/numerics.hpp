// Dense numerical kernel: matrix aliases over Eigen, stable softmax /
// cross-entropy, a platform-independent seeded RNG, and a central-difference
// gradient checker.

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>

namespace lmagree {

// Row-major storage so serialized parameter blocks match the documented
// on-disk layout without reshuffling.
template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

using Index = Eigen::Index;

template <class S>
Mat<S> matmul(const Mat<S>& a, const Mat<S>& b) {
    if (a.cols() != b.rows()) {
        throw std::invalid_argument(
            "matmul: dimension mismatch (" + std::to_string(a.rows()) + "x" +
            std::to_string(a.cols()) + " * " + std::to_string(b.rows()) + "x" +
            std::to_string(b.cols()) + ")");
    }
    return a * b;
}

template <class S>
bool all_finite(const Mat<S>& m) {
    return m.allFinite();
}

// Numerically stable softmax with max subtraction. Preserves the ordering of
// the input logits exactly.
template <class S>
Vec<S> softmax(const Vec<S>& logits) {
    if (logits.size() == 0) {
        throw std::invalid_argument("softmax: empty input");
    }
    const S m = logits.maxCoeff();
    Vec<S> p = (logits.array() - m).exp();
    p /= p.sum();
    return p;
}

// log(sum(exp(z))) computed with max subtraction.
template <class S>
S log_sum_exp(const Vec<S>& logits) {
    const S m = logits.maxCoeff();
    return m + std::log((logits.array() - m).exp().sum());
}

// -log softmax(logits)[target], evaluated in log space.
template <class S>
S cross_entropy(const Vec<S>& logits, Index target) {
    if (logits.size() == 0) {
        throw std::invalid_argument("cross_entropy: empty logits");
    }
    if (target < 0 || target >= logits.size()) {
        throw std::out_of_range("cross_entropy: target " + std::to_string(target) +
                                " out of range [0," + std::to_string(logits.size()) + ")");
    }
    return log_sum_exp(logits) - logits[target];
}

// SplitMix64. Published constants; the sequence for a given seed is identical
// on every platform, which is what makes per-seed training runs reproducible.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) with 53 random bits.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    bool bernoulli(double p) { return next_double() < p; }

    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

    template <class S>
    void fill_uniform(Mat<S>& m, double lo, double hi) {
        for (Index i = 0; i < m.rows(); ++i)
            for (Index j = 0; j < m.cols(); ++j)
                m(i, j) = static_cast<S>(uniform(lo, hi));
    }

    template <class S>
    void fill_uniform(Vec<S>& v, double lo, double hi) {
        for (Index i = 0; i < v.size(); ++i) v[i] = static_cast<S>(uniform(lo, hi));
    }

private:
    std::uint64_t state_;
};

// Central-difference check of an analytic gradient. Returns the maximum over
// all components of |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
// The loss difference is taken in f's own scalar type, so a callable that
// evaluates in extended precision keeps its extra digits where they matter:
// inside (f(x+eps) - f(x-eps)).
template <class F>
double finite_diff_check(F&& f, Vec<double> params, const Vec<double>& analytic,
                         double eps) {
    using R = decltype(f(std::as_const(params)));
    if (params.size() != analytic.size()) {
        throw std::invalid_argument("finite_diff_check: gradient size mismatch");
    }
    double worst = 0.0;
    for (Index i = 0; i < params.size(); ++i) {
        const double saved = params[i];
        params[i] = saved + eps;
        const R up = f(std::as_const(params));
        params[i] = saved - eps;
        const R down = f(std::as_const(params));
        params[i] = saved;
        const double numeric = static_cast<double>((up - down) / static_cast<R>(2.0 * eps));
        const double denom = std::max(1e-8, std::abs(analytic[i]) + std::abs(numeric));
        worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
    }
    return worst;
}

// Shortest decimal form that round-trips a double exactly.
inline std::string format_g17(double value) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    return buf;
}

}  // namespace lmagree
