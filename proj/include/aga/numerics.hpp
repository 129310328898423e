#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>

#include "aga/error.hpp"
#include "aga/tensor.hpp"

namespace aga {

constexpr double kLogTwoPi = 1.8378770664093454836;

// Temperature softmax, shift-invariant (max subtracted before exponentiation).
inline Vec softmax(const Vec& v, double temperature = 1.0) {
    if (v.empty()) throw std::invalid_argument("softmax: empty input");
    if (!(temperature > 0.0)) throw std::invalid_argument("softmax: temperature must be > 0");
    for (double x : v)
        if (!std::isfinite(x)) throw std::invalid_argument("softmax: non-finite input");
    double maxv = *std::max_element(v.begin(), v.end());
    Vec out(v.size());
    double sum = 0.0;
    for (size_t i = 0; i < v.size(); ++i) {
        out[i] = std::exp((v[i] - maxv) / temperature);
        sum += out[i];
    }
    for (double& x : out) x /= sum;
    return out;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline Vec sigmoid(const Vec& v) {
    Vec out(v.size());
    for (size_t i = 0; i < v.size(); ++i) out[i] = sigmoid(v[i]);
    return out;
}

inline double softplus(double x) {
    // log(1 + e^x) without overflow for large |x|.
    return x > 30.0 ? x : std::log1p(std::exp(x));
}

inline double logsumexp(const double* v, int n) {
    double maxv = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) maxv = std::max(maxv, v[i]);
    if (!std::isfinite(maxv)) return maxv;  // all -inf (or a stray +inf/NaN)
    double sum = 0.0;
    for (int i = 0; i < n; ++i) sum += std::exp(v[i] - maxv);
    return maxv + std::log(sum);
}

inline double logsumexp(const Vec& v) { return logsumexp(v.data(), static_cast<int>(v.size())); }

// Central finite-difference check of an analytic gradient.
// Returns max_i |analytic_i - fd_i| / max(1, |fd_i|).
inline double grad_check(const std::function<double(const Vec&)>& f, const Vec& theta,
                         const Vec& analytic, double eps = 1e-5) {
    if (analytic.size() != theta.size())
        throw std::invalid_argument("grad_check: gradient length != parameter length");
    if (!(eps >= 1e-7 && eps <= 1e-3))
        throw std::invalid_argument("grad_check: eps outside [1e-7, 1e-3]");
    Vec probe = theta;
    double worst = 0.0;
    for (size_t i = 0; i < theta.size(); ++i) {
        probe[i] = theta[i] + eps;
        double fp = f(probe);
        probe[i] = theta[i] - eps;
        double fm = f(probe);
        probe[i] = theta[i];
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw NumericError("grad_check: non-finite objective at coordinate " +
                               std::to_string(i));
        double fd = (fp - fm) / (2.0 * eps);
        double err = std::fabs(analytic[i] - fd) / std::max(1.0, std::fabs(fd));
        worst = std::max(worst, err);
    }
    return worst;
}

}  // namespace aga
