#pragma once

#include <cmath>
#include <vector>

#include "aga/error.hpp"
#include "aga/tensor.hpp"

namespace aga {

// Learnable two-channel filter bank. The highpass is always derived from the
// lowpass by the quadrature-mirror relation g[n] = (-1)^n h[L-1-n], so the
// pair stays a valid analysis bank after every optimizer step; closeness to
// orthonormality (||h|| = 1, sum g = 0) is encouraged by a soft penalty on
// the training loss rather than enforced here.
struct WaveletParams {
    Tensor lowpass;           // 1 x L, L even
    int levels = 3;
    double norm_penalty = 1e-3;

    static WaveletParams haar(int levels = 3) {
        WaveletParams p;
        const double r = 1.0 / std::sqrt(2.0);
        p.lowpass = Tensor(1, 2, {r, r});
        p.levels = levels;
        return p;
    }

    static WaveletParams daubechies4(int levels = 3) {
        WaveletParams p;
        const double s3 = std::sqrt(3.0);
        const double n = 4.0 * std::sqrt(2.0);
        p.lowpass = Tensor(1, 4, {(1 + s3) / n, (3 + s3) / n, (3 - s3) / n, (1 - s3) / n});
        p.levels = levels;
        return p;
    }
};

inline Vec qmf_highpass(const Vec& h) {
    const int L = static_cast<int>(h.size());
    Vec g(h.size());
    for (int n = 0; n < L; ++n) g[n] = (n % 2 == 0 ? 1.0 : -1.0) * h[L - 1 - n];
    return g;
}

struct DwtCoeffs {
    Vec approx;                 // deepest-level approximation
    std::vector<Vec> details;   // details per level, index 0 = finest
};

namespace detail {

// One analysis level with circular extension. Coefficient j is aligned so
// that for L = 2 it covers exactly the pair (x[2j], x[2j+1]); longer filters
// reach L - 2 samples into the past (wrapping at the window edge).
inline void dwt_level(const Vec& x, const Vec& h, const Vec& g, Vec& a, Vec& d) {
    const int n = static_cast<int>(x.size());
    const int L = static_cast<int>(h.size());
    const int half = n / 2;
    a.assign(static_cast<size_t>(half), 0.0);
    d.assign(static_cast<size_t>(half), 0.0);
    for (int j = 0; j < half; ++j) {
        double av = 0.0, dv = 0.0;
        for (int t = 0; t < L; ++t) {
            int idx = 2 * j + t - (L - 2);
            idx %= n;
            if (idx < 0) idx += n;
            av += h[t] * x[idx];
            dv += g[t] * x[idx];
        }
        a[j] = av;
        d[j] = dv;
    }
}

}  // namespace detail

// Multi-level analysis. Window length must be divisible by 2^levels; shorter
// windows are left-padded by reflection first.
inline DwtCoeffs learnable_dwt(const Vec& window, const WaveletParams& p) {
    const int L = p.lowpass.cols;
    if (L < 2 || L % 2 != 0) throw std::invalid_argument("learnable_dwt: filter length must be even and >= 2");
    if (p.levels < 1) throw std::invalid_argument("learnable_dwt: levels must be >= 1");
    if (window.size() < static_cast<size_t>(L))
        throw std::invalid_argument("learnable_dwt: filter longer than window");

    Vec x = window;
    const size_t unit = static_cast<size_t>(1) << p.levels;
    if (x.size() % unit != 0) {
        size_t target = ((x.size() + unit - 1) / unit) * unit;
        size_t pad = target - x.size();
        Vec padded;
        padded.reserve(target);
        for (size_t i = 0; i < pad; ++i)
            padded.push_back(window[std::min(pad - i, window.size() - 1)]);
        padded.insert(padded.end(), window.begin(), window.end());
        x = std::move(padded);
    }

    const Vec h(p.lowpass.data);
    const Vec g = qmf_highpass(h);
    DwtCoeffs out;
    for (int lev = 0; lev < p.levels; ++lev) {
        Vec a, d;
        detail::dwt_level(x, h, g, a, d);
        out.details.push_back(std::move(d));
        x = std::move(a);
    }
    out.approx = std::move(x);
    return out;
}

inline double signal_energy(const Vec& v) {
    double e = 0.0;
    for (double x : v) e += x * x;
    return e;
}

inline double coeff_energy(const DwtCoeffs& c) {
    double e = signal_energy(c.approx);
    for (const Vec& d : c.details) e += signal_energy(d);
    return e;
}

}  // namespace aga
