#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "aga/data.hpp"
#include "aga/error.hpp"
#include "aga/model.hpp"
#include "aga/predictor.hpp"
#include "aga/tensor.hpp"

#ifdef __linux__
#include <pthread.h>
#include <sched.h>
#endif

namespace aga {

// Rows index truth, columns predictions.
struct ConfusionMatrix {
    int classes = 0;
    std::vector<int64_t> counts;

    explicit ConfusionMatrix(int k = 3) : classes(k), counts(static_cast<size_t>(k) * k, 0) {}
    int64_t& at(int truth, int pred) { return counts[static_cast<size_t>(truth) * classes + pred]; }
    int64_t at(int truth, int pred) const { return counts[static_cast<size_t>(truth) * classes + pred]; }
    void add(int truth, int pred) {
        if (truth < 0 || truth >= classes || pred < 0 || pred >= classes)
            throw std::invalid_argument("ConfusionMatrix: class out of range");
        ++at(truth, pred);
    }
    int64_t total() const { return std::accumulate(counts.begin(), counts.end(), int64_t{0}); }
    int64_t trace() const {
        int64_t t = 0;
        for (int i = 0; i < classes; ++i) t += at(i, i);
        return t;
    }
};

inline double accuracy(const ConfusionMatrix& cm) {
    int64_t n = cm.total();
    return n == 0 ? 0.0 : static_cast<double>(cm.trace()) / static_cast<double>(n);
}

// Generalized multiclass MCC over the confusion matrix. Any zero factor in
// the denominator yields 0 by convention.
inline double mcc(const ConfusionMatrix& cm) {
    if (cm.total() == 0) throw std::invalid_argument("mcc: empty confusion matrix");
    const double s = static_cast<double>(cm.total());
    const double c = static_cast<double>(cm.trace());
    double pt = 0.0, pp = 0.0, tt = 0.0;
    for (int k = 0; k < cm.classes; ++k) {
        double t = 0.0, p = 0.0;
        for (int j = 0; j < cm.classes; ++j) {
            t += static_cast<double>(cm.at(k, j));
            p += static_cast<double>(cm.at(j, k));
        }
        pt += p * t;
        pp += p * p;
        tt += t * t;
    }
    double num = c * s - pt;
    double dx = s * s - pp;
    double dy = s * s - tt;
    if (dx <= 0.0 || dy <= 0.0) return 0.0;
    return num / (std::sqrt(dx) * std::sqrt(dy));
}

namespace detail {

inline double macro_f1_mapped(const std::vector<int>& decoded, const std::vector<int>& truth,
                              const std::vector<int>& map, int truth_classes) {
    std::vector<int64_t> tp(static_cast<size_t>(truth_classes), 0);
    std::vector<int64_t> fp(static_cast<size_t>(truth_classes), 0);
    std::vector<int64_t> fn(static_cast<size_t>(truth_classes), 0);
    std::vector<int64_t> support(static_cast<size_t>(truth_classes), 0);
    for (size_t i = 0; i < decoded.size(); ++i) {
        int p = map[static_cast<size_t>(decoded[i])];
        int t = truth[i];
        ++support[static_cast<size_t>(t)];
        if (p == t)
            ++tp[static_cast<size_t>(t)];
        else {
            if (p >= 0 && p < truth_classes) ++fp[static_cast<size_t>(p)];
            ++fn[static_cast<size_t>(t)];
        }
    }
    double sum = 0.0;
    int counted = 0;
    for (int c = 0; c < truth_classes; ++c) {
        if (support[static_cast<size_t>(c)] == 0) continue;
        double denom_p = static_cast<double>(tp[static_cast<size_t>(c)] + fp[static_cast<size_t>(c)]);
        double denom_r = static_cast<double>(tp[static_cast<size_t>(c)] + fn[static_cast<size_t>(c)]);
        double prec = denom_p > 0.0 ? tp[static_cast<size_t>(c)] / denom_p : 0.0;
        double rec = denom_r > 0.0 ? tp[static_cast<size_t>(c)] / denom_r : 0.0;
        sum += (prec + rec) > 0.0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
        ++counted;
    }
    return counted > 0 ? sum / counted : 0.0;
}

}  // namespace detail

struct RegimeF1 {
    double f1 = 0.0;
    std::vector<int> mapping;  // decoded label -> truth label
};

// Macro F1 after label alignment. Equal label-space sizes search exhaustive
// permutations (the decoded state identities are arbitrary); a larger
// decoded space searches every map onto the truth labels so split regimes
// are not penalized by identity choice.
inline RegimeF1 regime_f1(const std::vector<int>& decoded, const std::vector<int>& truth, int k) {
    if (decoded.size() != truth.size())
        throw std::invalid_argument("regime_f1: length mismatch");
    if (decoded.empty()) throw std::invalid_argument("regime_f1: empty input");
    if (k < 1 || k > 6) throw std::invalid_argument("regime_f1: k must be in [1, 6]");
    int truth_classes = 0;
    for (int t : truth) {
        if (t < 0) throw std::invalid_argument("regime_f1: negative truth label");
        truth_classes = std::max(truth_classes, t + 1);
    }
    for (int d : decoded)
        if (d < 0 || d >= k) throw std::invalid_argument("regime_f1: decoded label out of range");
    truth_classes = std::max(truth_classes, 1);

    RegimeF1 best;
    best.f1 = -1.0;
    if (truth_classes == k) {
        std::vector<int> perm(static_cast<size_t>(k));
        for (int i = 0; i < k; ++i) perm[static_cast<size_t>(i)] = i;
        do {
            double f = detail::macro_f1_mapped(decoded, truth, perm, truth_classes);
            if (f > best.f1) {
                best.f1 = f;
                best.mapping = perm;
            }
        } while (std::next_permutation(perm.begin(), perm.end()));
    } else {
        // exhaustive decoded->truth maps (k^truth... truth_classes^k options)
        std::vector<int> map(static_cast<size_t>(k), 0);
        long options = 1;
        for (int i = 0; i < k; ++i) options *= truth_classes;
        for (long code = 0; code < options; ++code) {
            long c = code;
            for (int i = 0; i < k; ++i) {
                map[static_cast<size_t>(i)] = static_cast<int>(c % truth_classes);
                c /= truth_classes;
            }
            double f = detail::macro_f1_mapped(decoded, truth, map, truth_classes);
            if (f > best.f1) {
                best.f1 = f;
                best.mapping = map;
            }
        }
    }
    return best;
}

struct TradeSimConfig {
    double fee_bps = 1.0;          // per unit of position change
    double annualization = 1.0;    // reported alongside, not applied
};

struct TradeSimResult {
    double sharpe = 0.0;
    Vec returns;   // per-step strategy returns
    Vec pnl;       // cumulative sum of returns
};

// Long on up, short on down, flat on neutral. Return at step t covers the
// move from mid[t] to mid[t+1] minus fees on position changes; Sharpe is
// mean/std of per-step returns (population std, 0 when variance is 0).
inline TradeSimResult sharpe_sim(const std::vector<int>& predictions, const Vec& mids,
                                 const TradeSimConfig& cfg) {
    if (cfg.fee_bps < 0.0) throw std::invalid_argument("sharpe_sim: negative fee");
    if (predictions.size() + 1 != mids.size() && predictions.size() != mids.size())
        throw std::invalid_argument("sharpe_sim: need one mid per prediction plus the next price");
    const size_t steps = mids.size() - 1;
    TradeSimResult out;
    out.returns.reserve(steps);
    double prev_pos = 0.0;
    double cum = 0.0;
    const double fee = cfg.fee_bps * 1e-4;
    for (size_t t = 0; t < steps; ++t) {
        double pos = predictions[t] == kUp ? 1.0 : (predictions[t] == kDown ? -1.0 : 0.0);
        double ret = pos * (mids[t + 1] - mids[t]) / mids[t] - fee * std::fabs(pos - prev_pos);
        prev_pos = pos;
        out.returns.push_back(ret);
        cum += ret;
        out.pnl.push_back(cum);
    }
    double mean = 0.0;
    for (double r : out.returns) mean += r;
    mean /= std::max<size_t>(1, out.returns.size());
    double var = 0.0;
    for (double r : out.returns) var += (r - mean) * (r - mean);
    var /= std::max<size_t>(1, out.returns.size());
    out.sharpe = var > 0.0 ? mean / std::sqrt(var) : 0.0;
    return out;
}

inline double percentile(Vec values, double q) {
    if (values.empty()) throw std::invalid_argument("percentile: empty");
    std::sort(values.begin(), values.end());
    double idx = q * static_cast<double>(values.size() - 1);
    size_t lo = static_cast<size_t>(idx);
    size_t hi = std::min(values.size() - 1, lo + 1);
    double frac = idx - static_cast<double>(lo);
    return values[lo] * (1.0 - frac) + values[hi] * frac;
}

struct LatencyReport {
    double p50_ms = 0.0;
    double p99_ms = 0.0;
    size_t steps = 0;
};

// Times the full per-step serving path (signals -> encoders -> context ->
// filtered update -> class) on a single pinned thread. Warm-up steps are
// excluded from the sample.
inline LatencyReport latency_p99(const Model& model, const std::vector<FeatureFrame>& frames,
                                 size_t max_steps = 10000) {
#ifdef __linux__
    cpu_set_t set;
    CPU_ZERO(&set);
    CPU_SET(0, &set);
    pthread_setaffinity_np(pthread_self(), sizeof(set), &set);
#endif
    StreamingPredictor pred(model, dataset_dt_sec(frames));
    pred.reserve(frames.size());
    const size_t warm = static_cast<size_t>(model.cfg.warmup());
    Vec samples;
    samples.reserve(std::min(frames.size(), max_steps));
    for (size_t t = 0; t < frames.size() && samples.size() < max_steps; ++t) {
        auto t0 = std::chrono::steady_clock::now();
        StreamingPredictor::Output o = pred.step(frames[t]);
        auto t1 = std::chrono::steady_clock::now();
        (void)o;
        if (t >= warm) samples.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    if (samples.empty()) throw std::invalid_argument("latency_p99: no post-warm-up steps");
    LatencyReport r;
    r.p50_ms = percentile(samples, 0.50);
    r.p99_ms = percentile(samples, 0.99);
    r.steps = samples.size();
    return r;
}

// Spearman rank correlation with average ranks for ties.
inline double spearman(const Vec& x, const Vec& y) {
    if (x.size() != y.size() || x.size() < 2)
        throw std::invalid_argument("spearman: need two equal-length series");
    auto ranks = [](const Vec& v) {
        std::vector<size_t> idx(v.size());
        std::iota(idx.begin(), idx.end(), size_t{0});
        std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
        Vec r(v.size());
        size_t i = 0;
        while (i < idx.size()) {
            size_t j = i;
            while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
            double avg = 0.5 * static_cast<double>(i + j) + 1.0;
            for (size_t t = i; t <= j; ++t) r[idx[t]] = avg;
            i = j + 1;
        }
        return r;
    };
    Vec rx = ranks(x), ry = ranks(y);
    double mx = 0.0, my = 0.0;
    for (size_t i = 0; i < rx.size(); ++i) {
        mx += rx[i];
        my += ry[i];
    }
    mx /= static_cast<double>(rx.size());
    my /= static_cast<double>(ry.size());
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (size_t i = 0; i < rx.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx <= 0.0 || syy <= 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

struct MetricsReport {
    double accuracy = 0.0;
    double mcc = 0.0;
    double regime_f1 = -1.0;  // -1 when ground truth is unavailable
    double sharpe = 0.0;
    double annualization = 1.0;
    double p50_ms = 0.0;
    double p99_ms = 0.0;
    ConfusionMatrix confusion{3};
    std::vector<int> regime_mapping;
    // per-regime prediction accuracy, indexed by true regime
    std::vector<double> per_regime_accuracy;
    double gate_sigma_spearman = 0.0;
    long samples = 0;
};

}  // namespace aga
