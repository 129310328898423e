#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "aga/autodiff.hpp"
#include "aga/data.hpp"
#include "aga/error.hpp"
#include "aga/numerics.hpp"
#include "aga/tensor.hpp"

namespace aga {

// Market-condition signals driving the resolution gate and the transition
// temperature: local volatility of mid-price changes and arrival frequency.
struct AdaptationSignals {
    double sigma = 0.0;    // windowed std of one-step mid changes, price units
    double lambda = 0.0;   // arrivals per second
    int window = 0;        // w, in steps
    double dt_sec = 0.0;   // window duration
    Vec window_mean;       // mean feature vector over the window
};

// Volatility with the window clamped at the start of the stream; steps with
// no history report 0. Shared by the batched and streaming paths.
inline double sigma_at(const Vec& mids, int t, int w) {
    int weff = std::min(w, t);
    if (weff < 1) return 0.0;
    return windowed_std_of_changes(mids, t, weff);
}

inline AdaptationSignals adaptation_signals(const std::vector<FeatureFrame>& frames, int t, int w) {
    if (frames.empty() || w < 2) throw std::invalid_argument("adaptation_signals: need w >= 2 frames");
    if (t < 0 || t >= static_cast<int>(frames.size()))
        throw std::invalid_argument("adaptation_signals: index out of range");
    AdaptationSignals s;
    s.window = w;
    int64_t dt_ns = frames.size() > 1 ? frames[1].timestamp_ns - frames[0].timestamp_ns : 0;
    s.dt_sec = static_cast<double>(w) * static_cast<double>(dt_ns) * 1e-9;
    Vec mids(frames.size());
    for (size_t i = 0; i < frames.size(); ++i) mids[i] = frames[i].mid;
    s.sigma = sigma_at(mids, t, w);
    s.lambda = s.dt_sec > 0.0 ? frames[t].arrival_count / s.dt_sec : 0.0;
    const int m = static_cast<int>(frames[t].x.size());
    s.window_mean.assign(m, 0.0);
    int lo = std::max(0, t - w + 1);
    for (int i = lo; i <= t; ++i)
        for (int j = 0; j < m; ++j) s.window_mean[j] += frames[i].x[j];
    for (int j = 0; j < m; ++j) s.window_mean[j] /= (t - lo + 1);
    return s;
}

// Gate parameters, row-vector convention: g = sigmoid(inputs * w + b) with
// w of shape (n_inputs x k).
struct GateParams {
    Tensor w;
    Tensor b;
};

inline Vec gate(const Vec& inputs, const GateParams& p) {
    if (static_cast<int>(inputs.size()) != p.w.rows) throw ShapeError("gate: input length mismatch");
    Vec z = vec_mat(inputs, p.w);
    for (int i = 0; i < p.b.cols; ++i) z[i] = sigmoid(z[i] + p.b.data[i]);
    return z;
}

inline Vec fuse(const Vec& g, const Vec& h_fine, const Vec& h_coarse) {
    if (g.size() != h_fine.size() || g.size() != h_coarse.size())
        throw ShapeError("fuse: length mismatch");
    Vec out(g.size());
    for (size_t i = 0; i < g.size(); ++i) {
        double a = g[i] * h_fine[i];
        double b = (1.0 - g[i]) * h_coarse[i];
        out[i] = a + b;
    }
    return out;
}

struct AttentionParams {
    Tensor wq, wk, wv;  // k x k, heads share the matrices via column blocks
    Tensor wo;          // k x k output projection
    int heads = 4;
    int lookback = 32;

    int dim() const { return wq.cols; }
    int head_dim() const { return wq.cols / heads; }
    void validate() const {
        if (heads < 1 || wq.cols % heads != 0)
            throw ShapeError("attention: head count must divide feature dim");
        if (lookback < 1) throw ShapeError("attention: lookback must be >= 1");
    }
};

// Single-step causal attention: the query comes from fused[t], keys/values
// from fused[max(0, t-lookback) .. t]. Mirrors ad::banded_attention exactly.
// Optional outputs: per-head attention weights over the window and per-head
// entropy.
inline Vec aga_attention(const std::vector<Vec>& fused, int t, const AttentionParams& p,
                         std::vector<Vec>* head_weights = nullptr, Vec* head_entropy = nullptr) {
    p.validate();
    if (t < 0 || t >= static_cast<int>(fused.size()))
        throw std::invalid_argument("aga_attention: index out of range");
    const int k = p.dim();
    const int dk = p.head_dim();
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
    const int j0 = std::max(0, t - p.lookback);
    const int w = t - j0 + 1;

    Vec q = vec_mat(fused[t], p.wq);
    std::vector<Vec> keys(w), vals(w);
    for (int s = 0; s < w; ++s) {
        keys[s] = vec_mat(fused[j0 + s], p.wk);
        vals[s] = vec_mat(fused[j0 + s], p.wv);
    }

    if (head_weights) head_weights->assign(p.heads, Vec());
    if (head_entropy) head_entropy->assign(p.heads, 0.0);
    Vec concat(k, 0.0);
    Vec scores(w);
    for (int h = 0; h < p.heads; ++h) {
        const int off = h * dk;
        for (int s = 0; s < w; ++s) {
            double acc = 0.0;
            for (int d = 0; d < dk; ++d) acc += q[off + d] * keys[s][off + d];
            scores[s] = acc * inv_sqrt_dk;
        }
        double maxv = scores[0];
        for (int s = 1; s < w; ++s) maxv = std::max(maxv, scores[s]);
        double sum = 0.0;
        for (int s = 0; s < w; ++s) {
            scores[s] = std::exp(scores[s] - maxv);
            sum += scores[s];
        }
        double ent = 0.0;
        for (int s = 0; s < w; ++s) {
            double wt = scores[s] / sum;
            for (int d = 0; d < dk; ++d) concat[off + d] += wt * vals[s][off + d];
            if (wt > 0.0) ent -= wt * std::log(wt);
            if (head_weights) (*head_weights)[h].push_back(wt);
        }
        if (head_entropy) (*head_entropy)[h] = ent;
    }
    return vec_mat(concat, p.wo);
}

}  // namespace aga
