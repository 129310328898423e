#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "aga/attention.hpp"
#include "aga/data.hpp"
#include "aga/error.hpp"
#include "aga/hmm.hpp"
#include "aga/model.hpp"
#include "aga/numerics.hpp"
#include "aga/tensor.hpp"

namespace aga {

// Per-event serving path: consumes one FeatureFrame at a time and carries
// all recurrent state. Arithmetic mirrors the batched training graph
// operation by operation, so filtered posteriors agree with build_window()
// exactly on a shared span.
class StreamingPredictor {
  public:
    struct Output {
        int step = 0;
        bool warm = true;
        int pred_class = -1;
        Vec class_probs;
        Vec filtered;   // K state probabilities (empty while warm)
        Vec context;    // c_t
    };

    struct Diagnostics {
        double sigma = 0.0;
        double lambda = 0.0;
        double tau = 1.0;
        double gate_mean = 0.5;
        Vec head_entropy;
        Vec logb_row;      // per-state emission log density
        Tensor log_trans;  // K x K into this step (valid once step > warmup)
    };

    StreamingPredictor(const Model& model, double dt_sec, bool collect = false)
        : model_(model), dt_sec_(dt_sec), collect_(collect) {
        const ModelConfig& cfg = model_.cfg;
        if (cfg.has_fine()) {
            conv_hist_.resize(cfg.dilations.size());
            for (size_t l = 0; l < cfg.dilations.size(); ++l) {
                int span = (cfg.kernel - 1) * cfg.dilations[l] + 1;
                int ch = static_cast<int>(l == 0 ? cfg.feature_dim : cfg.hidden);
                conv_hist_[l].assign(static_cast<size_t>(span), Vec(static_cast<size_t>(ch), 0.0));
            }
        }
        if (cfg.has_coarse()) {
            pending_.assign(static_cast<size_t>(cfg.wavelet_levels), Vec());
            lstm_state_.h.assign(static_cast<size_t>(cfg.hidden), 0.0);
            lstm_state_.c.assign(static_cast<size_t>(cfg.hidden), 0.0);
            h_coarse_.assign(static_cast<size_t>(cfg.hidden), 0.0);
        }
        gru_h_.assign(static_cast<size_t>(cfg.gru_hidden), 0.0);
        la_.assign(static_cast<size_t>(cfg.states), 0.0);
    }

    void reserve(size_t steps) {
        mids_.reserve(steps);
        fused_hist_.reserve(steps);
        if (collect_) {
            logb_rows_.reserve(steps);
            log_trans_hist_.reserve(steps);
        }
    }

    int warmup() const { return model_.cfg.warmup(); }
    const Diagnostics& diagnostics() const { return diag_; }
    const std::vector<Vec>& collected_logb() const { return logb_rows_; }
    const std::vector<Tensor>& collected_log_trans() const { return log_trans_hist_; }
    Vec log_pi() const {
        Vec lp(model_.pi_logits.data);
        double lse = logsumexp(lp);
        for (double& v : lp) v -= lse;
        return lp;
    }

    Output step(const FeatureFrame& frame) {
        const ModelConfig& cfg = model_.cfg;
        const int t = t_++;
        const int k = cfg.hidden;
        const int K = cfg.states;

        mids_.push_back(frame.mid);
        diag_.sigma = sigma_at(mids_, t, cfg.adaptation_window);
        const double window_sec = cfg.adaptation_window * dt_sec_;
        diag_.lambda = window_sec > 0.0 ? frame.arrival_count / window_sec : 0.0;

        // fine pathway
        Vec h_fine;
        if (cfg.has_fine()) {
            Vec in = frame.x;
            for (size_t l = 0; l < cfg.dilations.size(); ++l) {
                const Tensor& w = model_.fine.weights[l];
                const Tensor& b = model_.fine.biases[l];
                const int in_ch = static_cast<int>(in.size());
                auto& ring = conv_hist_[l];
                ring[static_cast<size_t>(t) % ring.size()] = in;
                Vec out(b.data);
                for (int j = 0; j < cfg.kernel; ++j) {
                    int idx = t - j * cfg.dilations[l];
                    if (idx < 0) continue;
                    const Vec& src = ring[static_cast<size_t>(idx) % ring.size()];
                    Vec tap(out.size(), 0.0);
                    for (int r = 0; r < in_ch; ++r) {
                        const double xv = src[static_cast<size_t>(r)];
                        if (xv == 0.0) continue;
                        const double* wrow = w.row_ptr(j * in_ch + r);
                        for (size_t c = 0; c < tap.size(); ++c) tap[c] += xv * wrow[c];
                    }
                    for (size_t c = 0; c < out.size(); ++c) out[c] += tap[c];
                }
                for (double& v : out) v = v > 0.0 ? v : 0.0;
                in = std::move(out);
            }
            h_fine = std::move(in);
        }

        // coarse pathway
        if (cfg.has_coarse()) feed_wavelet(frame.x, 0);

        // fusion
        Vec fused;
        if (!cfg.has_fine())
            fused = h_coarse_;
        else if (!cfg.has_coarse())
            fused = h_fine;
        else if (cfg.has_gate()) {
            Vec gin = gate_inputs(frame);
            Vec g = gate(gin, model_.gate);
            double gsum = 0.0;
            for (double v : g) gsum += v;
            diag_.gate_mean = gsum / static_cast<double>(g.size());
            fused = fuse(g, h_fine, h_coarse_);
        } else {
            fused = h_fine;  // no_aga with both paths: fusion unused
        }

        // context
        Vec c;
        if (cfg.has_attention()) {
            fused_hist_.push_back(std::move(fused));
            std::vector<Vec>* wptr = nullptr;
            c = aga_attention(fused_hist_, t, model_.attn, wptr, &diag_.head_entropy);
        } else {
            Vec cat;
            cat.reserve(static_cast<size_t>(cfg.context_input_dim()));
            if (cfg.has_fine()) cat.insert(cat.end(), h_fine.begin(), h_fine.end());
            if (cfg.has_coarse()) cat.insert(cat.end(), h_coarse_.begin(), h_coarse_.end());
            c = vec_mat(cat, model_.no_aga_proj);
        }

        // transition context
        Tensor offsets;
        if (!cfg.fixed_transitions) {
            gru_h_ = gru_step(c, gru_h_, model_.trans.gru);
            Vec flat = model_.trans.offset_mlp.eval(gru_h_);
            offsets = Tensor(K, K, std::move(flat));
        }
        diag_.tau = temperature(diag_.sigma, model_.trans.alpha());

        Output out;
        out.step = t;
        out.context = c;
        const int W = cfg.warmup();
        out.warm = t < W;
        if (out.warm) {
            diag_.logb_row.clear();
            return out;
        }

        // emission log densities
        Vec logb(static_cast<size_t>(K));
        for (int z = 0; z < K; ++z) {
            if (!cfg.gaussian_emissions)
                logb[static_cast<size_t>(z)] = emission_logprob(frame.x, z, c, model_.flow).value;
            else
                logb[static_cast<size_t>(z)] = gaussian_emission_logprob(frame.x, z, c, model_.gauss).value;
        }
        diag_.logb_row = logb;

        // filtered update
        if (t == W) {
            Vec lp = log_pi();
            Vec un(static_cast<size_t>(K));
            for (int j = 0; j < K; ++j) un[static_cast<size_t>(j)] = lp[static_cast<size_t>(j)] + logb[static_cast<size_t>(j)];
            double norm = logsumexp(un);
            for (int j = 0; j < K; ++j) la_[static_cast<size_t>(j)] = un[static_cast<size_t>(j)] - norm;
            diag_.log_trans = Tensor();
        } else {
            Tensor lt = log_transition(c, diag_.sigma, cfg.fixed_transitions ? nullptr : &offsets);
            hmm_filter_step(la_, lt, logb.data());
            diag_.log_trans = std::move(lt);
        }
        if (collect_) {
            logb_rows_.push_back(logb);
            if (t > W) log_trans_hist_.push_back(diag_.log_trans);
        }

        out.filtered.resize(static_cast<size_t>(K));
        for (int j = 0; j < K; ++j) out.filtered[static_cast<size_t>(j)] = std::exp(la_[static_cast<size_t>(j)]);

        // classifier head
        Vec hin(c);
        hin.insert(hin.end(), out.filtered.begin(), out.filtered.end());
        Vec logits3 = vec_mat(hin, model_.head_w);
        for (int i = 0; i < 3; ++i) logits3[static_cast<size_t>(i)] += model_.head_b.data[static_cast<size_t>(i)];
        out.class_probs = softmax(logits3);
        int best = 0;
        for (int i = 1; i < 3; ++i)
            if (logits3[static_cast<size_t>(i)] > logits3[static_cast<size_t>(best)]) best = i;
        out.pred_class = best;
        return out;
    }

    // K x K log transition matrix built from the current context; mirrors
    // the batched builder (pair logits + offset, divided by tau, row
    // log-softmax).
    Tensor log_transition(const Vec& c, double sigma, const Tensor* offsets) const {
        const int K = model_.cfg.states;
        const double tau = temperature(sigma, model_.trans.alpha());
        Tensor lt(K, K);
        Vec row(static_cast<size_t>(K));
        for (int i = 0; i < K; ++i) {
            for (int j = 0; j < K; ++j) {
                double lg = pair_logit(i, j, c, model_.trans);
                if (offsets) lg += offsets->at(i, j);
                row[static_cast<size_t>(j)] = lg / tau;
            }
            double lse = logsumexp(row);
            for (int j = 0; j < K; ++j) lt.at(i, j) = row[static_cast<size_t>(j)] - lse;
        }
        return lt;
    }

  private:
    Vec gate_inputs(const FeatureFrame& frame) const {
        const ModelConfig& cfg = model_.cfg;
        SignalStats st = model_.signal_stats();
        Vec in;
        in.reserve(cfg.gate_inputs.size());
        for (const std::string& name : cfg.gate_inputs) {
            if (name == "sigma")
                in.push_back(st.std_sigma(diag_.sigma));
            else if (name == "lambda")
                in.push_back(st.std_lambda(diag_.lambda));
            else {
                auto it = std::find(feature_names().begin(), feature_names().end(), name);
                in.push_back(frame.x[static_cast<size_t>(it - feature_names().begin())]);
            }
        }
        return in;
    }

    // One new fine-clock sample enters the cascade at `level`; emits to the
    // next level every second call. Completing the top level advances the
    // LSTM.
    void feed_wavelet(const Vec& v, int level) {
        const ModelConfig& cfg = model_.cfg;
        const double h0 = model_.wavelet.lowpass.data[0];
        const double h1 = model_.wavelet.lowpass.data[1];
        Vec& pend = pending_[static_cast<size_t>(level)];
        if (pend.empty()) {
            pend = v;
            return;
        }
        Vec a(v.size()), d;
        if (level == 0 && cfg.wavelet_details) d.resize(v.size());
        for (size_t i = 0; i < v.size(); ++i) {
            double ae = h0 * pend[i];
            double ao = h1 * v[i];
            a[i] = ae + ao;
            if (!d.empty()) {
                double de = h1 * pend[i];
                double dn = h0 * v[i];
                d[i] = de - dn;
            }
        }
        if (level == 0 && cfg.wavelet_details) last_detail1_ = std::move(d);
        pend.clear();
        if (level + 1 < cfg.wavelet_levels) {
            feed_wavelet(a, level + 1);
            return;
        }
        Vec in = std::move(a);
        if (cfg.wavelet_details) in.insert(in.end(), last_detail1_.begin(), last_detail1_.end());
        lstm_state_ = lstm_step(in, lstm_state_, model_.lstm, t_ - 1);
        h_coarse_ = lstm_state_.h;
    }

    const Model& model_;
    double dt_sec_;
    bool collect_;
    int t_ = 0;

    Vec mids_;
    std::vector<std::vector<Vec>> conv_hist_;
    std::vector<Vec> pending_;
    Vec last_detail1_;
    LstmState lstm_state_;
    Vec h_coarse_;
    std::vector<Vec> fused_hist_;
    Vec gru_h_;
    Vec la_;
    Diagnostics diag_;
    std::vector<Vec> logb_rows_;
    std::vector<Tensor> log_trans_hist_;
};

}  // namespace aga
