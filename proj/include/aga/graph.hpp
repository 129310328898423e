#pragma once

#include <algorithm>
#include <string>
#include <unordered_map>
#include <vector>

#include "aga/autodiff.hpp"
#include "aga/data.hpp"
#include "aga/error.hpp"
#include "aga/model.hpp"

namespace aga {

// Tape leaves mirroring the model parameters; `ordered` follows the visit
// order so gradients can be pulled back into flat per-parameter buffers.
struct ModelLeaves {
    std::vector<std::pair<std::string, Var>> ordered;
    std::vector<Var> fine_w, fine_b;
    Var wavelet_h;
    std::vector<Var> lstm_w, lstm_b;  // input, forget, candidate, output
    Var gate_w, gate_b;
    Var attn_wq, attn_wk, attn_wv, attn_wo;
    Var flow_emb;
    std::vector<std::vector<CouplingLayerVars>> flow_stacks;
    Var gauss_emb;
    std::vector<GaussianEmissionVars> gauss_nets;
    TransitionVars trans;
    Var pi;
    Var head_w, head_b;
};

inline ModelLeaves insert_leaves(Tape& tape, Model& model, bool requires_grad) {
    ModelLeaves lv;
    std::unordered_map<std::string, Var> by_name;
    model.visit([&](const std::string& name, Tensor& t) {
        Var v = tape.leaf(t, requires_grad);
        by_name.emplace(name, v);
        lv.ordered.emplace_back(name, v);
    });
    auto at = [&](const std::string& n) { return by_name.at(n); };
    const ModelConfig& cfg = model.cfg;
    if (cfg.has_fine())
        for (size_t l = 0; l < model.fine.weights.size(); ++l) {
            lv.fine_w.push_back(at("fine.l" + std::to_string(l) + ".w"));
            lv.fine_b.push_back(at("fine.l" + std::to_string(l) + ".b"));
        }
    if (cfg.has_coarse()) {
        lv.wavelet_h = at("wavelet.h");
        lv.lstm_w = {at("lstm.wi"), at("lstm.wf"), at("lstm.wg"), at("lstm.wo")};
        lv.lstm_b = {at("lstm.bi"), at("lstm.bf"), at("lstm.bg"), at("lstm.bo")};
    }
    if (cfg.has_gate()) {
        lv.gate_w = at("gate.w");
        lv.gate_b = at("gate.b");
    }
    if (cfg.has_attention()) {
        lv.attn_wq = at("attn.wq");
        lv.attn_wk = at("attn.wk");
        lv.attn_wv = at("attn.wv");
        lv.attn_wo = at("attn.wo");
    }
    if (!cfg.gaussian_emissions) {
        lv.flow_emb = at("flow.emb");
        lv.flow_stacks.resize(model.flow.stacks.size());
        for (size_t s = 0; s < model.flow.stacks.size(); ++s)
            for (size_t l = 0; l < model.flow.stacks[s].size(); ++l) {
                std::string base = "flow.z" + std::to_string(s) + ".l" + std::to_string(l);
                CouplingLayerVars clv;
                clv.scale_net = {at(base + ".scale.w1"), at(base + ".scale.b1"),
                                 at(base + ".scale.w2"), at(base + ".scale.b2")};
                clv.shift_net = {at(base + ".shift.w1"), at(base + ".shift.b1"),
                                 at(base + ".shift.w2"), at(base + ".shift.b2")};
                lv.flow_stacks[s].push_back(clv);
            }
    } else {
        lv.gauss_emb = at("gauss.emb");
        for (size_t s = 0; s < model.gauss.mean_nets.size(); ++s) {
            std::string base = "gauss.z" + std::to_string(s);
            GaussianEmissionVars gv;
            gv.mean_net = {at(base + ".mean.w1"), at(base + ".mean.b1"),
                           at(base + ".mean.w2"), at(base + ".mean.b2")};
            gv.logvar_net = {at(base + ".logvar.w1"), at(base + ".logvar.b1"),
                             at(base + ".logvar.w2"), at(base + ".logvar.b2")};
            lv.gauss_nets.push_back(gv);
        }
    }
    for (size_t i = 0; i < model.trans.proj.size(); ++i)
        lv.trans.proj.push_back(at("trans.u" + std::to_string(i)));
    lv.trans.embeddings = at("trans.emb");
    lv.trans.bias = at("trans.bias");
    lv.trans.pair_bias = at("trans.pair");
    if (!cfg.fixed_transitions) {
        lv.trans.alpha_raw = at("trans.alpha");
        lv.trans.gru = {at("trans.gru.wz"), at("trans.gru.wr"), at("trans.gru.wh"),
                        at("trans.gru.bz"), at("trans.gru.br"), at("trans.gru.bh")};
        lv.trans.offset_mlp = {at("trans.mlp.w1"), at("trans.mlp.b1"), at("trans.mlp.w2"),
                               at("trans.mlp.b2")};
    }
    lv.pi = at("pi");
    lv.head_w = at("head.w");
    lv.head_b = at("head.b");
    return lv;
}

// One training window: raw inputs plus per-step adaptation signals. Loss is
// taken over steps [warmup, len).
struct WindowInput {
    Tensor x;                 // len x m, z-scored features
    Vec sigma;                // raw volatility signal per step
    Vec lambda;               // raw arrival frequency per step
    std::vector<int> labels;  // -1 outside the loss span
    int start = 0;            // absolute frame index, for stable ordering
};

inline WindowInput make_window(const std::vector<FeatureFrame>& frames, int start, int len,
                               const ModelConfig& cfg, double dt_sec) {
    if (start < 0 || start + len > static_cast<int>(frames.size()))
        throw std::invalid_argument("make_window: range out of bounds");
    WindowInput win;
    win.start = start;
    const int m = cfg.feature_dim;
    win.x = Tensor(len, m);
    win.sigma.resize(static_cast<size_t>(len));
    win.lambda.resize(static_cast<size_t>(len));
    win.labels.assign(static_cast<size_t>(len), -1);
    Vec mids(static_cast<size_t>(len));
    const double window_sec = cfg.adaptation_window * dt_sec;
    const int warm = cfg.warmup();
    for (int j = 0; j < len; ++j) {
        const FeatureFrame& f = frames[static_cast<size_t>(start + j)];
        if (static_cast<int>(f.x.size()) != m)
            throw DataError("frame feature dim " + std::to_string(f.x.size()) +
                            " != model feature_dim " + std::to_string(m));
        for (int c = 0; c < m; ++c) win.x.at(j, c) = f.x[static_cast<size_t>(c)];
        mids[static_cast<size_t>(j)] = f.mid;
        win.lambda[static_cast<size_t>(j)] = window_sec > 0.0 ? f.arrival_count / window_sec : 0.0;
        if (j >= warm) win.labels[static_cast<size_t>(j)] = f.label;
    }
    for (int j = 0; j < len; ++j)
        win.sigma[static_cast<size_t>(j)] = sigma_at(mids, j, cfg.adaptation_window);
    return win;
}

namespace detail {

inline Tensor gate_input_matrix(const ModelConfig& cfg, const SignalStats& st,
                                const WindowInput& win) {
    const int T = win.x.rows;
    const int n = static_cast<int>(cfg.gate_inputs.size());
    Tensor g(T, n);
    for (int c = 0; c < n; ++c) {
        const std::string& name = cfg.gate_inputs[static_cast<size_t>(c)];
        int feat = -1;
        if (name != "sigma" && name != "lambda") {
            auto it = std::find(feature_names().begin(), feature_names().end(), name);
            feat = static_cast<int>(it - feature_names().begin());
        }
        for (int t = 0; t < T; ++t) {
            double v;
            if (name == "sigma")
                v = st.std_sigma(win.sigma[static_cast<size_t>(t)]);
            else if (name == "lambda")
                v = st.std_lambda(win.lambda[static_cast<size_t>(t)]);
            else
                v = win.x.at(t, feat);
            g.at(t, c) = v;
        }
    }
    return g;
}

}  // namespace detail

struct WindowGraph {
    Var nll;          // scalar, marginal NLL per loss step
    Var ce;           // scalar, classifier cross-entropy (0 if unlabeled)
    Var filtered;     // T_loss x K
    Var context;      // T x k
    Var fine;         // T x k or invalid
    Var log_emissions; // T_loss x K
};

inline WindowGraph build_window(Tape& tape, const Model& model, const ModelLeaves& lv,
                                const WindowInput& win) {
    const ModelConfig& cfg = model.cfg;
    const int T = win.x.rows;
    const int W = cfg.warmup();
    const int K = cfg.states;
    const int k = cfg.hidden;
    const int stride = cfg.coarse_stride();
    if (T <= W + 1) throw std::invalid_argument("build_window: window shorter than warm-up");
    if (T % stride != 0 || W % stride != 0)
        throw std::invalid_argument("build_window: window and warm-up must align to the coarse stride");
    const int Tl = T - W;

    Var X = tape.constant(win.x);

    // ---- encoders ----
    Var h_fine, h_coarse;
    if (cfg.has_fine())
        h_fine = build_fine_path(tape, X, lv.fine_w, lv.fine_b, cfg.kernel, cfg.dilations);
    if (cfg.has_coarse()) {
        Var h0 = ad::slice_cols(lv.wavelet_h, 0, 1);
        Var h1 = ad::slice_cols(lv.wavelet_h, 1, 2);
        Var approx = X;
        Var detail1;
        for (int lev = 0; lev < cfg.wavelet_levels; ++lev) {
            Var even = ad::downsample_rows(approx, 2, 0);
            Var odd = ad::downsample_rows(approx, 2, 1);
            Var a = ad::add(ad::scale(even, h0), ad::scale(odd, h1));
            if (lev == 0 && cfg.wavelet_details)
                detail1 = ad::sub(ad::scale(even, h1), ad::scale(odd, h0));
            approx = a;
        }
        Var lstm_in = approx;  // T/stride x m
        if (cfg.wavelet_details) {
            int factor = stride / 2;
            Var d1s = factor > 1 ? ad::downsample_rows(detail1, factor, factor - 1) : detail1;
            lstm_in = ad::concat_cols({approx, d1s});
        }
        const int steps = lstm_in.value().rows;
        LstmVars state{tape.constant(Tensor(1, k)), tape.constant(Tensor(1, k))};
        std::vector<Var> rows;
        rows.reserve(static_cast<size_t>(steps));
        for (int i = 0; i < steps; ++i) {
            state = build_lstm_step(tape, ad::row_get(lstm_in, i), state, lv.lstm_w, lv.lstm_b);
            rows.push_back(state.h);
        }
        h_coarse = ad::hold_rows(ad::concat_rows(rows), stride, stride - 1, T);
    }

    // ---- fusion and context ----
    Var fused;
    if (!cfg.has_fine())
        fused = h_coarse;
    else if (!cfg.has_coarse())
        fused = h_fine;
    else if (cfg.has_gate()) {
        Tensor gin = detail::gate_input_matrix(cfg, model.signal_stats(), win);
        Var G = ad::sigmoid_(ad::add(ad::matmul(tape.constant(gin), lv.gate_w),
                                     ad::repeat_row(lv.gate_b, T)));
        Var ones = tape.constant(Tensor::full(T, k, 1.0));
        fused = ad::add(ad::mul(G, h_fine), ad::mul(ad::sub(ones, G), h_coarse));
    }

    Var C;
    if (cfg.has_attention()) {
        Var Q = ad::matmul(fused, lv.attn_wq);
        Var Km = ad::matmul(fused, lv.attn_wk);
        Var Vm = ad::matmul(fused, lv.attn_wv);
        Var attn = ad::banded_attention(Q, Km, Vm, cfg.lookback, cfg.heads);
        C = ad::matmul(attn, lv.attn_wo);
    } else {
        std::vector<Var> parts;
        if (cfg.has_fine()) parts.push_back(h_fine);
        if (cfg.has_coarse()) parts.push_back(h_coarse);
        Var cat = parts.size() == 1 ? parts[0] : ad::concat_cols(parts);
        C = ad::matmul(cat, tape.constant(model.no_aga_proj));
    }

    Var Cl = ad::slice_rows(C, W, T);
    Var Xl = ad::slice_rows(X, W, T);

    // ---- per-state emission log densities ----
    std::vector<Var> emission_cols;
    emission_cols.reserve(static_cast<size_t>(K));
    for (int z = 0; z < K; ++z) {
        if (!cfg.gaussian_emissions) {
            const auto& stack = lv.flow_stacks[cfg.per_state_stacks ? static_cast<size_t>(z) : 0];
            emission_cols.push_back(build_flow_emission(tape, Xl, ad::row_get(lv.flow_emb, z), Cl,
                                                        stack, cfg.feature_dim, cfg.scale_clamp,
                                                        cfg.literal_eq14));
        } else {
            emission_cols.push_back(build_gaussian_emission(tape, Xl, ad::row_get(lv.gauss_emb, z),
                                                            Cl, lv.gauss_nets[static_cast<size_t>(z)],
                                                            cfg.feature_dim, cfg.scale_clamp));
        }
    }
    Var logB = ad::concat_cols(emission_cols);  // Tl x K

    // ---- per-step transition log matrices ----
    Var logits = build_pair_logits(tape, Cl, lv.trans, K);  // Tl x K^2
    if (!cfg.fixed_transitions) {
        Var h_prev = tape.constant(Tensor(1, cfg.gru_hidden));
        std::vector<Var> rows;
        rows.reserve(static_cast<size_t>(T));
        for (int t = 0; t < T; ++t) {
            h_prev = build_gru_step(tape, ad::row_get(C, t), h_prev, lv.trans.gru);
            rows.push_back(h_prev);
        }
        Var offsets = build_mlp2(tape, ad::concat_rows(rows), lv.trans.offset_mlp);
        logits = ad::add(logits, ad::slice_rows(offsets, W, T));
        Tensor sig(Tl, 1);
        for (int t = 0; t < Tl; ++t) sig.data[static_cast<size_t>(t)] = win.sigma[static_cast<size_t>(W + t)];
        Var tau = ad::add_scalar(ad::scale(tape.constant(sig), ad::softplus_(lv.trans.alpha_raw)), 1.0);
        logits = ad::div_colvec(logits, tau);
    }
    std::vector<Var> log_blocks;
    log_blocks.reserve(static_cast<size_t>(K));
    for (int i = 0; i < K; ++i) {
        Var blk = ad::slice_cols(logits, i * K, (i + 1) * K);
        Var lse = ad::logsumexp_axis1(blk);
        log_blocks.push_back(ad::sub(blk, ad::repeat_col(lse, K)));
    }
    Var logA = ad::concat_cols(log_blocks);  // Tl x K^2, row t = transitions into step t

    // ---- forward recursion and filtered posteriors ----
    Var log_pi = ad::sub(lv.pi, ad::repeat_col(ad::logsumexp_axis1(lv.pi), K));
    Var la_un = ad::add(log_pi, ad::row_get(logB, 0));
    Var norm = ad::logsumexp_axis1(la_un);
    Var la = ad::sub(la_un, ad::repeat_col(norm, K));
    Var loglik = norm;
    std::vector<Var> filtered_rows;
    filtered_rows.reserve(static_cast<size_t>(Tl));
    filtered_rows.push_back(ad::exp_(la));
    for (int t = 1; t < Tl; ++t) {
        Var At = ad::reshape(ad::row_get(logA, t), K, K);
        Var M = ad::add(At, ad::repeat_col(ad::reshape(la, K, 1), K));
        Var s = ad::logsumexp_axis0(M);
        la_un = ad::add(s, ad::row_get(logB, t));
        norm = ad::logsumexp_axis1(la_un);
        la = ad::sub(la_un, ad::repeat_col(norm, K));
        loglik = ad::add(loglik, norm);
        filtered_rows.push_back(ad::exp_(la));
    }
    Var P = ad::concat_rows(filtered_rows);  // Tl x K

    // ---- classifier head ----
    std::vector<int> labels(win.labels.begin() + W, win.labels.end());
    bool any_label = false;
    for (int l : labels) any_label = any_label || l >= 0;
    Var ce;
    if (any_label) {
        Var logits3 = ad::add(ad::matmul(ad::concat_cols({Cl, P}), lv.head_w),
                              ad::repeat_row(lv.head_b, Tl));
        ce = ad::cross_entropy_with_logits(logits3, labels);
    } else {
        ce = tape.constant(Tensor(1, 1));
    }

    WindowGraph out;
    out.nll = ad::mul_scalar(loglik, -1.0 / Tl);
    out.ce = ce;
    out.filtered = P;
    out.context = C;
    out.fine = h_fine;
    out.log_emissions = logB;
    return out;
}

// Composite loss: weights for the cross-entropy, L2 and wavelet penalty
// terms on top of the marginal NLL (the paper lists the terms; the weights
// are configuration).
struct LossWeights {
    double lambda_ce = 1.0;
    double lambda_l2 = 1e-5;
    double lambda_w = 1e-3;
};

struct LossBreakdown {
    double nll = 0.0;
    double ce = 0.0;
    double l2 = 0.0;
    double wavelet = 0.0;
    double lambda_ce = 1.0;
    double lambda_l2 = 1e-5;
    double lambda_w = 1e-3;
    double total = 0.0;
};

struct BuiltLoss {
    Var total;
    LossBreakdown values;
};

// Windows are reduced in ascending start order regardless of the order they
// are passed in, so the loss is bit-identical under batch reshuffling.
inline BuiltLoss build_batch_loss(Tape& tape, Model& model, const ModelLeaves& lv,
                                  std::vector<const WindowInput*> windows,
                                  const LossWeights& lw) {
    if (windows.empty()) throw std::invalid_argument("build_batch_loss: empty batch");
    std::sort(windows.begin(), windows.end(),
              [](const WindowInput* a, const WindowInput* b) { return a->start < b->start; });
    Var nll, ce;
    bool first = true;
    for (const WindowInput* w : windows) {
        WindowGraph g = build_window(tape, model, lv, *w);
        nll = first ? g.nll : ad::add(nll, g.nll);
        ce = first ? g.ce : ad::add(ce, g.ce);
        first = false;
    }
    const double inv_b = 1.0 / static_cast<double>(windows.size());
    nll = ad::mul_scalar(nll, inv_b);
    ce = ad::mul_scalar(ce, inv_b);

    Var l2;
    bool l2_first = true;
    for (const auto& [name, leaf] : lv.ordered) {
        Var sq = ad::sum_all(ad::mul(leaf, leaf));
        l2 = l2_first ? sq : ad::add(l2, sq);
        l2_first = false;
    }

    Var wav;
    if (model.cfg.has_coarse()) {
        Var h = lv.wavelet_h;
        Var norm = ad::sqrt_(ad::sum_all(ad::mul(h, h)));
        Var norm_err = ad::add_scalar(norm, -1.0);
        const int L = h.value().cols;
        Tensor signs(1, L);
        // sum of the derived highpass g[n] = (-1)^n h[L-1-n], expressed as a
        // signed sum over h directly
        for (int n = 0; n < L; ++n) signs.data[static_cast<size_t>(L - 1 - n)] = (n % 2 == 0) ? 1.0 : -1.0;
        Var gsum = ad::sum_all(ad::mul(h, tape.constant(signs)));
        wav = ad::add(ad::mul(norm_err, norm_err), ad::mul(gsum, gsum));
    } else {
        wav = tape.constant(Tensor(1, 1));
    }

    Var total = ad::add(ad::add(nll, ad::mul_scalar(ce, lw.lambda_ce)),
                        ad::add(ad::mul_scalar(l2, lw.lambda_l2), ad::mul_scalar(wav, lw.lambda_w)));

    BuiltLoss out;
    out.total = total;
    out.values.nll = nll.value().data[0];
    out.values.ce = ce.value().data[0];
    out.values.l2 = l2.value().data[0];
    out.values.wavelet = wav.value().data[0];
    out.values.lambda_ce = lw.lambda_ce;
    out.values.lambda_l2 = lw.lambda_l2;
    out.values.lambda_w = lw.lambda_w;
    out.values.total = total.value().data[0];
    return out;
}

// Value-only evaluation of the composite loss on a batch of windows.
inline LossBreakdown sequence_loss(Model& model, const std::vector<WindowInput>& windows,
                                   const LossWeights& lw) {
    if (windows.empty()) throw std::invalid_argument("sequence_loss: empty batch");
    Tape tape;
    ModelLeaves lv = insert_leaves(tape, model, false);
    std::vector<const WindowInput*> ptrs;
    ptrs.reserve(windows.size());
    for (const WindowInput& w : windows) ptrs.push_back(&w);
    return build_batch_loss(tape, model, lv, std::move(ptrs), lw).values;
}

}  // namespace aga
