#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "aga/autodiff.hpp"
#include "aga/error.hpp"
#include "aga/mlp.hpp"
#include "aga/numerics.hpp"
#include "aga/tensor.hpp"

namespace aga {

struct GruParams {
    // Gate weights (input_dim + hidden) x hidden, biases 1 x hidden.
    Tensor wz, wr, wh;
    Tensor bz, br, bh;
    int input_dim = 0;
    int hidden = 0;

    static GruParams zeros(int input_dim, int hidden) {
        GruParams p;
        p.input_dim = input_dim;
        p.hidden = hidden;
        const int rows = input_dim + hidden;
        p.wz = Tensor(rows, hidden);
        p.wr = Tensor(rows, hidden);
        p.wh = Tensor(rows, hidden);
        p.bz = Tensor(1, hidden);
        p.br = Tensor(1, hidden);
        p.bh = Tensor(1, hidden);
        return p;
    }
};

// Gated recurrent update, convention h' = (1 - z) . h + z . candidate with
// z the update gate and candidate = tanh(Wh [x ; r . h] + bh).
inline Vec gru_step(const Vec& input, const Vec& h_prev, const GruParams& p) {
    if (static_cast<int>(input.size()) != p.input_dim ||
        static_cast<int>(h_prev.size()) != p.hidden)
        throw ShapeError("gru_step: dimension mismatch");
    Vec in(input);
    in.insert(in.end(), h_prev.begin(), h_prev.end());
    Vec zz = vec_mat(in, p.wz), zr = vec_mat(in, p.wr);
    Vec z(p.hidden), r(p.hidden);
    for (int k = 0; k < p.hidden; ++k) {
        z[k] = sigmoid(zz[k] + p.bz.data[k]);
        r[k] = sigmoid(zr[k] + p.br.data[k]);
    }
    Vec in2(input);
    in2.reserve(input.size() + h_prev.size());
    for (int k = 0; k < p.hidden; ++k) in2.push_back(r[k] * h_prev[k]);
    Vec zh = vec_mat(in2, p.wh);
    Vec h(p.hidden);
    for (int k = 0; k < p.hidden; ++k) {
        double cand = std::tanh(zh[k] + p.bh.data[k]);
        double a = (1.0 - z[k]) * h_prev[k];
        double b = z[k] * cand;
        h[k] = a + b;
        if (!std::isfinite(h[k])) throw NumericError("gru_step: non-finite state");
    }
    return h;
}

struct GruVars {
    Var wz, wr, wh, bz, br, bh;
};

inline Var build_gru_step(Tape& tape, Var input, Var h_prev, const GruVars& g) {
    Var in = ad::concat_cols({input, h_prev});
    Var z = ad::sigmoid_(ad::add(ad::matmul(in, g.wz), g.bz));
    Var r = ad::sigmoid_(ad::add(ad::matmul(in, g.wr), g.br));
    Var in2 = ad::concat_cols({input, ad::mul(r, h_prev)});
    Var cand = ad::tanh_(ad::add(ad::matmul(in2, g.wh), g.bh));
    Var keep = ad::mul(ad::add_scalar(ad::mul_scalar(z, -1.0), 1.0), h_prev);
    return ad::add(keep, ad::mul(z, cand));
}

// Context-conditioned, temperature-modulated transition model. Logits for a
// step combine three parts: a bilinear state-pair form (U_i v_j + a_i)^T c
// + b_ij, an additive K x K offset emitted from a GRU-tracked context state,
// and a volatility temperature tau = 1 + alpha * sigma dividing everything
// before the row softmax.
struct TransitionParams {
    int states = 0;       // K
    int context_dim = 0;  // d = dim(c)
    int embed_dim = 0;    // m_e
    std::vector<Tensor> proj;  // per state i: context_dim x embed_dim (U_i)
    Tensor embeddings;         // K x embed_dim rows (v_j)
    Tensor bias;               // K x context_dim rows (a_i)
    Tensor pair_bias;          // K x K (b_ij)
    Tensor alpha_raw;          // 1 x 1; alpha = softplus(alpha_raw)
    bool adaptive = true;      // false = fixed-transitions ablation
    GruParams gru;
    Mlp2 offset_mlp;           // gru hidden -> K*K logit offsets

    double alpha() const { return adaptive ? softplus(alpha_raw.data[0]) : 0.0; }

    static TransitionParams zeros(int states, int context_dim, int embed_dim, int gru_hidden,
                                  int gru_mlp_hidden) {
        TransitionParams p;
        p.states = states;
        p.context_dim = context_dim;
        p.embed_dim = embed_dim;
        for (int i = 0; i < states; ++i) p.proj.emplace_back(context_dim, embed_dim);
        p.embeddings = Tensor(states, embed_dim);
        p.bias = Tensor(states, context_dim);
        p.pair_bias = Tensor(states, states);
        p.alpha_raw = Tensor(1, 1);
        p.gru = GruParams::zeros(context_dim, gru_hidden);
        p.offset_mlp = Mlp2::zeros(gru_hidden, gru_mlp_hidden, states * states);
        return p;
    }
};

// tau_t = 1 + alpha * sigma_t; alpha >= 0, so tau >= 1 and tau = 1 exactly
// at sigma = 0.
inline double temperature(double sigma, double alpha) {
    if (sigma < 0.0) throw std::invalid_argument("temperature: negative sigma");
    return 1.0 + alpha * sigma;
}

inline double pair_logit(int i, int j, const Vec& context, const TransitionParams& p) {
    if (i < 0 || i >= p.states || j < 0 || j >= p.states)
        throw std::invalid_argument("pair_logit: state index out of range");
    if (static_cast<int>(context.size()) != p.context_dim)
        throw ShapeError("pair_logit: context dim mismatch");
    // (U_i v_j + a_i)^T c + b_ij, evaluated as (c U_i) v_j + c a_i + b_ij
    Vec proj = vec_mat(context, p.proj[static_cast<size_t>(i)]);
    double acc = 0.0;
    for (int e = 0; e < p.embed_dim; ++e) acc += proj[e] * p.embeddings.at(j, e);
    double ca = 0.0;
    for (int d = 0; d < p.context_dim; ++d) ca += context[d] * p.bias.at(i, d);
    acc += ca;
    acc += p.pair_bias.at(i, j);
    return acc;
}

// Row i of the transition matrix: softmax_j of (pair logits + optional
// offset row) / tau.
inline Vec transition_row(int i, const Vec& context, double sigma, const TransitionParams& p,
                          const Vec* offset_row = nullptr) {
    double tau = temperature(sigma, p.alpha());
    Vec logits(static_cast<size_t>(p.states));
    for (int j = 0; j < p.states; ++j) {
        double lg = pair_logit(i, j, context, p);
        if (offset_row) lg += (*offset_row)[static_cast<size_t>(j)];
        logits[static_cast<size_t>(j)] = lg / tau;
    }
    return softmax(logits);
}

struct ContextUpdate {
    Vec h_trans;
    Tensor offsets;  // K x K logit adjustment
};

inline ContextUpdate context_update(const Vec& context, const Vec& h_prev,
                                    const TransitionParams& p) {
    ContextUpdate out;
    out.h_trans = gru_step(context, h_prev, p.gru);
    Vec flat = p.offset_mlp.eval(out.h_trans);
    out.offsets = Tensor(p.states, p.states, std::move(flat));
    return out;
}

struct TransitionVars {
    std::vector<Var> proj;
    Var embeddings, bias, pair_bias, alpha_raw;
    GruVars gru;
    Mlp2Vars offset_mlp;
};

// Unnormalized pair logits for every row of ctx (T x d): returns T x K^2
// with block i (columns [i*K, (i+1)*K)) holding the logits out of state i.
// Mirrors pair_logit(): (c U_i) v_j + c a_i + b_ij.
inline Var build_pair_logits(Tape& tape, Var ctx, const TransitionVars& tv, int states) {
    const int T = ctx.value().rows;
    const int d = ctx.value().cols;
    std::vector<Var> blocks;
    blocks.reserve(static_cast<size_t>(states));
    for (int i = 0; i < states; ++i) {
        Var pi = ad::matmul(ctx, tv.proj[static_cast<size_t>(i)]);     // T x m_e
        Var base = ad::matmul_nt(pi, tv.embeddings);                   // T x K
        Var ai = ad::reshape(ad::slice_rows(tv.bias, i, i + 1), d, 1);
        Var ca = ad::matmul(ctx, ai);                                  // T x 1
        base = ad::add(base, ad::repeat_col(ca, states));
        base = ad::add(base, ad::repeat_row(ad::slice_rows(tv.pair_bias, i, i + 1), T));
        blocks.push_back(base);
    }
    return ad::concat_cols(blocks);
}

}  // namespace aga
