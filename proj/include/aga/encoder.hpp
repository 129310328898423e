#pragma once

#include <string>
#include <vector>

#include "aga/autodiff.hpp"
#include "aga/error.hpp"
#include "aga/rng.hpp"
#include "aga/tensor.hpp"

namespace aga {

// ---- fine pathway: stack of dilated causal convolutions -----------------

struct FinePathParams {
    int kernel = 5;
    std::vector<int> dilations = {1, 2, 4, 8};
    // Layer l weight is (kernel * in_ch) x out_ch with tap j occupying the
    // row block [j*in_ch, (j+1)*in_ch); bias is 1 x out_ch.
    std::vector<Tensor> weights;
    std::vector<Tensor> biases;

    int layer_in_channels(int layer) const { return weights[layer].rows / kernel; }
    int out_dim() const { return weights.empty() ? 0 : weights.back().cols; }

    int receptive_field() const {
        int rf = 1;
        for (int d : dilations) rf += (kernel - 1) * d;
        return rf;
    }

    static FinePathParams zeros(int in_ch, int out_ch, int kernel, std::vector<int> dilations) {
        FinePathParams p;
        p.kernel = kernel;
        p.dilations = std::move(dilations);
        int in = in_ch;
        for (size_t l = 0; l < p.dilations.size(); ++l) {
            p.weights.emplace_back(kernel * in, out_ch);
            p.biases.emplace_back(1, out_ch);
            in = out_ch;
        }
        return p;
    }
};

// Full-sequence causal convolution stack. Positions before the receptive
// field see zero left-padding; callers treat those rows as warm-up.
// Output row t depends only on input rows <= t.
inline Var build_fine_path(Tape& tape, Var x, const std::vector<Var>& weights,
                           const std::vector<Var>& biases, int kernel,
                           const std::vector<int>& dilations) {
    if (weights.size() != dilations.size() || biases.size() != dilations.size())
        throw ShapeError("fine path: one weight/bias per dilation");
    Var h = x;
    const int T = x.value().rows;
    for (size_t l = 0; l < dilations.size(); ++l) {
        const int in_ch = h.value().cols;
        if (weights[l].value().rows != kernel * in_ch)
            throw ShapeError("fine path: layer " + std::to_string(l) + " expects " +
                             std::to_string(weights[l].value().rows / kernel) +
                             " channels, got " + std::to_string(in_ch));
        Var acc = ad::repeat_row(biases[l], T);
        for (int j = 0; j < kernel; ++j) {
            Var wj = ad::slice_rows(weights[l], j * in_ch, (j + 1) * in_ch);
            // tap j reads j*dilation steps into the past
            Var xs = j == 0 ? h : ad::shift_rows(h, j * dilations[l]);
            acc = ad::add(acc, ad::matmul(xs, wj));
        }
        h = ad::relu(acc);
    }
    return h;
}

inline Tensor dilated_causal_conv(const Tensor& window, const FinePathParams& p) {
    Tape tape;
    std::vector<Var> w, b;
    for (const Tensor& t : p.weights) w.push_back(tape.constant(t));
    for (const Tensor& t : p.biases) b.push_back(tape.constant(t));
    return build_fine_path(tape, tape.constant(window), w, b, p.kernel, p.dilations).value();
}

// ---- coarse pathway: LSTM over wavelet approximation coefficients -------

struct LstmParams {
    // Gate weights are (input_dim + hidden) x hidden, biases 1 x hidden.
    Tensor wi, wf, wg, wo;
    Tensor bi, bf, bg, bo;
    int input_dim = 0;
    int hidden = 0;

    static LstmParams zeros(int input_dim, int hidden) {
        LstmParams p;
        p.input_dim = input_dim;
        p.hidden = hidden;
        const int rows = input_dim + hidden;
        p.wi = Tensor(rows, hidden);
        p.wf = Tensor(rows, hidden);
        p.wg = Tensor(rows, hidden);
        p.wo = Tensor(rows, hidden);
        p.bi = Tensor(1, hidden);
        p.bf = Tensor(1, hidden);
        p.bg = Tensor(1, hidden);
        p.bo = Tensor(1, hidden);
        return p;
    }
};

struct LstmState {
    Vec h;
    Vec c;
};

// One LSTM step on plain vectors; shared by the streaming path and tests.
inline LstmState lstm_step(const Vec& input, const LstmState& prev, const LstmParams& p,
                           long timestep = -1) {
    if (static_cast<int>(input.size()) != p.input_dim ||
        static_cast<int>(prev.h.size()) != p.hidden)
        throw ShapeError("lstm_step: dimension mismatch");
    Vec in(input);
    in.insert(in.end(), prev.h.begin(), prev.h.end());
    Vec zi = vec_mat(in, p.wi), zf = vec_mat(in, p.wf), zg = vec_mat(in, p.wg), zo = vec_mat(in, p.wo);
    LstmState next;
    next.h.resize(p.hidden);
    next.c.resize(p.hidden);
    for (int k = 0; k < p.hidden; ++k) {
        double ig = sigmoid(zi[k] + p.bi.data[k]);
        double fg = sigmoid(zf[k] + p.bf.data[k]);
        double og = sigmoid(zo[k] + p.bo.data[k]);
        double cand = std::tanh(zg[k] + p.bg.data[k]);
        next.c[k] = fg * prev.c[k] + ig * cand;
        next.h[k] = og * std::tanh(next.c[k]);
        if (!std::isfinite(next.h[k]) || !std::isfinite(next.c[k]))
            throw NumericError("lstm_step: non-finite state at timestep " +
                               std::to_string(timestep));
    }
    return next;
}

struct LstmVars {
    Var h;
    Var c;
};

inline LstmVars build_lstm_step(Tape& tape, Var input, LstmVars prev, const std::vector<Var>& w,
                                const std::vector<Var>& b) {
    // w/b order: input, forget, candidate, output
    Var in = ad::concat_cols({input, prev.h});
    Var ig = ad::sigmoid_(ad::add(ad::matmul(in, w[0]), b[0]));
    Var fg = ad::sigmoid_(ad::add(ad::matmul(in, w[1]), b[1]));
    Var cand = ad::tanh_(ad::add(ad::matmul(in, w[2]), b[2]));
    Var og = ad::sigmoid_(ad::add(ad::matmul(in, w[3]), b[3]));
    Var c = ad::add(ad::mul(fg, prev.c), ad::mul(ig, cand));
    Var h = ad::mul(og, ad::tanh_(c));
    return {h, c};
}

}  // namespace aga
