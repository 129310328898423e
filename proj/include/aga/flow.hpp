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

// One masked affine coupling layer. mask[d] = 1 marks conditioning (pass-
// through) dimensions, 0 marks transformed ones. The scale and translation
// nets read [u * mask ; state embedding ; context] and emit all D dims; the
// conditioning dims of their outputs are zeroed, so a single expression
// u * exp(s) + t covers the whole vector. Scales are squashed to
// [-clamp, clamp], bounding |log det| by D * clamp.
struct CouplingLayer {
    Vec mask;
    Mlp2 scale_net;
    Mlp2 shift_net;
};

struct FlowParams {
    int dim = 0;                 // D
    int layers = 4;
    double scale_clamp = 5.0;
    bool per_state_stacks = true;
    bool literal_eq14 = false;   // paper-literal: s, t ignore the masked half
    Tensor embeddings;           // K x embed_dim
    std::vector<std::vector<CouplingLayer>> stacks;  // per state, or one shared

    int states() const { return embeddings.rows; }
    int embed_dim() const { return embeddings.cols; }
    const std::vector<CouplingLayer>& stack(int z) const {
        return stacks[per_state_stacks ? static_cast<size_t>(z) : 0];
    }
    std::vector<CouplingLayer>& stack(int z) {
        return stacks[per_state_stacks ? static_cast<size_t>(z) : 0];
    }

    static Vec layer_mask(int dim, int layer) {
        Vec m(static_cast<size_t>(dim));
        for (int d = 0; d < dim; ++d) m[d] = (d % 2 == layer % 2) ? 1.0 : 0.0;
        return m;
    }

    int net_input_dim() const {
        return literal_eq14 ? embed_dim() + 0 : dim + embed_dim();
    }
};

namespace detail {

// s and t evaluated for one layer given the conditioning input.
inline void coupling_nets(const CouplingLayer& layer, const Vec& u, const Vec& embed,
                          const Vec& context, double clamp, bool literal, Vec& s, Vec& t) {
    Vec in;
    in.reserve(u.size() + embed.size() + context.size());
    if (!literal)
        for (size_t d = 0; d < u.size(); ++d) in.push_back(u[d] * layer.mask[d]);
    in.insert(in.end(), embed.begin(), embed.end());
    in.insert(in.end(), context.begin(), context.end());
    s = layer.scale_net.eval(in);
    t = layer.shift_net.eval(in);
    for (size_t d = 0; d < u.size(); ++d) {
        double keep = literal ? 1.0 : 1.0 - layer.mask[d];
        s[d] = clamp * std::tanh(s[d] / clamp) * keep;
        t[d] *= keep;
    }
}

}  // namespace detail

struct FlowResult {
    Vec value;
    double log_det = 0.0;
};

// Base sample -> data space. log_det is the log |det J| of the forward map.
inline FlowResult flow_forward(const Vec& u, int z, const Vec& context, const FlowParams& p) {
    if (static_cast<int>(u.size()) != p.dim) throw ShapeError("flow_forward: dim mismatch");
    if (z < 0 || z >= p.states()) throw std::invalid_argument("flow_forward: state out of range");
    Vec embed(p.embeddings.row_ptr(z), p.embeddings.row_ptr(z) + p.embed_dim());
    FlowResult r{u, 0.0};
    Vec s, t;
    const auto& stack = p.stack(z);
    for (size_t l = 0; l < stack.size(); ++l) {
        detail::coupling_nets(stack[l], r.value, embed, context, p.scale_clamp, p.literal_eq14, s, t);
        double ssum = 0.0;
        for (int d = 0; d < p.dim; ++d) {
            r.value[d] = r.value[d] * std::exp(s[d]) + t[d];
            ssum += s[d];
            if (!std::isfinite(r.value[d]))
                throw NumericError("flow_forward: non-finite value in layer " + std::to_string(l));
        }
        r.log_det += ssum;
    }
    return r;
}

// Exact algebraic inverse, layers in reverse. log_det is log |det J| of the
// inverse map (the negative of the forward log_det at the matching point).
inline FlowResult flow_inverse(const Vec& x, int z, const Vec& context, const FlowParams& p) {
    if (static_cast<int>(x.size()) != p.dim) throw ShapeError("flow_inverse: dim mismatch");
    if (z < 0 || z >= p.states()) throw std::invalid_argument("flow_inverse: state out of range");
    Vec embed(p.embeddings.row_ptr(z), p.embeddings.row_ptr(z) + p.embed_dim());
    FlowResult r{x, 0.0};
    Vec s, t;
    const auto& stack = p.stack(z);
    for (size_t l = stack.size(); l-- > 0;) {
        // conditioning dims pass through the layer unchanged, so s and t can
        // be recomputed from the output side
        detail::coupling_nets(stack[l], r.value, embed, context, p.scale_clamp, p.literal_eq14, s, t);
        double ssum = 0.0;
        for (int d = 0; d < p.dim; ++d) {
            r.value[d] = (r.value[d] - t[d]) * std::exp(-s[d]);
            ssum += s[d];
            if (!std::isfinite(r.value[d]))
                throw NumericError("flow_inverse: non-finite value in layer " + std::to_string(l));
        }
        r.log_det += -ssum;
    }
    return r;
}

struct EmissionLogProb {
    double value = 0.0;    // log density, nats
    double log_det = 0.0;  // inverse-map log det contribution
};

inline EmissionLogProb emission_logprob(const Vec& x, int z, const Vec& context,
                                        const FlowParams& p) {
    FlowResult inv = flow_inverse(x, z, context, p);
    double quad = 0.0;
    for (int d = 0; d < p.dim; ++d) quad += inv.value[d] * inv.value[d];
    double base = quad * -0.5 + -0.5 * p.dim * kLogTwoPi;
    return {base + inv.log_det, inv.log_det};
}

// ---- Gaussian ablation --------------------------------------------------

// State- and context-conditioned diagonal Gaussian; replaces the flow when
// the gaussian_emissions ablation is active.
struct GaussianEmissionParams {
    Tensor embeddings;  // K x embed_dim
    std::vector<Mlp2> mean_nets;    // per state
    std::vector<Mlp2> logvar_nets;  // per state
    double logvar_clamp = 5.0;
    int dim = 0;

    int states() const { return embeddings.rows; }
};

inline EmissionLogProb gaussian_emission_logprob(const Vec& x, int z, const Vec& context,
                                                 const GaussianEmissionParams& p) {
    if (static_cast<int>(x.size()) != p.dim) throw ShapeError("gaussian_emission: dim mismatch");
    if (z < 0 || z >= p.states()) throw std::invalid_argument("gaussian_emission: state out of range");
    Vec in(p.embeddings.row_ptr(z), p.embeddings.row_ptr(z) + p.embeddings.cols);
    in.insert(in.end(), context.begin(), context.end());
    Vec mu = p.mean_nets[static_cast<size_t>(z)].eval(in);
    Vec lv = p.logvar_nets[static_cast<size_t>(z)].eval(in);
    double acc = 0.0;
    for (int d = 0; d < p.dim; ++d) {
        double l = p.logvar_clamp * std::tanh(lv[d] / p.logvar_clamp);
        double diff = x[d] - mu[d];
        double quad = diff * diff * std::exp(-l);
        acc += (quad + l) * -0.5;
    }
    return {acc + -0.5 * p.dim * kLogTwoPi, 0.0};
}

// ---- batched tape versions ----------------------------------------------

struct CouplingLayerVars {
    Mlp2Vars scale_net;
    Mlp2Vars shift_net;
};

// Emission log-density for every row of x (T x D) under state z's stack.
// Returns a T x 1 column. embed/ctx rows must align with x rows.
inline Var build_flow_emission(Tape& tape, Var x, Var embed_row, Var ctx,
                               const std::vector<CouplingLayerVars>& layers, int dim,
                               double scale_clamp, bool literal) {
    const int T = x.value().rows;
    Var embed = ad::repeat_row(embed_row, T);
    Var u = x;
    Var ld = tape.constant(Tensor(T, 1));
    for (size_t l = layers.size(); l-- > 0;) {
        Vec mask_v = FlowParams::layer_mask(dim, static_cast<int>(l));
        Vec inv_mask_v(mask_v.size());
        for (size_t d = 0; d < mask_v.size(); ++d)
            inv_mask_v[d] = literal ? 1.0 : 1.0 - mask_v[d];
        Var in;
        if (literal) {
            in = ad::concat_cols({embed, ctx});
        } else {
            Var masked = ad::mul(u, tape.constant(Tensor(T, dim, [&] {
                Vec v;
                v.reserve(static_cast<size_t>(T) * dim);
                for (int r = 0; r < T; ++r) v.insert(v.end(), mask_v.begin(), mask_v.end());
                return v;
            }())));
            in = ad::concat_cols({masked, embed, ctx});
        }
        Var inv_mask = tape.constant(Tensor(T, dim, [&] {
            Vec v;
            v.reserve(static_cast<size_t>(T) * dim);
            for (int r = 0; r < T; ++r) v.insert(v.end(), inv_mask_v.begin(), inv_mask_v.end());
            return v;
        }()));
        Var s = ad::mul(ad::squash(build_mlp2(tape, in, layers[l].scale_net), scale_clamp), inv_mask);
        Var t = ad::mul(build_mlp2(tape, in, layers[l].shift_net), inv_mask);
        u = ad::mul(ad::sub(u, t), ad::exp_(ad::mul_scalar(s, -1.0)));
        ld = ad::add(ld, ad::mul_scalar(ad::sum_axis1(s), -1.0));
    }
    Var sq = ad::mul(u, u);
    Var base = ad::add_scalar(ad::mul_scalar(ad::sum_axis1(sq), -0.5), -0.5 * dim * kLogTwoPi);
    return ad::add(base, ld);
}

struct GaussianEmissionVars {
    Mlp2Vars mean_net;
    Mlp2Vars logvar_net;
};

inline Var build_gaussian_emission(Tape& tape, Var x, Var embed_row, Var ctx,
                                   const GaussianEmissionVars& nets, int dim,
                                   double logvar_clamp) {
    const int T = x.value().rows;
    Var in = ad::concat_cols({ad::repeat_row(embed_row, T), ctx});
    Var mu = build_mlp2(tape, in, nets.mean_net);
    Var lv = ad::squash(build_mlp2(tape, in, nets.logvar_net), logvar_clamp);
    Var diff = ad::sub(x, mu);
    Var quad = ad::mul(ad::mul(diff, diff), ad::exp_(ad::mul_scalar(lv, -1.0)));
    Var per_dim = ad::mul_scalar(ad::add(quad, lv), -0.5);
    return ad::add_scalar(ad::sum_axis1(per_dim), -0.5 * dim * kLogTwoPi);
}

}  // namespace aga
