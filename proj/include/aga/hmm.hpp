#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "aga/error.hpp"
#include "aga/numerics.hpp"
#include "aga/tensor.hpp"

namespace aga {

struct StatePosterior {
    Tensor filtered;   // T x K, rows sum to 1
    Tensor smoothed;   // T x K, rows sum to 1
    double loglik = 0.0;
};

namespace detail {

inline void check_emission_row(const double* row, int k, int t) {
    bool any = false;
    for (int j = 0; j < k; ++j)
        if (row[j] > -std::numeric_limits<double>::infinity()) {
            any = true;
            break;
        }
    if (!any) throw NumericError("hmm: emission row is all -inf at timestep " + std::to_string(t));
}

}  // namespace detail

// One scaled-forward update in log space. la holds normalized log filtered
// probabilities for the previous step; log_trans is the K x K log transition
// matrix into the current step; log_emit the current emission row. Returns
// the log normalizer. Shared between batch inference and the streaming
// predictor so both produce identical filtered posteriors.
inline double hmm_filter_step(Vec& la, const Tensor& log_trans, const double* log_emit) {
    const int k = static_cast<int>(la.size());
    Vec next(static_cast<size_t>(k));
    Vec col(static_cast<size_t>(k));
    for (int j = 0; j < k; ++j) {
        for (int i = 0; i < k; ++i) col[static_cast<size_t>(i)] = la[static_cast<size_t>(i)] + log_trans.at(i, j);
        next[static_cast<size_t>(j)] = logsumexp(col) + log_emit[j];
    }
    double norm = logsumexp(next);
    for (int j = 0; j < k; ++j) la[static_cast<size_t>(j)] = next[static_cast<size_t>(j)] - norm;
    return norm;
}

// Forward recursion on log inputs. log_trans[t-1] carries transitions into
// step t, so it has T-1 entries.
inline StatePosterior forward_log(const Tensor& log_emissions,
                                  const std::vector<Tensor>& log_trans, const Vec& log_pi,
                                  bool want_smoothed = false) {
    const int T = log_emissions.rows;
    const int K = log_emissions.cols;
    if (T == 0) throw std::invalid_argument("hmm: empty sequence");
    if (static_cast<int>(log_pi.size()) != K) throw ShapeError("hmm: pi length != K");
    if (static_cast<int>(log_trans.size()) != T - 1)
        throw ShapeError("hmm: need T-1 transition matrices, got " +
                         std::to_string(log_trans.size()));

    StatePosterior out;
    out.filtered = Tensor(T, K);
    Vec la(static_cast<size_t>(K));
    detail::check_emission_row(log_emissions.row_ptr(0), K, 0);
    for (int j = 0; j < K; ++j) la[static_cast<size_t>(j)] = log_pi[static_cast<size_t>(j)] + log_emissions.at(0, j);
    double norm = logsumexp(la);
    if (!std::isfinite(norm)) throw NumericError("hmm: non-finite normalizer at timestep 0");
    for (int j = 0; j < K; ++j) la[static_cast<size_t>(j)] -= norm;
    out.loglik = norm;
    for (int j = 0; j < K; ++j) out.filtered.at(0, j) = std::exp(la[static_cast<size_t>(j)]);

    for (int t = 1; t < T; ++t) {
        detail::check_emission_row(log_emissions.row_ptr(t), K, t);
        double c = hmm_filter_step(la, log_trans[static_cast<size_t>(t - 1)], log_emissions.row_ptr(t));
        if (!std::isfinite(c)) throw NumericError("hmm: non-finite normalizer at timestep " + std::to_string(t));
        out.loglik += c;
        for (int j = 0; j < K; ++j) out.filtered.at(t, j) = std::exp(la[static_cast<size_t>(j)]);
    }

    if (want_smoothed) {
        // backward recursion with per-step rescaling
        Tensor lb(T, K);
        for (int t = T - 2; t >= 0; --t) {
            Vec tmp(static_cast<size_t>(K));
            for (int i = 0; i < K; ++i) {
                for (int j = 0; j < K; ++j)
                    tmp[static_cast<size_t>(j)] = log_trans[static_cast<size_t>(t)].at(i, j) +
                                                  log_emissions.at(t + 1, j) + lb.at(t + 1, j);
                lb.at(t, i) = logsumexp(tmp);
            }
            double shift = lb.at(t, 0);
            for (int i = 1; i < K; ++i) shift = std::max(shift, lb.at(t, i));
            for (int i = 0; i < K; ++i) lb.at(t, i) -= shift;
        }
        out.smoothed = Tensor(T, K);
        for (int t = 0; t < T; ++t) {
            Vec lg(static_cast<size_t>(K));
            for (int i = 0; i < K; ++i)
                lg[static_cast<size_t>(i)] = std::log(std::max(out.filtered.at(t, i), 1e-300)) + lb.at(t, i);
            double n = logsumexp(lg);
            for (int i = 0; i < K; ++i) out.smoothed.at(t, i) = std::exp(lg[static_cast<size_t>(i)] - n);
        }
    }
    return out;
}

inline std::vector<Tensor> to_log(const std::vector<Tensor>& trans) {
    std::vector<Tensor> out(trans.size());
    for (size_t t = 0; t < trans.size(); ++t) {
        out[t] = trans[t];
        for (double& v : out[t].data) v = std::log(v);
    }
    return out;
}

// Spec-facing wrappers on probability-space transitions and pi.

inline StatePosterior forward(const Tensor& log_emissions, const std::vector<Tensor>& trans,
                              const Vec& pi) {
    Vec log_pi(pi.size());
    for (size_t i = 0; i < pi.size(); ++i) log_pi[i] = std::log(pi[i]);
    return forward_log(log_emissions, to_log(trans), log_pi, false);
}

inline StatePosterior forward_backward(const Tensor& log_emissions,
                                       const std::vector<Tensor>& trans, const Vec& pi) {
    Vec log_pi(pi.size());
    for (size_t i = 0; i < pi.size(); ++i) log_pi[i] = std::log(pi[i]);
    return forward_log(log_emissions, to_log(trans), log_pi, true);
}

// Most probable joint path; ties broken toward the lower state index.
inline std::vector<int> viterbi_log(const Tensor& log_emissions,
                                    const std::vector<Tensor>& log_trans, const Vec& log_pi) {
    const int T = log_emissions.rows;
    const int K = log_emissions.cols;
    if (T == 0) return {};
    if (static_cast<int>(log_trans.size()) != T - 1)
        throw ShapeError("viterbi: need T-1 transition matrices");
    Tensor score(T, K);
    std::vector<std::vector<int>> back(static_cast<size_t>(T), std::vector<int>(static_cast<size_t>(K), 0));
    for (int j = 0; j < K; ++j) score.at(0, j) = log_pi[static_cast<size_t>(j)] + log_emissions.at(0, j);
    for (int t = 1; t < T; ++t) {
        for (int j = 0; j < K; ++j) {
            double best = -std::numeric_limits<double>::infinity();
            int arg = 0;
            for (int i = 0; i < K; ++i) {
                double cand = score.at(t - 1, i) + log_trans[static_cast<size_t>(t - 1)].at(i, j);
                if (cand > best) {
                    best = cand;
                    arg = i;
                }
            }
            score.at(t, j) = best + log_emissions.at(t, j);
            back[static_cast<size_t>(t)][static_cast<size_t>(j)] = arg;
        }
    }
    double best = score.at(T - 1, 0);
    int arg = 0;
    for (int j = 1; j < K; ++j)
        if (score.at(T - 1, j) > best) {
            best = score.at(T - 1, j);
            arg = j;
        }
    std::vector<int> path(static_cast<size_t>(T));
    path[static_cast<size_t>(T - 1)] = arg;
    for (int t = T - 1; t > 0; --t)
        path[static_cast<size_t>(t - 1)] = back[static_cast<size_t>(t)][static_cast<size_t>(path[static_cast<size_t>(t)])];
    return path;
}

inline std::vector<int> viterbi(const Tensor& log_emissions, const std::vector<Tensor>& trans,
                                const Vec& pi) {
    Vec log_pi(pi.size());
    for (size_t i = 0; i < pi.size(); ++i) log_pi[i] = std::log(pi[i]);
    return viterbi_log(log_emissions, to_log(trans), log_pi);
}

}  // namespace aga
