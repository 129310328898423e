#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "aga/error.hpp"
#include "aga/tensor.hpp"

namespace aga {

// Adam with bias correction; one slot pair per parameter tensor.
struct OptimizerState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long step = 0;
    std::vector<Vec> m;
    std::vector<Vec> v;

    static OptimizerState for_params(const std::vector<Tensor*>& params) {
        OptimizerState s;
        s.m.reserve(params.size());
        s.v.reserve(params.size());
        for (const Tensor* p : params) {
            s.m.emplace_back(p->size(), 0.0);
            s.v.emplace_back(p->size(), 0.0);
        }
        return s;
    }
};

inline void adam_step(const std::vector<Tensor*>& params, const std::vector<std::string>& names,
                      const std::vector<Tensor>& grads, OptimizerState& state, double lr) {
    if (params.size() != grads.size()) throw ShapeError("adam_step: params/grads size mismatch");
    if (!(lr > 0.0)) throw std::invalid_argument("adam_step: lr must be > 0");
    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (size_t p = 0; p < params.size(); ++p) {
        Tensor& w = *params[p];
        const Tensor& g = grads[p];
        if (!g.same_shape(w)) throw ShapeError("adam_step: gradient shape mismatch for " + names[p]);
        Vec& m = state.m[p];
        Vec& v = state.v[p];
        for (size_t i = 0; i < w.data.size(); ++i) {
            double gi = g.data[i];
            if (!std::isfinite(gi))
                throw NumericError("adam_step: non-finite gradient in " + names[p]);
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * gi;
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * gi * gi;
            double mhat = m[i] / bc1;
            double vhat = v[i] / bc2;
            w.data[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

// Returns the pre-clip global norm; scales gradients in place when the norm
// exceeds max_norm.
inline double clip_global_norm(std::vector<Tensor>& grads, double max_norm) {
    double sq = 0.0;
    for (const Tensor& g : grads)
        for (double v : g.data) sq += v * v;
    double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        double scale = max_norm / norm;
        for (Tensor& g : grads)
            for (double& v : g.data) v *= scale;
    }
    return norm;
}

struct Schedule {
    double init = 3e-4;
    double floor = 1e-6;
    long total_steps = 1;
};

// Cosine decay from init to floor; steps past total clamp to the floor.
inline double schedule_rate(long t, const Schedule& s) {
    if (t < 0) throw std::invalid_argument("schedule_rate: negative step");
    if (t >= s.total_steps) return s.floor;
    double frac = static_cast<double>(t) / static_cast<double>(s.total_steps);
    return s.floor + 0.5 * (s.init - s.floor) * (1.0 + std::cos(3.14159265358979323846 * frac));
}

}  // namespace aga
