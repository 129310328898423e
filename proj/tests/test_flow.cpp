#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "aga/flow.hpp"
#include "aga/rng.hpp"

using namespace aga;

namespace {

Mlp2 random_mlp(Rng& rng, int in, int hidden, int out, double scale) {
    Mlp2 m = Mlp2::zeros(in, hidden, out);
    for (Tensor* t : {&m.w1, &m.b1, &m.w2, &m.b2})
        for (double& v : t->data) v = scale * rng.normal();
    return m;
}

FlowParams random_flow(Rng& rng, int dim, int states, int layers, bool literal = false,
                       double scale = 0.4) {
    FlowParams p;
    p.dim = dim;
    p.layers = layers;
    p.literal_eq14 = literal;
    p.embeddings = Tensor(states, 3);
    for (double& v : p.embeddings.data) v = rng.normal();
    const int in = (literal ? 0 : dim) + 3 + 2;  // embed 3, context 2
    p.stacks.resize(static_cast<size_t>(states));
    for (int z = 0; z < states; ++z)
        for (int l = 0; l < layers; ++l) {
            CouplingLayer layer;
            layer.mask = FlowParams::layer_mask(dim, l);
            layer.scale_net = random_mlp(rng, in, 6, dim, scale);
            layer.shift_net = random_mlp(rng, in, 6, dim, scale);
            p.stacks[static_cast<size_t>(z)].push_back(std::move(layer));
        }
    return p;
}

FlowParams identity_flow(int dim, int states, int layers) {
    Rng rng(0);
    FlowParams p = random_flow(rng, dim, states, layers, false, 0.0);
    for (double& v : p.embeddings.data) v = 0.0;
    return p;
}

// determinant by Gaussian elimination with partial pivoting (test oracle)
double det_dense(Tensor m) {
    const int n = m.rows;
    double det = 1.0;
    for (int c = 0; c < n; ++c) {
        int piv = c;
        for (int r = c + 1; r < n; ++r)
            if (std::fabs(m.at(r, c)) > std::fabs(m.at(piv, c))) piv = r;
        if (piv != c) {
            for (int j = 0; j < n; ++j) std::swap(m.at(c, j), m.at(piv, j));
            det = -det;
        }
        if (m.at(c, c) == 0.0) return 0.0;
        det *= m.at(c, c);
        for (int r = c + 1; r < n; ++r) {
            double f = m.at(r, c) / m.at(c, c);
            for (int j = c; j < n; ++j) m.at(r, j) -= f * m.at(c, j);
        }
    }
    return det;
}

}  // namespace

TEST_CASE("identity-initialized flow is the identity map", "[flow]") {
    FlowParams p = identity_flow(5, 2, 4);
    Vec u = {0.3, -1.2, 0.7, 2.0, -0.4};
    Vec c = {0.1, 0.9};
    FlowResult fw = flow_forward(u, 1, c, p);
    REQUIRE(fw.log_det == 0.0);
    for (size_t i = 0; i < u.size(); ++i) REQUIRE(fw.value[i] == u[i]);
    FlowResult inv = flow_inverse(fw.value, 1, c, p);
    for (size_t i = 0; i < u.size(); ++i) REQUIRE(inv.value[i] == u[i]);
}

TEST_CASE("single constant-scale layer doubles one coordinate", "[flow]") {
    // one layer, mask passes even dims; shift zero, scale net outputs ln 2
    // on the transformed (odd) dim
    FlowParams p = identity_flow(2, 1, 1);
    CouplingLayer& layer = p.stacks[0][0];
    layer.scale_net.b2.data[1] = std::log(2.0);  // raw s before squash
    double squashed = 5.0 * std::tanh(std::log(2.0) / 5.0);
    Vec u = {0.5, 3.0};
    FlowResult fw = flow_forward(u, 0, {0.0, 0.0}, p);
    REQUIRE(fw.value[0] == 0.5);
    REQUIRE(fw.value[1] == Catch::Approx(3.0 * std::exp(squashed)).margin(1e-12));
    REQUIRE(fw.log_det == Catch::Approx(squashed).margin(1e-15));
}

TEST_CASE("flow round trips and log-det antisymmetry", "[flow]") {
    Rng rng(3);
    FlowParams p = random_flow(rng, 4, 3, 4);
    double worst = 0.0, worst_ld = 0.0;
    for (int rep = 0; rep < 1000; ++rep) {
        Vec u = {rng.normal(), rng.normal(), rng.normal(), rng.normal()};
        Vec c = {rng.normal(), rng.normal()};
        int z = static_cast<int>(rng.below(3));
        FlowResult fw = flow_forward(u, z, c, p);
        FlowResult inv = flow_inverse(fw.value, z, c, p);
        for (int d = 0; d < 4; ++d) worst = std::max(worst, std::fabs(inv.value[static_cast<size_t>(d)] - u[static_cast<size_t>(d)]));
        worst_ld = std::max(worst_ld, std::fabs(inv.log_det + fw.log_det));
    }
    REQUIRE(worst < 1e-8);
    REQUIRE(worst_ld < 1e-10);
}

TEST_CASE("analytic log-det matches the numerical jacobian", "[flow]") {
    Rng rng(5);
    FlowParams p = random_flow(rng, 4, 2, 4);
    const double eps = 1e-6;
    for (int rep = 0; rep < 10; ++rep) {
        Vec u = {rng.normal(), rng.normal(), rng.normal(), rng.normal()};
        Vec c = {rng.normal(), rng.normal()};
        int z = static_cast<int>(rng.below(2));
        FlowResult fw = flow_forward(u, z, c, p);
        Tensor jac(4, 4);
        for (int j = 0; j < 4; ++j) {
            Vec up = u, um = u;
            up[static_cast<size_t>(j)] += eps;
            um[static_cast<size_t>(j)] -= eps;
            FlowResult fp = flow_forward(up, z, c, p);
            FlowResult fm = flow_forward(um, z, c, p);
            for (int i = 0; i < 4; ++i)
                jac.at(i, j) = (fp.value[static_cast<size_t>(i)] - fm.value[static_cast<size_t>(i)]) / (2.0 * eps);
        }
        double num_logdet = std::log(std::fabs(det_dense(jac)));
        REQUIRE(std::fabs(fw.log_det - num_logdet) / std::max(1.0, std::fabs(num_logdet)) < 1e-5);
    }
}

TEST_CASE("emission log prob at the origin for the identity flow", "[flow]") {
    FlowParams p = identity_flow(2, 1, 2);
    EmissionLogProb lp = emission_logprob({0.0, 0.0}, 0, {0.0, 0.0}, p);
    REQUIRE(lp.value == Catch::Approx(-std::log(2.0 * 3.14159265358979323846)).margin(1e-12));
    REQUIRE(lp.log_det == 0.0);
}

TEST_CASE("pure translation shifts the density", "[flow]") {
    FlowParams p = identity_flow(3, 1, 1);
    p.stacks[0][0].shift_net.b2 = Tensor(1, 3, {0.7, -0.7, 0.7});  // odd dims transformed
    Vec x = {0.2, 0.9, -0.3};
    EmissionLogProb lp = emission_logprob(x, 0, {0.0, 0.0}, p);
    // only dim 1 is transformed by layer 0's mask
    Vec shifted = x;
    shifted[1] -= -0.7;
    double expect = 0.0;
    for (double v : shifted) expect += -0.5 * (v * v + kLogTwoPi);
    REQUIRE(lp.value == Catch::Approx(expect).margin(1e-12));
}

TEST_CASE("one-dimensional emission density integrates to one", "[flow]") {
    Rng rng(7);
    FlowParams p = random_flow(rng, 1, 2, 4);
    Vec c = {0.4, -1.1};
    for (int z = 0; z < 2; ++z) {
        double lo = flow_forward({-10.0}, z, c, p).value[0];
        double hi = flow_forward({10.0}, z, c, p).value[0];
        if (lo > hi) std::swap(lo, hi);
        const int n = 20000;
        double h = (hi - lo) / n;
        double integral = 0.0;
        for (int i = 0; i <= n; ++i) {
            double x = lo + h * i;
            double w = (i == 0 || i == n) ? 0.5 : 1.0;
            integral += w * std::exp(emission_logprob({x}, z, c, p).value);
        }
        integral *= h;
        REQUIRE(std::fabs(integral - 1.0) < 1e-3);
    }
}

TEST_CASE("scale clamp bounds the log determinant", "[flow]") {
    Rng rng(9);
    FlowParams p = random_flow(rng, 4, 1, 4, false, 25.0);  // wild nets
    for (int rep = 0; rep < 200; ++rep) {
        Vec u = {50.0 * rng.normal(), 50.0 * rng.normal(), 50.0 * rng.normal(), 50.0 * rng.normal()};
        Vec c = {20.0 * rng.normal(), 20.0 * rng.normal()};
        FlowResult fw = flow_forward(u, 0, c, p);
        REQUIRE(std::fabs(fw.log_det) <= 4 * 5.0 * 4 + 1e-9);  // layers * clamp * D
        REQUIRE(std::isfinite(fw.log_det));
    }
}

TEST_CASE("literal eq14 mode transforms every dimension", "[flow]") {
    Rng rng(11);
    FlowParams p = random_flow(rng, 3, 2, 2, true);
    Vec u = {0.1, 0.2, 0.3};
    Vec c = {1.0, -1.0};
    FlowResult fw = flow_forward(u, 0, c, p);
    FlowResult inv = flow_inverse(fw.value, 0, c, p);
    for (int d = 0; d < 3; ++d) REQUIRE(inv.value[static_cast<size_t>(d)] == Catch::Approx(u[static_cast<size_t>(d)]).margin(1e-10));
    // s and t do not depend on u in this mode: same scale applied at any u
    Vec u2 = {5.0, 6.0, 7.0};
    FlowResult fw2 = flow_forward(u2, 0, c, p);
    REQUIRE(fw.log_det == Catch::Approx(fw2.log_det).margin(1e-15));
}

TEST_CASE("gaussian ablation matches closed forms", "[flow]") {
    GaussianEmissionParams p;
    p.dim = 1;
    p.embeddings = Tensor(2, 3);
    p.mean_nets = {Mlp2::zeros(5, 4, 1), Mlp2::zeros(5, 4, 1)};
    p.logvar_nets = {Mlp2::zeros(5, 4, 1), Mlp2::zeros(5, 4, 1)};
    // zero nets: standard normal
    EmissionLogProb lp = gaussian_emission_logprob({0.0}, 0, {0.0, 0.0}, p);
    REQUIRE(lp.value == Catch::Approx(-0.5 * std::log(2.0 * 3.14159265358979323846)).margin(1e-12));

    // matches the identity flow density at any x
    FlowParams f = identity_flow(1, 2, 2);
    for (double x : {-1.5, 0.0, 2.3}) {
        double a = gaussian_emission_logprob({x}, 1, {0.0, 0.0}, p).value;
        double b = emission_logprob({x}, 1, {0.0, 0.0}, f).value;
        REQUIRE(a == Catch::Approx(b).margin(1e-12));
    }

    // log-var = ln 4 at the mean: -0.5 * log(2 pi * 4)
    double raw = std::log(4.0);
    double lv = 5.0 * std::tanh(raw / 5.0);  // squash applied by the op
    p.logvar_nets[0].b2.data[0] = raw;
    double got = gaussian_emission_logprob({0.0}, 0, {0.0, 0.0}, p).value;
    REQUIRE(got == Catch::Approx(-0.5 * (lv + std::log(2.0 * 3.14159265358979323846))).margin(1e-12));
}

TEST_CASE("batched emission graph equals the plain path", "[flow]") {
    Rng rng(13);
    const int D = 5, T = 9;
    FlowParams p = random_flow(rng, D, 2, 3);
    Tensor X(T, D), C(T, 2);
    for (double& v : X.data) v = rng.normal();
    for (double& v : C.data) v = rng.normal();

    Tape tape;
    std::vector<CouplingLayerVars> lv;
    for (const CouplingLayer& l : p.stacks[1]) {
        CouplingLayerVars v;
        v.scale_net = {tape.constant(l.scale_net.w1), tape.constant(l.scale_net.b1),
                       tape.constant(l.scale_net.w2), tape.constant(l.scale_net.b2)};
        v.shift_net = {tape.constant(l.shift_net.w1), tape.constant(l.shift_net.b1),
                       tape.constant(l.shift_net.w2), tape.constant(l.shift_net.b2)};
        lv.push_back(v);
    }
    Tensor emb(1, 3, {p.embeddings.at(1, 0), p.embeddings.at(1, 1), p.embeddings.at(1, 2)});
    Var col = build_flow_emission(tape, tape.constant(X), tape.constant(emb), tape.constant(C),
                                  lv, D, p.scale_clamp, false);
    for (int t = 0; t < T; ++t) {
        Vec x(X.row_ptr(t), X.row_ptr(t) + D);
        Vec c(C.row_ptr(t), C.row_ptr(t) + 2);
        double plain = emission_logprob(x, 1, c, p).value;
        REQUIRE(col.value().data[static_cast<size_t>(t)] == plain);
    }
}

TEST_CASE("emission gradients pass grad_check", "[flow]") {
    Rng rng(17);
    const int D = 3, T = 6;
    FlowParams p = random_flow(rng, D, 1, 2);
    Tensor X(T, D), C(T, 2);
    for (double& v : X.data) v = rng.normal();
    for (double& v : C.data) v = rng.normal();
    Tensor emb(1, 3, {p.embeddings.at(0, 0), p.embeddings.at(0, 1), p.embeddings.at(0, 2)});

    // flatten every net parameter
    std::vector<Tensor*> tensors;
    for (CouplingLayer& l : p.stacks[0])
        for (Tensor* t : {&l.scale_net.w1, &l.scale_net.b1, &l.scale_net.w2, &l.scale_net.b2,
                          &l.shift_net.w1, &l.shift_net.b1, &l.shift_net.w2, &l.shift_net.b2})
            tensors.push_back(t);

    auto build = [&](Tape& tape, bool needs, std::vector<Var>& out_leaves) {
        std::vector<CouplingLayerVars> lv;
        size_t idx = 0;
        for (size_t layer = 0; layer < p.stacks[0].size(); ++layer) {
            CouplingLayerVars v;
            v.scale_net = {tape.leaf(*tensors[idx], needs), tape.leaf(*tensors[idx + 1], needs),
                           tape.leaf(*tensors[idx + 2], needs), tape.leaf(*tensors[idx + 3], needs)};
            v.shift_net = {tape.leaf(*tensors[idx + 4], needs), tape.leaf(*tensors[idx + 5], needs),
                           tape.leaf(*tensors[idx + 6], needs), tape.leaf(*tensors[idx + 7], needs)};
            for (Var vv : {v.scale_net.w1, v.scale_net.b1, v.scale_net.w2, v.scale_net.b2,
                           v.shift_net.w1, v.shift_net.b1, v.shift_net.w2, v.shift_net.b2})
                out_leaves.push_back(vv);
            idx += 8;
            lv.push_back(v);
        }
        Var col = build_flow_emission(tape, tape.constant(X), tape.constant(emb), tape.constant(C),
                                      lv, D, p.scale_clamp, false);
        return ad::sum_all(col);
    };

    Tape tape;
    std::vector<Var> leaves;
    Var loss = build(tape, true, leaves);
    tape.backward(loss);
    Vec theta, analytic;
    for (size_t i = 0; i < tensors.size(); ++i) {
        theta.insert(theta.end(), tensors[i]->data.begin(), tensors[i]->data.end());
        const Tensor& g = tape.grad(leaves[i]);
        analytic.insert(analytic.end(), g.data.begin(), g.data.end());
    }
    auto f = [&](const Vec& vals) {
        std::vector<Tensor> saved;
        for (Tensor* t : tensors) saved.push_back(*t);
        size_t off = 0;
        for (Tensor* t : tensors) {
            std::copy(vals.begin() + static_cast<long>(off),
                      vals.begin() + static_cast<long>(off + t->size()), t->data.begin());
            off += t->size();
        }
        double total = 0.0;
        for (int t = 0; t < T; ++t) {
            Vec x(X.row_ptr(t), X.row_ptr(t) + D);
            Vec c(C.row_ptr(t), C.row_ptr(t) + 2);
            total += emission_logprob(x, 0, c, p).value;
        }
        for (size_t i = 0; i < tensors.size(); ++i) *tensors[i] = saved[i];
        return total;
    };
    REQUIRE(grad_check(f, theta, analytic, 1e-5) < 1e-4);
}

TEST_CASE("flow masks alternate and partition dimensions", "[flow]") {
    for (int dim : {2, 3, 7}) {
        Vec m0 = FlowParams::layer_mask(dim, 0);
        Vec m1 = FlowParams::layer_mask(dim, 1);
        for (int d = 0; d < dim; ++d) {
            REQUIRE(m0[static_cast<size_t>(d)] + m1[static_cast<size_t>(d)] == 1.0);
        }
        REQUIRE(FlowParams::layer_mask(dim, 2) == m0);
    }
}

TEST_CASE("flow rejects bad inputs", "[flow]") {
    FlowParams p = identity_flow(3, 2, 2);
    REQUIRE_THROWS_AS(flow_forward({1.0}, 0, {0.0, 0.0}, p), ShapeError);
    REQUIRE_THROWS_AS(flow_forward({1.0, 2.0, 3.0}, 5, {0.0, 0.0}, p), std::invalid_argument);
    REQUIRE_THROWS_AS(flow_inverse({1.0, 2.0, 3.0}, -1, {0.0, 0.0}, p), std::invalid_argument);
}
