#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "aga/encoder.hpp"
#include "aga/rng.hpp"
#include "aga/wavelet.hpp"

using namespace aga;

namespace {

FinePathParams random_fine(Rng& rng, int in_ch, int out_ch, int kernel, std::vector<int> dil) {
    FinePathParams p = FinePathParams::zeros(in_ch, out_ch, kernel, std::move(dil));
    for (Tensor& w : p.weights)
        for (double& v : w.data) v = 0.3 * rng.normal();
    for (Tensor& b : p.biases)
        for (double& v : b.data) v = 0.1 * rng.normal();
    return p;
}

// explicit orthogonal analysis matrix for one level: rows are the shifted
// lowpass/highpass filters with circular wrap; used to invert by transpose
void dwt_matrix(const Vec& h, int n, Tensor& m) {
    const Vec g = qmf_highpass(h);
    const int half = n / 2;
    const int L = static_cast<int>(h.size());
    m = Tensor(n, n);
    for (int j = 0; j < half; ++j)
        for (int t = 0; t < L; ++t) {
            int idx = ((2 * j + t - (L - 2)) % n + n) % n;
            m.at(j, idx) += h[static_cast<size_t>(t)];
            m.at(half + j, idx) += g[static_cast<size_t>(t)];
        }
}

}  // namespace

TEST_CASE("identity kernel passes nonnegative input through", "[encoder]") {
    // single layer, kernel tap 0 (current sample) = identity matrix
    FinePathParams p = FinePathParams::zeros(3, 3, 5, {1});
    for (int c = 0; c < 3; ++c) p.weights[0].at(c, c) = 1.0;  // tap j=0
    Tensor x(10, 3);
    Rng rng(3);
    for (double& v : x.data) v = rng.uniform(0.0, 2.0);
    Tensor y = dilated_causal_conv(x, p);
    for (size_t i = 0; i < x.data.size(); ++i) REQUIRE(y.data[i] == x.data[i]);
}

TEST_CASE("convolution stack is strictly causal", "[encoder]") {
    Rng rng(5);
    FinePathParams p = random_fine(rng, 4, 6, 3, {1, 2});
    Tensor x(30, 4);
    for (double& v : x.data) v = rng.normal();
    Tensor base = dilated_causal_conv(x, p);
    const int cut = 14;
    Tensor x2 = x;
    for (int c = 0; c < 4; ++c) x2.at(cut + 1, c) += 10.0;
    Tensor pert = dilated_causal_conv(x2, p);
    for (int t = 0; t <= cut; ++t)
        for (int c = 0; c < 6; ++c) REQUIRE(base.at(t, c) == pert.at(t, c));
    // and the step after the cut does change
    bool changed = false;
    for (int c = 0; c < 6; ++c) changed = changed || base.at(cut + 1, c) != pert.at(cut + 1, c);
    REQUIRE(changed);
}

TEST_CASE("receptive field is 61 steps for kernel 5 and dilations 1,2,4,8", "[encoder]") {
    Rng rng(7);
    FinePathParams p = random_fine(rng, 2, 4, 5, {1, 2, 4, 8});
    REQUIRE(p.receptive_field() == 61);
    const int T = 80;
    Tensor x(T, 2);
    for (double& v : x.data) v = rng.uniform(0.1, 1.0);
    Tensor base = dilated_causal_conv(x, p);
    const int probe = T - 1;
    // perturbation sweep: lags inside the receptive field affect the output,
    // older lags cannot
    int oldest_affecting = -1;
    for (int lag = 0; lag < 70; ++lag) {
        Tensor x2 = x;
        for (int c = 0; c < 2; ++c) x2.at(probe - lag, c) += 1.0;
        Tensor pert = dilated_causal_conv(x2, p);
        bool changed = false;
        for (int c = 0; c < 4; ++c) changed = changed || base.at(probe, c) != pert.at(probe, c);
        if (changed) oldest_affecting = lag;
        if (lag >= 61) REQUIRE(!changed);
    }
    REQUIRE(oldest_affecting == 60);  // lag 60 = 61 steps including the current one
}

TEST_CASE("convolution reports channel mismatches", "[encoder]") {
    FinePathParams p = FinePathParams::zeros(3, 4, 5, {1, 2});
    Tensor x(10, 2);  // wrong channel count
    REQUIRE_THROWS_AS(dilated_causal_conv(x, p), ShapeError);
}

TEST_CASE("haar dwt on a constant signal", "[encoder]") {
    WaveletParams p = WaveletParams::haar(1);
    Vec x(16, 3.0);
    DwtCoeffs c = learnable_dwt(x, p);
    REQUIRE(c.approx.size() == 8);
    for (double a : c.approx) REQUIRE(a == Catch::Approx(3.0 * std::sqrt(2.0)).margin(1e-12));
    for (double d : c.details[0]) REQUIRE(d == Catch::Approx(0.0).margin(1e-15));
}

TEST_CASE("dwt energy is conserved at orthonormal filters", "[encoder]") {
    Rng rng(11);
    Vec x(64);
    for (double& v : x) v = rng.normal();
    for (WaveletParams p : {WaveletParams::haar(3), WaveletParams::daubechies4(3)}) {
        DwtCoeffs c = learnable_dwt(x, p);
        REQUIRE(coeff_energy(c) == Catch::Approx(signal_energy(x)).margin(1e-9));
    }
}

TEST_CASE("dwt inverse cascade reconstructs the input", "[encoder]") {
    Rng rng(13);
    Vec x(32);
    for (double& v : x) v = rng.normal();
    for (WaveletParams p : {WaveletParams::haar(3), WaveletParams::daubechies4(2)}) {
        DwtCoeffs c = learnable_dwt(x, p);
        // invert level by level using the transpose of the explicit matrix
        Vec h(p.lowpass.data);
        Vec cur = c.approx;
        for (int lev = p.levels - 1; lev >= 0; --lev) {
            const Vec& det = c.details[static_cast<size_t>(lev)];
            int n = static_cast<int>(cur.size() + det.size());
            Tensor m;
            dwt_matrix(h, n, m);
            Vec coeff(cur);
            coeff.insert(coeff.end(), det.begin(), det.end());
            Vec rec(static_cast<size_t>(n), 0.0);
            for (int r = 0; r < n; ++r)
                for (int col = 0; col < n; ++col) rec[static_cast<size_t>(col)] += m.at(r, col) * coeff[static_cast<size_t>(r)];
            cur = rec;
        }
        for (size_t i = 0; i < x.size(); ++i) REQUIRE(cur[i] == Catch::Approx(x[i]).margin(1e-9));
    }
}

TEST_CASE("dwt validates arguments and pads by reflection", "[encoder]") {
    WaveletParams p = WaveletParams::haar(2);
    REQUIRE_THROWS_AS(learnable_dwt(Vec{1.0}, p), std::invalid_argument);
    // length 6 is not divisible by 4: left-padded by reflection to length 8
    DwtCoeffs c = learnable_dwt(Vec{1, 2, 3, 4, 5, 6}, p);
    REQUIRE(c.approx.size() == 2);
    REQUIRE(c.details[0].size() == 4);
    WaveletParams bad = p;
    bad.lowpass = Tensor(1, 3, {0.5, 0.5, 0.5});
    REQUIRE_THROWS_AS(learnable_dwt(Vec{1, 2, 3, 4}, bad), std::invalid_argument);
}

TEST_CASE("qmf highpass mirrors the lowpass", "[encoder]") {
    Vec g = qmf_highpass({0.1, 0.7});
    REQUIRE(g[0] == 0.7);
    REQUIRE(g[1] == -0.1);
    // orthogonality of the Haar pair
    Vec h = {1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0)};
    Vec gh = qmf_highpass(h);
    REQUIRE(h[0] * gh[0] + h[1] * gh[1] == Catch::Approx(0.0).margin(1e-15));
}

TEST_CASE("lstm step at zero parameters", "[encoder]") {
    LstmParams p = LstmParams::zeros(3, 4);
    LstmState s{Vec(4, 0.0), Vec(4, 0.0)};
    LstmState n = lstm_step({0, 0, 0}, s, p);
    for (double v : n.h) REQUIRE(v == 0.0);
    for (double v : n.c) REQUIRE(v == 0.0);

    // zero weights with c_prev = 1: gates 0.5, candidate 0 -> c = 0.5,
    // h = 0.5 * tanh(0.5)
    s.c.assign(4, 1.0);
    n = lstm_step({0, 0, 0}, s, p);
    for (double v : n.c) REQUIRE(v == Catch::Approx(0.5).margin(1e-15));
    for (double v : n.h) REQUIRE(v == Catch::Approx(0.5 * std::tanh(0.5)).margin(1e-15));
}

TEST_CASE("lstm step is deterministic and checks shapes", "[encoder]") {
    Rng rng(17);
    LstmParams p = LstmParams::zeros(2, 3);
    for (Tensor* w : {&p.wi, &p.wf, &p.wg, &p.wo})
        for (double& v : w->data) v = rng.normal();
    LstmState s{Vec(3, 0.1), Vec(3, -0.2)};
    LstmState a = lstm_step({0.5, -1.0}, s, p);
    LstmState b = lstm_step({0.5, -1.0}, s, p);
    for (int i = 0; i < 3; ++i) {
        REQUIRE(a.h[static_cast<size_t>(i)] == b.h[static_cast<size_t>(i)]);
        REQUIRE(a.c[static_cast<size_t>(i)] == b.c[static_cast<size_t>(i)]);
    }
    REQUIRE_THROWS_AS(lstm_step({0.5}, s, p), ShapeError);
}

TEST_CASE("lstm batch graph matches the streaming step", "[encoder]") {
    Rng rng(19);
    LstmParams p = LstmParams::zeros(3, 5);
    for (Tensor* w : {&p.wi, &p.wf, &p.wg, &p.wo})
        for (double& v : w->data) v = 0.4 * rng.normal();
    for (Tensor* b : {&p.bi, &p.bf, &p.bg, &p.bo})
        for (double& v : b->data) v = 0.1 * rng.normal();

    Tensor xs(6, 3);
    for (double& v : xs.data) v = rng.normal();

    Tape tape;
    std::vector<Var> w = {tape.constant(p.wi), tape.constant(p.wf), tape.constant(p.wg),
                          tape.constant(p.wo)};
    std::vector<Var> b = {tape.constant(p.bi), tape.constant(p.bf), tape.constant(p.bg),
                          tape.constant(p.bo)};
    LstmVars sv{tape.constant(Tensor(1, 5)), tape.constant(Tensor(1, 5))};
    LstmState ss{Vec(5, 0.0), Vec(5, 0.0)};
    for (int t = 0; t < 6; ++t) {
        sv = build_lstm_step(tape, ad::row_get(tape.constant(xs), t), sv, w, b);
        Vec xrow(xs.row_ptr(t), xs.row_ptr(t) + 3);
        ss = lstm_step(xrow, ss, p);
        for (int i = 0; i < 5; ++i) {
            REQUIRE(sv.h.value().data[static_cast<size_t>(i)] == ss.h[static_cast<size_t>(i)]);
            REQUIRE(sv.c.value().data[static_cast<size_t>(i)] == ss.c[static_cast<size_t>(i)]);
        }
    }
}

TEST_CASE("fine path gradient passes grad_check", "[encoder]") {
    Rng rng(23);
    const int T = 12, in_ch = 2, out_ch = 3;
    FinePathParams p = random_fine(rng, in_ch, out_ch, 3, {1, 2});
    Tensor x(T, in_ch);
    for (double& v : x.data) v = rng.normal();

    Tape tape;
    std::vector<Var> w, b;
    for (Tensor& t : p.weights) w.push_back(tape.leaf(t, true));
    for (Tensor& t : p.biases) b.push_back(tape.leaf(t, true));
    Var out = build_fine_path(tape, tape.constant(x), w, b, p.kernel, p.dilations);
    Var loss = ad::sum_all(ad::mul(out, out));
    tape.backward(loss);

    // flatten all parameters and compare against central differences
    std::vector<Tensor*> tensors;
    for (Tensor& t : p.weights) tensors.push_back(&t);
    for (Tensor& t : p.biases) tensors.push_back(&t);
    Vec theta, analytic;
    for (size_t i = 0; i < w.size(); ++i) {
        const Tensor& g = tape.grad(w[i]);
        theta.insert(theta.end(), p.weights[i].data.begin(), p.weights[i].data.end());
        analytic.insert(analytic.end(), g.data.begin(), g.data.end());
    }
    for (size_t i = 0; i < b.size(); ++i) {
        const Tensor& g = tape.grad(b[i]);
        theta.insert(theta.end(), p.biases[i].data.begin(), p.biases[i].data.end());
        analytic.insert(analytic.end(), g.data.begin(), g.data.end());
    }
    auto f = [&](const Vec& vals) {
        size_t off = 0;
        FinePathParams q = p;
        for (Tensor& t : q.weights) {
            std::copy(vals.begin() + static_cast<long>(off), vals.begin() + static_cast<long>(off + t.size()), t.data.begin());
            off += t.size();
        }
        for (Tensor& t : q.biases) {
            std::copy(vals.begin() + static_cast<long>(off), vals.begin() + static_cast<long>(off + t.size()), t.data.begin());
            off += t.size();
        }
        Tensor y = dilated_causal_conv(x, q);
        double acc = 0.0;
        for (double v : y.data) acc += v * v;
        return acc;
    };
    REQUIRE(grad_check(f, theta, analytic, 1e-5) < 1e-4);
}
