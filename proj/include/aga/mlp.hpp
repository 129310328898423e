#pragma once

#include "aga/autodiff.hpp"
#include "aga/tensor.hpp"

namespace aga {

// Two-layer perceptron with tanh hidden units, row-vector convention:
// out = tanh(x * w1 + b1) * w2 + b2.
struct Mlp2 {
    Tensor w1, b1, w2, b2;

    static Mlp2 zeros(int in, int hidden, int out) {
        Mlp2 m;
        m.w1 = Tensor(in, hidden);
        m.b1 = Tensor(1, hidden);
        m.w2 = Tensor(hidden, out);
        m.b2 = Tensor(1, out);
        return m;
    }

    Vec eval(const Vec& x) const {
        Vec h = vec_mat(x, w1);
        for (int i = 0; i < b1.cols; ++i) h[i] = std::tanh(h[i] + b1.data[i]);
        Vec y = vec_mat(h, w2);
        for (int i = 0; i < b2.cols; ++i) y[i] += b2.data[i];
        return y;
    }
};

struct Mlp2Vars {
    Var w1, b1, w2, b2;
};

// Rows of x are independent inputs.
inline Var build_mlp2(Tape& tape, Var x, const Mlp2Vars& m) {
    const int rows = x.value().rows;
    Var h = ad::tanh_(ad::add(ad::matmul(x, m.w1), ad::repeat_row(m.b1, rows)));
    return ad::add(ad::matmul(h, m.w2), ad::repeat_row(m.b2, rows));
}

}  // namespace aga
