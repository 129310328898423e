#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "aga/error.hpp"
#include "aga/numerics.hpp"
#include "aga/tensor.hpp"

namespace aga {

// Reverse-mode accumulation over Tensor-valued expressions. Each op records
// its output on the tape together with a hand-derived pullback; backward()
// sweeps the tape once in reverse creation order (creation order is already
// topological). Single-owner, not thread-safe; one tape per loss evaluation.
class Tape {
  public:
    struct Var {
        Tape* tape = nullptr;
        int id = -1;
        bool valid() const { return tape != nullptr && id >= 0; }
        const Tensor& value() const { return tape->val(id); }
    };

    const Tensor& val(int id) const { return nodes_[id].value; }
    const Tensor& grad(Var v) const {
        const Node& n = nodes_[v.id];
        if (n.grad.data.empty())
            const_cast<Node&>(n).grad = Tensor(n.value.rows, n.value.cols);
        return n.grad;
    }
    bool requires_grad(Var v) const { return nodes_[v.id].needs; }
    size_t node_count() const { return nodes_.size(); }

    void clear() { nodes_.clear(); }

    Var leaf(Tensor value, bool needs) {
        return push(std::move(value), needs, nullptr);
    }
    Var constant(Tensor value) { return leaf(std::move(value), false); }

    void backward(Var loss) {
        Node& top = nodes_[loss.id];
        if (top.value.size() != 1) throw ShapeError("backward: loss must be a scalar");
        ensure_grad(loss.id);
        top.grad.data[0] = 1.0;
        for (int i = loss.id; i >= 0; --i) {
            Node& n = nodes_[i];
            if (n.needs && n.back && !n.grad.data.empty()) n.back(*this, i);
        }
    }

    // --- internals used by the op implementations ---

    Var push(Tensor value, bool needs, std::function<void(Tape&, int)> back) {
        nodes_.push_back(Node{std::move(value), Tensor(), needs, std::move(back)});
        return Var{this, static_cast<int>(nodes_.size()) - 1};
    }

    template <class F>
    Var push_op(Tensor value, bool needs, F&& back) {
        std::function<void(Tape&, int)> fn;
        if (needs) fn = std::forward<F>(back);
        return push(std::move(value), needs, std::move(fn));
    }

    void accum(int id, const Tensor& g) {
        Node& n = nodes_[id];
        if (!n.needs) return;
        if (n.grad.data.empty()) {
            n.grad = g;
        } else {
            for (size_t i = 0; i < g.data.size(); ++i) n.grad.data[i] += g.data[i];
        }
    }

    Tensor& grad_ref(int id) {
        ensure_grad(id);
        return nodes_[id].grad;
    }
    bool wants(int id) const { return nodes_[id].needs; }

  private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool needs = false;
        std::function<void(Tape&, int)> back;
    };

    void ensure_grad(int id) {
        Node& n = nodes_[id];
        if (n.grad.data.empty()) n.grad = Tensor(n.value.rows, n.value.cols);
    }

    std::vector<Node> nodes_;
};

using Var = Tape::Var;

namespace ad {

inline Var add(Var a, Var b) {
    Tape& tp = *a.tape;
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    check_same_shape(A, B, "ad::add");
    Tensor out = A;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += B.data[i];
    bool req = tp.requires_grad(a) || tp.requires_grad(b);
    int ai = a.id, bi = b.id;
    return tp.push_op(std::move(out), req, [ai, bi](Tape& t, int self) {
        const Tensor& g = t.grad_ref(self);
        t.accum(ai, g);
        t.accum(bi, g);
    });
}

inline Var sub(Var a, Var b) {
    Tape& tp = *a.tape;
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    check_same_shape(A, B, "ad::sub");
    Tensor out = A;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= B.data[i];
    bool req = tp.requires_grad(a) || tp.requires_grad(b);
    int ai = a.id, bi = b.id;
    return tp.push_op(std::move(out), req, [ai, bi](Tape& t, int self) {
        const Tensor& g = t.grad_ref(self);
        t.accum(ai, g);
        if (t.wants(bi)) {
            Tensor ng = g;
            for (double& x : ng.data) x = -x;
            t.accum(bi, ng);
        }
    });
}

// Elementwise product.
inline Var mul(Var a, Var b) {
    Tape& tp = *a.tape;
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    check_same_shape(A, B, "ad::mul");
    Tensor out = A;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= B.data[i];
    bool req = tp.requires_grad(a) || tp.requires_grad(b);
    int ai = a.id, bi = b.id;
    return tp.push_op(std::move(out), req, [ai, bi](Tape& t, int self) {
        const Tensor& g = t.grad_ref(self);
        if (t.wants(ai)) {
            Tensor ga = g;
            const Tensor& B2 = t.val(bi);
            for (size_t i = 0; i < ga.data.size(); ++i) ga.data[i] *= B2.data[i];
            t.accum(ai, ga);
        }
        if (t.wants(bi)) {
            Tensor gb = g;
            const Tensor& A2 = t.val(ai);
            for (size_t i = 0; i < gb.data.size(); ++i) gb.data[i] *= A2.data[i];
            t.accum(bi, gb);
        }
    });
}

inline Var mul_scalar(Var a, double c) {
    Tape& tp = *a.tape;
    Tensor out = a.value();
    for (double& x : out.data) x *= c;
    bool req = tp.requires_grad(a);
    int ai = a.id;
    return tp.push_op(std::move(out), req, [ai, c](Tape& t, int self) {
        Tensor g = t.grad_ref(self);
        for (double& x : g.data) x *= c;
        t.accum(ai, g);
    });
}

inline Var add_scalar(Var a, double c) {
    Tape& tp = *a.tape;
    Tensor out = a.value();
    for (double& x : out.data) x += c;
    bool req = tp.requires_grad(a);
    int ai = a.id;
    return tp.push_op(std::move(out), req, [ai](Tape& t, int self) {
        t.accum(ai, t.grad_ref(self));
    });
}

// Multiply a tensor by a 1x1 tape scalar.
inline Var scale(Var a, Var s) {
    Tape& tp = *a.tape;
    if (s.value().size() != 1) throw ShapeError("ad::scale: scalar must be 1x1");
    const double sv = s.value().data[0];
    Tensor out = a.value();
    for (double& x : out.data) x *= sv;
    bool req = tp.requires_grad(a) || tp.requires_grad(s);
    int ai = a.id, si = s.id;
    return tp.push_op(std::move(out), req, [ai, si, sv](Tape& t, int self) {
        const Tensor& g = t.grad_ref(self);
        if (t.wants(ai)) {
            Tensor ga = g;
            for (double& x : ga.data) x *= sv;
            t.accum(ai, ga);
        }
        if (t.wants(si)) {
            const Tensor& A = t.val(ai);
            double acc = 0.0;
            for (size_t i = 0; i < g.data.size(); ++i) acc += g.data[i] * A.data[i];
            t.accum(si, Tensor(1, 1, {acc}));
        }
    });
}

// out[t][c] = a[t][c] / d[t]   (d is R x 1)
inline Var div_colvec(Var a, Var d) {
    Tape& tp = *a.tape;
    const Tensor& A = a.value();
    const Tensor& D = d.value();
    if (D.rows != A.rows || D.cols != 1) throw ShapeError("ad::div_colvec: divisor must be Rx1");
    Tensor out = A;
    for (int r = 0; r < A.rows; ++r) {
        double* row = out.row_ptr(r);
        for (int c = 0; c < A.cols; ++c) row[c] /= D.data[r];
    }
    bool req = tp.requires_grad(a) || tp.requires_grad(d);
    int ai = a.id, di = d.id;
    return tp.push_op(std::move(out), req, [ai, di](Tape& t, int self) {
        const Tensor& g = t.grad_ref(self);
        const Tensor& O = t.val(self);
        const Tensor& D2 = t.val(di);
        if (t.wants(ai)) {
            Tensor ga = g;
            for (int r = 0; r < ga.rows; ++r) {
                double inv = 1.0 / D2.data[r];
                double* row = ga.row_ptr(r);
                for (int c = 0; c < ga.cols; ++c) row[c] *= inv;
            }
            t.accum(ai, ga);
        }
        if (t.wants(di)) {
            Tensor gd(D2.rows, 1);
            for (int r = 0; r < g.rows; ++r) {
                double acc = 0.0;
                const double* grow = g.row_ptr(r);
                const double* orow = O.row_ptr(r);
                for (int c = 0; c < g.cols; ++c) acc += grow[c] * orow[c];
                gd.data[r] = -acc / D2.data[r];
            }
            t.accum(di, gd);
        }
    });
}

inline Var matmul(Var a, Var b) {
    Tape& tp = *a.tape;
    Tensor out = aga::matmul(a.value(), b.value());
    bool req = tp.requires_grad(a) || tp.requires_grad(b);
    int ai = a.id, bi = b.id;
    return tp.push_op(std::move(out), req, [ai, bi](Tape& t, int self) {
        const Tensor& g = t.grad_ref(self);
        if (t.wants(ai)) t.accum(ai, aga::matmul_nt(g, t.val(bi)));
        if (t.wants(bi)) t.accum(bi, aga::matmul_tn(t.val(ai), g));
    });
}

// out = A * B^T
inline Var matmul_nt(Var a, Var b) {
    Tape& tp = *a.tape;
    Tensor out = aga::matmul_nt(a.value(), b.value());
    bool req = tp.requires_grad(a) || tp.requires_grad(b);
    int ai = a.id, bi = b.id;
    return tp.push_op(std::move(out), req, [ai, bi](Tape& t, int self) {
        const Tensor& g = t.grad_ref(self);
        if (t.wants(ai)) t.accum(ai, aga::matmul(g, t.val(bi)));
        if (t.wants(bi)) t.accum(bi, aga::matmul_tn(g, t.val(ai)));
    });
}

inline Var relu(Var a) {
    Tape& tp = *a.tape;
    Tensor out = a.value();
    for (double& x : out.data) x = x > 0.0 ? x : 0.0;
    bool req = tp.requires_grad(a);
    int ai = a.id;
    return tp.push_op(std::move(out), req, [ai](Tape& t, int self) {
        Tensor g = t.grad_ref(self);
        const Tensor& A = t.val(ai);
        for (size_t i = 0; i < g.data.size(); ++i)
            if (A.data[i] <= 0.0) g.data[i] = 0.0;
        t.accum(ai, g);
    });
}

inline Var tanh_(Var a) {
    Tape& tp = *a.tape;
    Tensor out = a.value();
    for (double& x : out.data) x = std::tanh(x);
    bool req = tp.requires_grad(a);
    int ai = a.id;
    return tp.push_op(std::move(out), req, [ai](Tape& t, int self) {
        Tensor g = t.grad_ref(self);
        const Tensor& Y = t.val(self);
        for (size_t i = 0; i < g.data.size(); ++i) g.data[i] *= 1.0 - Y.data[i] * Y.data[i];
        t.accum(ai, g);
    });
}

inline Var sigmoid_(Var a) {
    Tape& tp = *a.tape;
    Tensor out = a.value();
    for (double& x : out.data) x = aga::sigmoid(x);
    bool req = tp.requires_grad(a);
    int ai = a.id;
    return tp.push_op(std::move(out), req, [ai](Tape& t, int self) {
        Tensor g = t.grad_ref(self);
        const Tensor& Y = t.val(self);
        for (size_t i = 0; i < g.data.size(); ++i) g.data[i] *= Y.data[i] * (1.0 - Y.data[i]);
        t.accum(ai, g);
    });
}

inline Var exp_(Var a) {
    Tape& tp = *a.tape;
    Tensor out = a.value();
    for (double& x : out.data) x = std::exp(x);
    bool req = tp.requires_grad(a);
    int ai = a.id;
    return tp.push_op(std::move(out), req, [ai](Tape& t, int self) {
        Tensor g = t.grad_ref(self);
        const Tensor& Y = t.val(self);
        for (size_t i = 0; i < g.data.size(); ++i) g.data[i] *= Y.data[i];
        t.accum(ai, g);
    });
}

inline Var log_(Var a) {
    Tape& tp = *a.tape;
    Tensor out = a.value();
    for (double& x : out.data) x = std::log(x);
    bool req = tp.requires_grad(a);
    int ai = a.id;
    return tp.push_op(std::move(out), req, [ai](Tape& t, int self) {
        Tensor g = t.grad_ref(self);
        const Tensor& A = t.val(ai);
        for (size_t i = 0; i < g.data.size(); ++i) g.data[i] /= A.data[i];
        t.accum(ai, g);
    });
}

inline Var sqrt_(Var a) {
    Tape& tp = *a.tape;
    Tensor out = a.value();
    for (double& x : out.data) x = std::sqrt(x);
    bool req = tp.requires_grad(a);
    int ai = a.id;
    return tp.push_op(std::move(out), req, [ai](Tape& t, int self) {
        Tensor g = t.grad_ref(self);
        const Tensor& Y = t.val(self);
        for (size_t i = 0; i < g.data.size(); ++i) g.data[i] *= 0.5 / Y.data[i];
        t.accum(ai, g);
    });
}

// Smooth clamp to (-bound, bound): bound * tanh(x / bound). Identity-like
// near zero, used to keep flow log-scales bounded.
inline Var squash(Var a, double bound) {
    Tape& tp = *a.tape;
    Tensor out = a.value();
    for (double& x : out.data) x = bound * std::tanh(x / bound);
    bool req = tp.requires_grad(a);
    int ai = a.id;
    return tp.push_op(std::move(out), req, [ai, bound](Tape& t, int self) {
        Tensor g = t.grad_ref(self);
        const Tensor& Y = t.val(self);
        for (size_t i = 0; i < g.data.size(); ++i) {
            double th = Y.data[i] / bound;
            g.data[i] *= 1.0 - th * th;
        }
        t.accum(ai, g);
    });
}

inline Var softplus_(Var a) {
    Tape& tp = *a.tape;
    Tensor out = a.value();
    for (double& x : out.data) x = aga::softplus(x);
    bool req = tp.requires_grad(a);
    int ai = a.id;
    return tp.push_op(std::move(out), req, [ai](Tape& t, int self) {
        Tensor g = t.grad_ref(self);
        const Tensor& A = t.val(ai);
        for (size_t i = 0; i < g.data.size(); ++i) g.data[i] *= aga::sigmoid(A.data[i]);
        t.accum(ai, g);
    });
}

inline Var sum_all(Var a) {
    Tape& tp = *a.tape;
    double acc = 0.0;
    for (double x : a.value().data) acc += x;
    bool req = tp.requires_grad(a);
    int ai = a.id;
    return tp.push_op(Tensor(1, 1, {acc}), req, [ai](Tape& t, int self) {
        double g = t.grad_ref(self).data[0];
        const Tensor& A = t.val(ai);
        t.accum(ai, Tensor::full(A.rows, A.cols, g));
    });
}

inline Var mean_all(Var a) { return mul_scalar(sum_all(a), 1.0 / a.value().size()); }

inline Var sum_axis0(Var a) {  // R x C -> 1 x C
    Tape& tp = *a.tape;
    const Tensor& A = a.value();
    Tensor out(1, A.cols);
    for (int r = 0; r < A.rows; ++r) {
        const double* row = A.row_ptr(r);
        for (int c = 0; c < A.cols; ++c) out.data[c] += row[c];
    }
    bool req = tp.requires_grad(a);
    int ai = a.id;
    return tp.push_op(std::move(out), req, [ai](Tape& t, int self) {
        const Tensor& g = t.grad_ref(self);
        const Tensor& A2 = t.val(ai);
        Tensor ga(A2.rows, A2.cols);
        for (int r = 0; r < A2.rows; ++r)
            for (int c = 0; c < A2.cols; ++c) ga.at(r, c) = g.data[c];
        t.accum(ai, ga);
    });
}

inline Var sum_axis1(Var a) {  // R x C -> R x 1
    Tape& tp = *a.tape;
    const Tensor& A = a.value();
    Tensor out(A.rows, 1);
    for (int r = 0; r < A.rows; ++r) {
        const double* row = A.row_ptr(r);
        double acc = 0.0;
        for (int c = 0; c < A.cols; ++c) acc += row[c];
        out.data[r] = acc;
    }
    bool req = tp.requires_grad(a);
    int ai = a.id;
    return tp.push_op(std::move(out), req, [ai](Tape& t, int self) {
        const Tensor& g = t.grad_ref(self);
        const Tensor& A2 = t.val(ai);
        Tensor ga(A2.rows, A2.cols);
        for (int r = 0; r < A2.rows; ++r)
            for (int c = 0; c < A2.cols; ++c) ga.at(r, c) = g.data[r];
        t.accum(ai, ga);
    });
}

inline Var logsumexp_axis0(Var a) {  // R x C -> 1 x C
    Tape& tp = *a.tape;
    const Tensor& A = a.value();
    Tensor out(1, A.cols);
    for (int c = 0; c < A.cols; ++c) {
        double maxv = A.at(0, c);
        for (int r = 1; r < A.rows; ++r) maxv = std::max(maxv, A.at(r, c));
        double sum = 0.0;
        for (int r = 0; r < A.rows; ++r) sum += std::exp(A.at(r, c) - maxv);
        out.data[c] = maxv + std::log(sum);
    }
    bool req = tp.requires_grad(a);
    int ai = a.id;
    return tp.push_op(std::move(out), req, [ai](Tape& t, int self) {
        const Tensor& g = t.grad_ref(self);
        const Tensor& Y = t.val(self);
        const Tensor& A2 = t.val(ai);
        Tensor ga(A2.rows, A2.cols);
        for (int r = 0; r < A2.rows; ++r)
            for (int c = 0; c < A2.cols; ++c)
                ga.at(r, c) = g.data[c] * std::exp(A2.at(r, c) - Y.data[c]);
        t.accum(ai, ga);
    });
}

inline Var logsumexp_axis1(Var a) {  // R x C -> R x 1
    Tape& tp = *a.tape;
    const Tensor& A = a.value();
    Tensor out(A.rows, 1);
    for (int r = 0; r < A.rows; ++r) out.data[r] = aga::logsumexp(A.row_ptr(r), A.cols);
    bool req = tp.requires_grad(a);
    int ai = a.id;
    return tp.push_op(std::move(out), req, [ai](Tape& t, int self) {
        const Tensor& g = t.grad_ref(self);
        const Tensor& Y = t.val(self);
        const Tensor& A2 = t.val(ai);
        Tensor ga(A2.rows, A2.cols);
        for (int r = 0; r < A2.rows; ++r)
            for (int c = 0; c < A2.cols; ++c)
                ga.at(r, c) = g.data[r] * std::exp(A2.at(r, c) - Y.data[r]);
        t.accum(ai, ga);
    });
}

inline Var slice_cols(Var a, int c0, int c1) {
    Tape& tp = *a.tape;
    const Tensor& A = a.value();
    if (c0 < 0 || c1 > A.cols || c0 >= c1) throw ShapeError("ad::slice_cols: bad range");
    Tensor out(A.rows, c1 - c0);
    for (int r = 0; r < A.rows; ++r)
        for (int c = c0; c < c1; ++c) out.at(r, c - c0) = A.at(r, c);
    bool req = tp.requires_grad(a);
    int ai = a.id;
    return tp.push_op(std::move(out), req, [ai, c0](Tape& t, int self) {
        const Tensor& g = t.grad_ref(self);
        const Tensor& A2 = t.val(ai);
        Tensor ga(A2.rows, A2.cols);
        for (int r = 0; r < g.rows; ++r)
            for (int c = 0; c < g.cols; ++c) ga.at(r, c0 + c) = g.at(r, c);
        t.accum(ai, ga);
    });
}

inline Var slice_rows(Var a, int r0, int r1) {
    Tape& tp = *a.tape;
    const Tensor& A = a.value();
    if (r0 < 0 || r1 > A.rows || r0 >= r1) throw ShapeError("ad::slice_rows: bad range");
    Tensor out(r1 - r0, A.cols);
    for (int r = r0; r < r1; ++r)
        for (int c = 0; c < A.cols; ++c) out.at(r - r0, c) = A.at(r, c);
    bool req = tp.requires_grad(a);
    int ai = a.id;
    return tp.push_op(std::move(out), req, [ai, r0](Tape& t, int self) {
        const Tensor& g = t.grad_ref(self);
        const Tensor& A2 = t.val(ai);
        Tensor ga(A2.rows, A2.cols);
        for (int r = 0; r < g.rows; ++r)
            for (int c = 0; c < g.cols; ++c) ga.at(r0 + r, c) = g.at(r, c);
        t.accum(ai, ga);
    });
}

inline Var row_get(Var a, int r) { return slice_rows(a, r, r + 1); }

inline Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("ad::concat_cols: empty");
    Tape& tp = *parts[0].tape;
    int rows = parts[0].value().rows;
    int cols = 0;
    bool req = false;
    for (const Var& p : parts) {
        if (p.value().rows != rows) throw ShapeError("ad::concat_cols: row mismatch");
        cols += p.value().cols;
        req = req || tp.requires_grad(p);
    }
    Tensor out(rows, cols);
    int off = 0;
    std::vector<int> ids;
    std::vector<int> widths;
    for (const Var& p : parts) {
        const Tensor& P = p.value();
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < P.cols; ++c) out.at(r, off + c) = P.at(r, c);
        ids.push_back(p.id);
        widths.push_back(P.cols);
        off += P.cols;
    }
    return tp.push_op(std::move(out), req, [ids, widths](Tape& t, int self) {
        const Tensor& g = t.grad_ref(self);
        int off2 = 0;
        for (size_t k = 0; k < ids.size(); ++k) {
            if (t.wants(ids[k])) {
                Tensor gk(g.rows, widths[k]);
                for (int r = 0; r < g.rows; ++r)
                    for (int c = 0; c < widths[k]; ++c) gk.at(r, c) = g.at(r, off2 + c);
                t.accum(ids[k], gk);
            }
            off2 += widths[k];
        }
    });
}

inline Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("ad::concat_rows: empty");
    Tape& tp = *parts[0].tape;
    int cols = parts[0].value().cols;
    int rows = 0;
    bool req = false;
    for (const Var& p : parts) {
        if (p.value().cols != cols) throw ShapeError("ad::concat_rows: col mismatch");
        rows += p.value().rows;
        req = req || tp.requires_grad(p);
    }
    Tensor out(rows, cols);
    int off = 0;
    std::vector<int> ids;
    std::vector<int> heights;
    for (const Var& p : parts) {
        const Tensor& P = p.value();
        for (int r = 0; r < P.rows; ++r)
            for (int c = 0; c < cols; ++c) out.at(off + r, c) = P.at(r, c);
        ids.push_back(p.id);
        heights.push_back(P.rows);
        off += P.rows;
    }
    return tp.push_op(std::move(out), req, [ids, heights](Tape& t, int self) {
        const Tensor& g = t.grad_ref(self);
        int off2 = 0;
        for (size_t k = 0; k < ids.size(); ++k) {
            if (t.wants(ids[k])) {
                Tensor gk(heights[k], g.cols);
                for (int r = 0; r < heights[k]; ++r)
                    for (int c = 0; c < g.cols; ++c) gk.at(r, c) = g.at(off2 + r, c);
                t.accum(ids[k], gk);
            }
            off2 += heights[k];
        }
    });
}

inline Var repeat_row(Var a, int n) {  // 1 x C -> n x C
    Tape& tp = *a.tape;
    const Tensor& A = a.value();
    if (A.rows != 1) throw ShapeError("ad::repeat_row: input must be 1xC");
    Tensor out(n, A.cols);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < A.cols; ++c) out.at(r, c) = A.data[c];
    bool req = tp.requires_grad(a);
    int ai = a.id;
    return tp.push_op(std::move(out), req, [ai](Tape& t, int self) {
        const Tensor& g = t.grad_ref(self);
        Tensor ga(1, g.cols);
        for (int r = 0; r < g.rows; ++r)
            for (int c = 0; c < g.cols; ++c) ga.data[c] += g.at(r, c);
        t.accum(ai, ga);
    });
}

inline Var repeat_col(Var a, int n) {  // R x 1 -> R x n
    Tape& tp = *a.tape;
    const Tensor& A = a.value();
    if (A.cols != 1) throw ShapeError("ad::repeat_col: input must be Rx1");
    Tensor out(A.rows, n);
    for (int r = 0; r < A.rows; ++r)
        for (int c = 0; c < n; ++c) out.at(r, c) = A.data[r];
    bool req = tp.requires_grad(a);
    int ai = a.id;
    return tp.push_op(std::move(out), req, [ai](Tape& t, int self) {
        const Tensor& g = t.grad_ref(self);
        Tensor ga(g.rows, 1);
        for (int r = 0; r < g.rows; ++r)
            for (int c = 0; c < g.cols; ++c) ga.data[r] += g.at(r, c);
        t.accum(ai, ga);
    });
}

inline Var reshape(Var a, int rows, int cols) {
    Tape& tp = *a.tape;
    const Tensor& A = a.value();
    if (static_cast<size_t>(rows) * cols != A.size()) throw ShapeError("ad::reshape: size mismatch");
    Tensor out(rows, cols, A.data);
    bool req = tp.requires_grad(a);
    int ai = a.id;
    return tp.push_op(std::move(out), req, [ai](Tape& t, int self) {
        const Tensor& g = t.grad_ref(self);
        const Tensor& A2 = t.val(ai);
        t.accum(ai, Tensor(A2.rows, A2.cols, g.data));
    });
}

// out[r] = a[r - k] for r >= k, zero otherwise (temporal delay by k rows).
inline Var shift_rows(Var a, int k) {
    Tape& tp = *a.tape;
    const Tensor& A = a.value();
    if (k < 0) throw ShapeError("ad::shift_rows: negative shift");
    Tensor out(A.rows, A.cols);
    for (int r = k; r < A.rows; ++r)
        for (int c = 0; c < A.cols; ++c) out.at(r, c) = A.at(r - k, c);
    bool req = tp.requires_grad(a);
    int ai = a.id;
    return tp.push_op(std::move(out), req, [ai, k](Tape& t, int self) {
        const Tensor& g = t.grad_ref(self);
        Tensor ga(g.rows, g.cols);
        for (int r = k; r < g.rows; ++r)
            for (int c = 0; c < g.cols; ++c) ga.at(r - k, c) = g.at(r, c);
        t.accum(ai, ga);
    });
}

inline Var downsample_rows(Var a, int factor, int phase) {
    Tape& tp = *a.tape;
    const Tensor& A = a.value();
    if (factor < 1 || phase < 0 || phase >= factor) throw ShapeError("ad::downsample_rows: bad args");
    int n = A.rows > phase ? (A.rows - 1 - phase) / factor + 1 : 0;
    Tensor out(n, A.cols);
    for (int j = 0; j < n; ++j)
        for (int c = 0; c < A.cols; ++c) out.at(j, c) = A.at(phase + factor * j, c);
    bool req = tp.requires_grad(a);
    int ai = a.id;
    return tp.push_op(std::move(out), req, [ai, factor, phase](Tape& t, int self) {
        const Tensor& g = t.grad_ref(self);
        const Tensor& A2 = t.val(ai);
        Tensor ga(A2.rows, A2.cols);
        for (int j = 0; j < g.rows; ++j)
            for (int c = 0; c < g.cols; ++c) ga.at(phase + factor * j, c) = g.at(j, c);
        t.accum(ai, ga);
    });
}

// Sample-and-hold expansion: out[t] = a[(t - offset) / factor] for t >= offset,
// zeros before the first sample is available.
inline Var hold_rows(Var a, int factor, int offset, int total_rows) {
    Tape& tp = *a.tape;
    const Tensor& A = a.value();
    Tensor out(total_rows, A.cols);
    for (int t = offset; t < total_rows; ++t) {
        int j = (t - offset) / factor;
        if (j >= A.rows) j = A.rows - 1;
        if (j < 0) continue;
        for (int c = 0; c < A.cols; ++c) out.at(t, c) = A.at(j, c);
    }
    bool req = tp.requires_grad(a);
    int ai = a.id;
    return tp.push_op(std::move(out), req, [ai, factor, offset](Tape& t, int self) {
        const Tensor& g = t.grad_ref(self);
        const Tensor& A2 = t.val(ai);
        Tensor ga(A2.rows, A2.cols);
        for (int r = offset; r < g.rows; ++r) {
            int j = (r - offset) / factor;
            if (j >= A2.rows) j = A2.rows - 1;
            if (j < 0) continue;
            for (int c = 0; c < g.cols; ++c) ga.at(j, c) += g.at(r, c);
        }
        t.accum(ai, ga);
    });
}

// Mean cross-entropy of row-wise logits against integer labels; label -1
// excludes the row from the loss.
inline Var cross_entropy_with_logits(Var logits, const std::vector<int>& labels) {
    Tape& tp = *logits.tape;
    const Tensor& L = logits.value();
    if (static_cast<int>(labels.size()) != L.rows)
        throw ShapeError("ad::cross_entropy_with_logits: label count != rows");
    int counted = 0;
    double acc = 0.0;
    for (int r = 0; r < L.rows; ++r) {
        if (labels[r] < 0) continue;
        if (labels[r] >= L.cols) throw ShapeError("ad::cross_entropy_with_logits: label out of range");
        acc += aga::logsumexp(L.row_ptr(r), L.cols) - L.at(r, labels[r]);
        ++counted;
    }
    if (counted == 0) throw std::invalid_argument("ad::cross_entropy_with_logits: no labeled rows");
    acc /= counted;
    bool req = tp.requires_grad(logits);
    int li = logits.id;
    return tp.push_op(Tensor(1, 1, {acc}), req, [li, labels, counted](Tape& t, int self) {
        double g = t.grad_ref(self).data[0];
        const Tensor& L2 = t.val(li);
        Tensor gl(L2.rows, L2.cols);
        for (int r = 0; r < L2.rows; ++r) {
            if (labels[r] < 0) continue;
            double lse = aga::logsumexp(L2.row_ptr(r), L2.cols);
            for (int c = 0; c < L2.cols; ++c) {
                double p = std::exp(L2.at(r, c) - lse);
                gl.at(r, c) = g * (p - (c == labels[r] ? 1.0 : 0.0)) / counted;
            }
        }
        t.accum(li, gl);
    });
}

// Causal banded multi-head attention. Q, K, V are T x (H * dk); row t attends
// over rows [max(0, t - lookback), t]. Returns the concatenated head outputs.
inline Var banded_attention(Var q, Var k, Var v, int lookback, int heads) {
    Tape& tp = *q.tape;
    const Tensor& Q = q.value();
    const Tensor& K = k.value();
    const Tensor& V = v.value();
    check_same_shape(Q, K, "ad::banded_attention(Q,K)");
    check_same_shape(Q, V, "ad::banded_attention(Q,V)");
    if (heads < 1 || Q.cols % heads != 0)
        throw ShapeError("ad::banded_attention: head count must divide feature dim");
    if (lookback < 0) throw ShapeError("ad::banded_attention: negative lookback");
    const int T = Q.rows;
    const int dk = Q.cols / heads;
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
    const int band = lookback + 1;

    Tensor out(T, Q.cols);
    // Attention weights per (t, head, offset-in-window); kept for the pullback.
    Tensor weights(T, heads * band);
    std::vector<double> scores(band);
    for (int t = 0; t < T; ++t) {
        int j0 = std::max(0, t - lookback);
        int w = t - j0 + 1;
        for (int h = 0; h < heads; ++h) {
            const double* qrow = Q.row_ptr(t) + h * dk;
            for (int s = 0; s < w; ++s) {
                const double* krow = K.row_ptr(j0 + s) + h * dk;
                double acc = 0.0;
                for (int d = 0; d < dk; ++d) acc += qrow[d] * krow[d];
                scores[s] = acc * inv_sqrt_dk;
            }
            double maxv = scores[0];
            for (int s = 1; s < w; ++s) maxv = std::max(maxv, scores[s]);
            double sum = 0.0;
            for (int s = 0; s < w; ++s) {
                scores[s] = std::exp(scores[s] - maxv);
                sum += scores[s];
            }
            double* wrow = weights.row_ptr(t) + h * band;
            double* orow = out.row_ptr(t) + h * dk;
            for (int s = 0; s < w; ++s) {
                double wt = scores[s] / sum;
                wrow[s] = wt;
                const double* vrow = V.row_ptr(j0 + s) + h * dk;
                for (int d = 0; d < dk; ++d) orow[d] += wt * vrow[d];
            }
        }
    }

    bool req = tp.requires_grad(q) || tp.requires_grad(k) || tp.requires_grad(v);
    int qi = q.id, ki = k.id, vi = v.id;
    return tp.push_op(std::move(out), req,
                   [qi, ki, vi, lookback, heads, dk, inv_sqrt_dk, band,
                           weights = std::move(weights)](Tape& t, int self) {
        const Tensor& g = t.grad_ref(self);
        const Tensor& Q2 = t.val(qi);
        const Tensor& K2 = t.val(ki);
        const Tensor& V2 = t.val(vi);
        const int T2 = Q2.rows;
        Tensor gq(T2, Q2.cols), gk(T2, Q2.cols), gv(T2, Q2.cols);
        std::vector<double> dw(band), ds(band);
        for (int tt = 0; tt < T2; ++tt) {
            int j0 = std::max(0, tt - lookback);
            int w = tt - j0 + 1;
            for (int h = 0; h < heads; ++h) {
                const double* grow = g.row_ptr(tt) + h * dk;
                const double* wrow = weights.row_ptr(tt) + h * band;
                // dV and dw
                double wdot = 0.0;
                for (int s = 0; s < w; ++s) {
                    const double* vrow = V2.row_ptr(j0 + s) + h * dk;
                    double* gvrow = gv.row_ptr(j0 + s) + h * dk;
                    double acc = 0.0;
                    for (int d = 0; d < dk; ++d) {
                        gvrow[d] += wrow[s] * grow[d];
                        acc += grow[d] * vrow[d];
                    }
                    dw[s] = acc;
                    wdot += wrow[s] * acc;
                }
                // softmax pullback, then Q/K
                const double* qrow = Q2.row_ptr(tt) + h * dk;
                double* gqrow = gq.row_ptr(tt) + h * dk;
                for (int s = 0; s < w; ++s) {
                    ds[s] = wrow[s] * (dw[s] - wdot) * inv_sqrt_dk;
                    const double* krow = K2.row_ptr(j0 + s) + h * dk;
                    double* gkrow = gk.row_ptr(j0 + s) + h * dk;
                    for (int d = 0; d < dk; ++d) {
                        gqrow[d] += ds[s] * krow[d];
                        gkrow[d] += ds[s] * qrow[d];
                    }
                }
            }
        }
        t.accum(qi, gq);
        t.accum(ki, gk);
        t.accum(vi, gv);
    });
}

}  // namespace ad
}  // namespace aga
