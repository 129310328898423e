#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

#include "aga/error.hpp"

namespace aga {

using Vec = std::vector<double>;

// Dense row-major matrix. Every weight in the model lives in one of these;
// vectors are represented as n x 1 or 1 x n as convenient.
struct Tensor {
    int rows = 0;
    int cols = 0;
    Vec data;

    Tensor() = default;
    Tensor(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {}
    Tensor(int r, int c, Vec values) : rows(r), cols(c), data(std::move(values)) {
        if (data.size() != static_cast<size_t>(r) * c)
            throw ShapeError("Tensor: data length " + std::to_string(data.size()) +
                             " != " + std::to_string(r) + "x" + std::to_string(c));
    }
    Tensor(int r, int c, std::initializer_list<double> values)
        : Tensor(r, c, Vec(values)) {}

    static Tensor zeros(int r, int c) { return Tensor(r, c); }
    static Tensor full(int r, int c, double v) {
        Tensor t(r, c);
        for (double& x : t.data) x = v;
        return t;
    }
    static Tensor row(const Vec& v) { return Tensor(1, static_cast<int>(v.size()), v); }
    static Tensor col(const Vec& v) { return Tensor(static_cast<int>(v.size()), 1, v); }

    double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
    double at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }
    double* row_ptr(int r) { return data.data() + static_cast<size_t>(r) * cols; }
    const double* row_ptr(int r) const { return data.data() + static_cast<size_t>(r) * cols; }

    size_t size() const { return data.size(); }
    bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

inline std::string shape_str(const Tensor& t) {
    return std::to_string(t.rows) + "x" + std::to_string(t.cols);
}

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* where) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(where) + ": shape mismatch " + shape_str(a) +
                         " vs " + shape_str(b));
}

// C = A * B
inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols != b.rows)
        throw ShapeError("matmul: " + shape_str(a) + " * " + shape_str(b));
    Tensor out(a.rows, b.cols);
    for (int i = 0; i < a.rows; ++i) {
        const double* arow = a.row_ptr(i);
        double* orow = out.row_ptr(i);
        for (int k = 0; k < a.cols; ++k) {
            const double av = arow[k];
            if (av == 0.0) continue;
            const double* brow = b.row_ptr(k);
            for (int j = 0; j < b.cols; ++j) orow[j] += av * brow[j];
        }
    }
    return out;
}

// C = A * B^T
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    if (a.cols != b.cols)
        throw ShapeError("matmul_nt: " + shape_str(a) + " * " + shape_str(b) + "^T");
    Tensor out(a.rows, b.rows);
    for (int i = 0; i < a.rows; ++i) {
        const double* arow = a.row_ptr(i);
        double* orow = out.row_ptr(i);
        for (int j = 0; j < b.rows; ++j) {
            const double* brow = b.row_ptr(j);
            double acc = 0.0;
            for (int k = 0; k < a.cols; ++k) acc += arow[k] * brow[k];
            orow[j] = acc;
        }
    }
    return out;
}

// C = A^T * B
inline Tensor matmul_tn(const Tensor& a, const Tensor& b) {
    if (a.rows != b.rows)
        throw ShapeError("matmul_tn: " + shape_str(a) + "^T * " + shape_str(b));
    Tensor out(a.cols, b.cols);
    for (int k = 0; k < a.rows; ++k) {
        const double* arow = a.row_ptr(k);
        const double* brow = b.row_ptr(k);
        for (int i = 0; i < a.cols; ++i) {
            const double av = arow[i];
            if (av == 0.0) continue;
            double* orow = out.row_ptr(i);
            for (int j = 0; j < b.cols; ++j) orow[j] += av * brow[j];
        }
    }
    return out;
}

// y = x * W for a row vector x, accumulated in the same order as matmul so
// streaming and batched paths agree bit-for-bit.
inline Vec vec_mat(const Vec& x, const Tensor& w) {
    if (w.rows != static_cast<int>(x.size()))
        throw ShapeError("vec_mat: vec" + std::to_string(x.size()) + " * " + shape_str(w));
    Vec y(static_cast<size_t>(w.cols), 0.0);
    for (int k = 0; k < w.rows; ++k) {
        const double xv = x[k];
        if (xv == 0.0) continue;
        const double* row = w.row_ptr(k);
        for (int j = 0; j < w.cols; ++j) y[j] += xv * row[j];
    }
    return y;
}

// y = W * x for a column vector x.
inline Vec matvec(const Tensor& w, const Vec& x) {
    if (w.cols != static_cast<int>(x.size()))
        throw ShapeError("matvec: " + shape_str(w) + " * vec" + std::to_string(x.size()));
    Vec y(static_cast<size_t>(w.rows), 0.0);
    for (int i = 0; i < w.rows; ++i) {
        const double* row = w.row_ptr(i);
        double acc = 0.0;
        for (int j = 0; j < w.cols; ++j) acc += row[j] * x[j];
        y[i] = acc;
    }
    return y;
}

inline double dot(const Vec& a, const Vec& b) {
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

}  // namespace aga
