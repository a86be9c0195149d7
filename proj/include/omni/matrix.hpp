#pragma once

#include <algorithm>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace omni {

// Dense row-major f64 matrix. Just enough linear algebra for the network
// code; loops are ordered for contiguous access.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> v;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), v(r * c, fill) {}

    double* operator[](std::size_t r) { return v.data() + r * cols; }
    const double* operator[](std::size_t r) const { return v.data() + r * cols; }

    double& at(std::size_t r, std::size_t c) { return v[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return v[r * cols + c]; }

    void zero() { std::fill(v.begin(), v.end(), 0.0); }
    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

// Y = X * W^T + b broadcast over rows. X: n x in, W: out x in, b: out.
inline Matrix affine(const Matrix& X, const Matrix& W, const std::vector<double>& b) {
    if (X.cols != W.cols || b.size() != W.rows)
        throw std::invalid_argument("affine: shape mismatch");
    Matrix Y(X.rows, W.rows);
    for (std::size_t i = 0; i < X.rows; ++i) {
        const double* x = X[i];
        double* y = Y[i];
        for (std::size_t o = 0; o < W.rows; ++o) {
            const double* w = W[o];
            double acc = b[o];
            for (std::size_t k = 0; k < X.cols; ++k) acc += x[k] * w[k];
            y[o] = acc;
        }
    }
    return Y;
}

// dX = dY * W. dY: n x out, W: out x in.
inline Matrix matmul(const Matrix& dY, const Matrix& W) {
    if (dY.cols != W.rows) throw std::invalid_argument("matmul: shape mismatch");
    Matrix dX(dY.rows, W.cols);
    for (std::size_t i = 0; i < dY.rows; ++i) {
        const double* g = dY[i];
        double* out = dX[i];
        for (std::size_t o = 0; o < W.rows; ++o) {
            const double go = g[o];
            if (go == 0.0) continue;
            const double* w = W[o];
            for (std::size_t k = 0; k < W.cols; ++k) out[k] += go * w[k];
        }
    }
    return dX;
}

// dW += dY^T * X ; db += column sums of dY.
inline void accumulate_affine_grads(const Matrix& dY, const Matrix& X, Matrix& dW,
                                    std::vector<double>& db) {
    if (dY.rows != X.rows || dW.rows != dY.cols || dW.cols != X.cols || db.size() != dY.cols)
        throw std::invalid_argument("accumulate_affine_grads: shape mismatch");
    for (std::size_t i = 0; i < dY.rows; ++i) {
        const double* g = dY[i];
        const double* x = X[i];
        for (std::size_t o = 0; o < dY.cols; ++o) {
            const double go = g[o];
            if (go == 0.0) continue;
            double* w = dW[o];
            for (std::size_t k = 0; k < X.cols; ++k) w[k] += go * x[k];
            db[o] += go;
        }
    }
}

} // namespace omni
