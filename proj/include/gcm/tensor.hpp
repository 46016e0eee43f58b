#pragma once

#include <functional>
#include <vector>

#include "gcm/errors.hpp"
#include "gcm/rng.hpp"
#include "gcm/sparse.hpp"

namespace gcm {

// Row-major dense matrix, 64-bit throughout.
struct DenseMatrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    DenseMatrix() = default;
    DenseMatrix(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {}
    DenseMatrix(int r, int c, std::vector<double> d) : rows(r), cols(c), data(std::move(d)) {
        if (data.size() != static_cast<size_t>(r) * c) {
            throw ShapeError("dense matrix data length does not match rows*cols");
        }
    }

    double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
    double at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }
    double* row(int r) { return data.data() + static_cast<size_t>(r) * cols; }
    const double* row(int r) const { return data.data() + static_cast<size_t>(r) * cols; }
    bool empty() const { return rows == 0 || cols == 0; }

    static DenseMatrix identity(int n);
};

bool same_shape(const DenseMatrix& a, const DenseMatrix& b);
bool all_finite(const DenseMatrix& m);
void require_finite(const DenseMatrix& m, const char* what);

// Trainable value plus a gradient accumulator of identical shape.
struct ParamTensor {
    DenseMatrix value;
    DenseMatrix grad;

    ParamTensor() = default;
    explicit ParamTensor(DenseMatrix v) : value(std::move(v)), grad(value.rows, value.cols) {}

    void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), 0.0); }
    bool empty() const { return value.empty(); }
};

// --- forward ops -----------------------------------------------------------

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);

// Y = X * W.value  (N x p times p x q)
DenseMatrix dense_affine(const DenseMatrix& x, const ParamTensor& w);

// Accumulates dL/dW = X^T dY into w.grad; writes dL/dX = dY W^T when dx != null.
void dense_affine_backward(const DenseMatrix& x, ParamTensor& w,
                           const DenseMatrix& dy, DenseMatrix* dx);

// Y = X + 1 b  (b is a 1 x q row); backward accumulates column sums into b.grad.
DenseMatrix add_row_bias(const DenseMatrix& x, const ParamTensor& b);
void add_row_bias_backward(ParamTensor& b, const DenseMatrix& dy);

// Elementwise max(0, x); subgradient at 0 is 0.
DenseMatrix relu(const DenseMatrix& x);
DenseMatrix relu_backward(const DenseMatrix& preact, const DenseMatrix& dy);

// Row-stochastic softmax with row-max subtraction.
DenseMatrix softmax_rows(const DenseMatrix& x);

// Y = A X; A is treated as constant unless da is requested.
DenseMatrix sparse_dense_matmul(const SparseAdjacency& a, const DenseMatrix& x);

// dL/dX = A^T dY.
DenseMatrix sparse_dense_matmul_backward_x(const SparseAdjacency& a, const DenseMatrix& dy);

// Per-edge dL/dA_ij = dY_i . X_j, accumulated into da.weights (pattern of a).
void sparse_dense_matmul_backward_a(const SparseAdjacency& a, const DenseMatrix& x,
                                    const DenseMatrix& dy, SparseAdjacency& da);

DenseMatrix hadamard(const DenseMatrix& a, const DenseMatrix& b);

// --- gradient checking ------------------------------------------------------

// Central-difference check of already-accumulated analytic gradients.
// Protocol: zero grads, run forward+backward once, then call this with the
// same scalar computation f. Returns the max relative error over all
// coordinates of all listed parameters.
double finite_difference_gradcheck(const std::function<double()>& f,
                                   const std::vector<ParamTensor*>& params,
                                   double eps);

} // namespace gcm
