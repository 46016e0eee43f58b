#include "gcm/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "gcm/textio.hpp"

namespace gcm {

DenseMatrix DenseMatrix::identity(int n) {
    DenseMatrix m(n, n);
    for (int i = 0; i < n; ++i) m.at(i, i) = 1.0;
    return m;
}

bool same_shape(const DenseMatrix& a, const DenseMatrix& b) {
    return a.rows == b.rows && a.cols == b.cols;
}

bool all_finite(const DenseMatrix& m) {
    for (double v : m.data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void require_finite(const DenseMatrix& m, const char* what) {
    if (!all_finite(m)) {
        throw ValidationError(std::string("non-finite values in ") + what);
    }
}

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.cols != b.rows) {
        throw ShapeError("matmul shape mismatch: " + format_int(a.rows) + "x" +
                         format_int(a.cols) + " times " + format_int(b.rows) + "x" +
                         format_int(b.cols));
    }
    DenseMatrix y(a.rows, b.cols);
    for (int i = 0; i < a.rows; ++i) {
        const double* arow = a.row(i);
        double* yrow = y.row(i);
        for (int k = 0; k < a.cols; ++k) {
            double av = arow[k];
            if (av == 0.0) continue;
            const double* brow = b.row(k);
            for (int j = 0; j < b.cols; ++j) yrow[j] += av * brow[j];
        }
    }
    return y;
}

DenseMatrix dense_affine(const DenseMatrix& x, const ParamTensor& w) {
    return matmul(x, w.value);
}

void dense_affine_backward(const DenseMatrix& x, ParamTensor& w,
                           const DenseMatrix& dy, DenseMatrix* dx) {
    if (dy.rows != x.rows || dy.cols != w.value.cols) {
        throw ShapeError("dense_affine_backward: upstream gradient shape mismatch");
    }
    // dW += X^T dY
    for (int i = 0; i < x.rows; ++i) {
        const double* xrow = x.row(i);
        const double* drow = dy.row(i);
        for (int p = 0; p < x.cols; ++p) {
            double xv = xrow[p];
            if (xv == 0.0) continue;
            double* grow = w.grad.row(p);
            for (int q = 0; q < dy.cols; ++q) grow[q] += xv * drow[q];
        }
    }
    if (dx != nullptr) {
        // dX = dY W^T
        *dx = DenseMatrix(x.rows, x.cols);
        for (int i = 0; i < x.rows; ++i) {
            const double* drow = dy.row(i);
            double* out = dx->row(i);
            for (int q = 0; q < dy.cols; ++q) {
                double dv = drow[q];
                if (dv == 0.0) continue;
                for (int p = 0; p < x.cols; ++p) out[p] += dv * w.value.at(p, q);
            }
        }
    }
}

DenseMatrix add_row_bias(const DenseMatrix& x, const ParamTensor& b) {
    if (b.value.rows != 1 || b.value.cols != x.cols) {
        throw ShapeError("add_row_bias: bias must be 1x" + format_int(x.cols));
    }
    DenseMatrix y = x;
    for (int i = 0; i < y.rows; ++i) {
        double* yrow = y.row(i);
        const double* brow = b.value.row(0);
        for (int j = 0; j < y.cols; ++j) yrow[j] += brow[j];
    }
    return y;
}

void add_row_bias_backward(ParamTensor& b, const DenseMatrix& dy) {
    if (b.grad.cols != dy.cols) {
        throw ShapeError("add_row_bias_backward: shape mismatch");
    }
    double* grow = b.grad.row(0);
    for (int i = 0; i < dy.rows; ++i) {
        const double* drow = dy.row(i);
        for (int j = 0; j < dy.cols; ++j) grow[j] += drow[j];
    }
}

DenseMatrix relu(const DenseMatrix& x) {
    DenseMatrix y = x;
    for (double& v : y.data) v = v > 0.0 ? v : 0.0;
    return y;
}

DenseMatrix relu_backward(const DenseMatrix& preact, const DenseMatrix& dy) {
    if (!same_shape(preact, dy)) {
        throw ShapeError("relu_backward: shape mismatch");
    }
    DenseMatrix dx = dy;
    for (size_t i = 0; i < dx.data.size(); ++i) {
        if (preact.data[i] <= 0.0) dx.data[i] = 0.0;
    }
    return dx;
}

DenseMatrix softmax_rows(const DenseMatrix& x) {
    DenseMatrix y(x.rows, x.cols);
    for (int i = 0; i < x.rows; ++i) {
        const double* xrow = x.row(i);
        double* yrow = y.row(i);
        double mx = -HUGE_VAL;
        for (int j = 0; j < x.cols; ++j) mx = std::max(mx, xrow[j]);
        double sum = 0.0;
        for (int j = 0; j < x.cols; ++j) {
            yrow[j] = std::exp(xrow[j] - mx);
            sum += yrow[j];
        }
        for (int j = 0; j < x.cols; ++j) yrow[j] /= sum;
    }
    return y;
}

DenseMatrix sparse_dense_matmul(const SparseAdjacency& a, const DenseMatrix& x) {
    if (a.cols != x.rows) {
        throw ShapeError("sparse_dense_matmul: A is " + format_int(a.rows) + "x" +
                         format_int(a.cols) + " but X has " + format_int(x.rows) + " rows");
    }
    DenseMatrix y(a.rows, x.cols);
    for (int i = 0; i < a.rows; ++i) {
        double* yrow = y.row(i);
        for (int e = a.row_begin(i); e < a.row_end(i); ++e) {
            double w = a.weights[static_cast<size_t>(e)];
            const double* xrow = x.row(a.col_indices[static_cast<size_t>(e)]);
            for (int j = 0; j < x.cols; ++j) yrow[j] += w * xrow[j];
        }
    }
    return y;
}

DenseMatrix sparse_dense_matmul_backward_x(const SparseAdjacency& a, const DenseMatrix& dy) {
    if (a.rows != dy.rows) {
        throw ShapeError("sparse_dense_matmul_backward_x: shape mismatch");
    }
    DenseMatrix dx(a.cols, dy.cols);
    for (int i = 0; i < a.rows; ++i) {
        const double* drow = dy.row(i);
        for (int e = a.row_begin(i); e < a.row_end(i); ++e) {
            double w = a.weights[static_cast<size_t>(e)];
            double* xrow = dx.row(a.col_indices[static_cast<size_t>(e)]);
            for (int j = 0; j < dy.cols; ++j) xrow[j] += w * drow[j];
        }
    }
    return dx;
}

void sparse_dense_matmul_backward_a(const SparseAdjacency& a, const DenseMatrix& x,
                                    const DenseMatrix& dy, SparseAdjacency& da) {
    if (da.nnz() != a.nnz() || da.rows != a.rows) {
        throw ShapeError("sparse_dense_matmul_backward_a: pattern mismatch");
    }
    for (int i = 0; i < a.rows; ++i) {
        const double* drow = dy.row(i);
        for (int e = a.row_begin(i); e < a.row_end(i); ++e) {
            const double* xrow = x.row(a.col_indices[static_cast<size_t>(e)]);
            double acc = 0.0;
            for (int j = 0; j < x.cols; ++j) acc += drow[j] * xrow[j];
            da.weights[static_cast<size_t>(e)] += acc;
        }
    }
}

DenseMatrix hadamard(const DenseMatrix& a, const DenseMatrix& b) {
    if (!same_shape(a, b)) throw ShapeError("hadamard: shape mismatch");
    DenseMatrix y = a;
    for (size_t i = 0; i < y.data.size(); ++i) y.data[i] *= b.data[i];
    return y;
}

double finite_difference_gradcheck(const std::function<double()>& f,
                                   const std::vector<ParamTensor*>& params,
                                   double eps) {
    double max_rel = 0.0;
    for (ParamTensor* p : params) {
        for (size_t i = 0; i < p->value.data.size(); ++i) {
            double saved = p->value.data[i];
            p->value.data[i] = saved + eps;
            double up = f();
            p->value.data[i] = saved - eps;
            double down = f();
            p->value.data[i] = saved;
            double numeric = (up - down) / (2.0 * eps);
            double analytic = p->grad.data[i];
            double denom = std::max({std::fabs(numeric), std::fabs(analytic), 1e-6});
            double rel = std::fabs(numeric - analytic) / denom;
            max_rel = std::max(max_rel, rel);
        }
    }
    return max_rel;
}

} // namespace gcm
