#include "cdt/kernels.hpp"

#include <cmath>
#include <stdexcept>

namespace cdt::kernels {

namespace {

// Below this combined operand size the OpenMP runtime entry costs more than
// the loop; small calls route to the serial reference, which runs the exact
// same per-element accumulation order.
constexpr std::size_t kParallelThreshold = 16384;

void require(bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(msg);
}

void softmax_row(double* p, std::size_t n) {
    double mx = p[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, p[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        p[j] = std::exp(p[j] - mx);
        sum += p[j];
    }
    for (std::size_t j = 0; j < n; ++j) p[j] /= sum;
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.size() + b.size() <= kParallelThreshold) return serial::matmul(a, b);
    require(a.cols() == b.rows(), "matmul: inner dimension mismatch");
    Matrix c(a.rows(), b.cols());
    const auto n = static_cast<std::ptrdiff_t>(a.rows());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        double* ci = c.row_ptr(static_cast<std::size_t>(i));
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(static_cast<std::size_t>(i), k);
            const double* bk = b.row_ptr(k);
            for (std::size_t j = 0; j < b.cols(); ++j) ci[j] += aik * bk[j];
        }
    }
    return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.size() + b.size() <= kParallelThreshold) return serial::matmul_nt(a, b);
    require(a.cols() == b.cols(), "matmul_nt: inner dimension mismatch");
    Matrix c(a.rows(), b.rows());
    const auto n = static_cast<std::ptrdiff_t>(a.rows());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const double* ai = a.row_ptr(static_cast<std::size_t>(i));
        for (std::size_t j = 0; j < b.rows(); ++j) {
            const double* bj = b.row_ptr(j);
            double acc = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) acc += ai[k] * bj[k];
            c(static_cast<std::size_t>(i), j) = acc;
        }
    }
    return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.size() + b.size() <= kParallelThreshold) return serial::matmul_tn(a, b);
    require(a.rows() == b.rows(), "matmul_tn: inner dimension mismatch");
    Matrix c(a.cols(), b.cols());
    const auto n = static_cast<std::ptrdiff_t>(a.cols());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        double* ci = c.row_ptr(static_cast<std::size_t>(i));
        for (std::size_t k = 0; k < a.rows(); ++k) {
            const double aki = a(k, static_cast<std::size_t>(i));
            const double* bk = b.row_ptr(k);
            for (std::size_t j = 0; j < b.cols(); ++j) ci[j] += aki * bk[j];
        }
    }
    return c;
}

void add_inplace(Matrix& a, const Matrix& b) {
    require(a.same_shape(b), "add_inplace: shape mismatch");
    double* pa = a.data();
    const double* pb = b.data();
    for (std::size_t i = 0; i < a.size(); ++i) pa[i] += pb[i];
}

void add_row_broadcast(Matrix& a, const Matrix& row) {
    require(row.rows() == 1 && row.cols() == a.cols(), "add_row_broadcast: shape mismatch");
    const double* r = row.data();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double* ai = a.row_ptr(i);
        for (std::size_t j = 0; j < a.cols(); ++j) ai[j] += r[j];
    }
}

void scale_inplace(Matrix& a, double s) {
    double* p = a.data();
    for (std::size_t i = 0; i < a.size(); ++i) p[i] *= s;
}

Matrix column_sums(const Matrix& a) {
    Matrix s(1, a.cols());
    double* out = s.data();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double* ai = a.row_ptr(i);
        for (std::size_t j = 0; j < a.cols(); ++j) out[j] += ai[j];
    }
    return s;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
    require(a.same_shape(b), "hadamard: shape mismatch");
    Matrix c(a.rows(), a.cols());
    const double* pa = a.data();
    const double* pb = b.data();
    double* pc = c.data();
    for (std::size_t i = 0; i < a.size(); ++i) pc[i] = pa[i] * pb[i];
    return c;
}

void row_softmax_inplace(Matrix& m) {
    require(m.cols() > 0, "row_softmax: empty rows");
    if (m.size() <= kParallelThreshold) {
        serial::row_softmax_inplace(m);
        return;
    }
    const auto n = static_cast<std::ptrdiff_t>(m.rows());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i)
        softmax_row(m.row_ptr(static_cast<std::size_t>(i)), m.cols());
}

namespace serial {

Matrix matmul(const Matrix& a, const Matrix& b) {
    require(a.cols() == b.rows(), "matmul: inner dimension mismatch");
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double* ci = c.row_ptr(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            const double* bk = b.row_ptr(k);
            for (std::size_t j = 0; j < b.cols(); ++j) ci[j] += aik * bk[j];
        }
    }
    return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    require(a.cols() == b.cols(), "matmul_nt: inner dimension mismatch");
    Matrix c(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double* ai = a.row_ptr(i);
        for (std::size_t j = 0; j < b.rows(); ++j) {
            const double* bj = b.row_ptr(j);
            double acc = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) acc += ai[k] * bj[k];
            c(i, j) = acc;
        }
    }
    return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    require(a.rows() == b.rows(), "matmul_tn: inner dimension mismatch");
    Matrix c(a.cols(), b.cols());
    for (std::size_t i = 0; i < a.cols(); ++i) {
        double* ci = c.row_ptr(i);
        for (std::size_t k = 0; k < a.rows(); ++k) {
            const double aki = a(k, i);
            const double* bk = b.row_ptr(k);
            for (std::size_t j = 0; j < b.cols(); ++j) ci[j] += aki * bk[j];
        }
    }
    return c;
}

void row_softmax_inplace(Matrix& m) {
    require(m.cols() > 0, "row_softmax: empty rows");
    for (std::size_t i = 0; i < m.rows(); ++i) softmax_row(m.row_ptr(i), m.cols());
}

}  // namespace serial

}  // namespace cdt::kernels
