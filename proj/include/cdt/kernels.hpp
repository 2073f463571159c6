#pragma once

#include "cdt/matrix.hpp"

namespace cdt::kernels {

// Dense kernels parallelized with OpenMP over output rows. Each output
// element is produced by exactly one thread with a fixed accumulation
// order, so results are bit-identical to the serial reference below for
// any thread count.

// C = A * B
Matrix matmul(const Matrix& a, const Matrix& b);
// C = A * B^T
Matrix matmul_nt(const Matrix& a, const Matrix& b);
// C = A^T * B
Matrix matmul_tn(const Matrix& a, const Matrix& b);

// a += b (equal shapes)
void add_inplace(Matrix& a, const Matrix& b);
// a += row broadcast over every row of a (row is 1 x a.cols)
void add_row_broadcast(Matrix& a, const Matrix& row);
// a *= s
void scale_inplace(Matrix& a, double s);
// 1 x cols vector of per-column sums
Matrix column_sums(const Matrix& a);
// elementwise product, a ⊙ b
Matrix hadamard(const Matrix& a, const Matrix& b);

// In-place stable softmax over each row (max-subtraction).
void row_softmax_inplace(Matrix& m);

// Serial reference implementations, kept for testing and benchmarking.
namespace serial {
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix matmul_nt(const Matrix& a, const Matrix& b);
Matrix matmul_tn(const Matrix& a, const Matrix& b);
void row_softmax_inplace(Matrix& m);
}  // namespace serial

}  // namespace cdt::kernels
