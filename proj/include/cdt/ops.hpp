#pragma once

#include <span>
#include <vector>

#include "cdt/matrix.hpp"
#include "cdt/rng.hpp"

namespace cdt::ops {

// ---- elementwise ----------------------------------------------------------

// Stable softmax of a vector (max-subtraction). Errors on empty or
// non-finite input.
std::vector<double> softmax(std::span<const double> v);

// d_logits = p ⊙ (d_p − <d_p, p>), the softmax Jacobian applied to d_p.
void softmax_backward_row(std::span<const double> p, std::span<const double> d_p,
                          std::span<double> d_logits_accum);

// out_i = gain_i * (x_i − mean) / sqrt(var + eps) + shift_i, population variance.
std::vector<double> layer_norm(std::span<const double> x, std::span<const double> gain,
                               std::span<const double> shift, double eps);

// Exact-erf GELU: x * Phi(x).
double gelu(double x);
double gelu_grad(double x);
void gelu_inplace(Matrix& m);
Matrix gelu_backward(const Matrix& pre_activation, const Matrix& d_out);

// ---- row-wise layer norm with cache ---------------------------------------

struct LayerNormCache {
    Matrix x_hat;                 // normalized rows, pre gain/shift
    std::vector<double> inv_std;  // 1/sqrt(var + eps) per row
};

Matrix layer_norm_rows(const Matrix& x, const Matrix& gain, const Matrix& shift, double eps,
                       LayerNormCache* cache = nullptr);

// Accumulates into d_gain / d_shift (1 x d, may be null) and d_x.
void layer_norm_rows_backward(const LayerNormCache& cache, const Matrix& gain,
                              const Matrix& d_out, Matrix* d_gain, Matrix* d_shift,
                              Matrix& d_x_accum);

// ---- dropout ---------------------------------------------------------------

// Inverted dropout: survivors are scaled by 1/(1-p) at train time so the
// eval path is the identity. mask (if given) receives 0 or 1/(1-p) per
// entry, recorded only in training mode.
Matrix dropout(const Matrix& x, double p, RngStream& rng, bool training,
               Matrix* mask = nullptr);

// ---- linear ----------------------------------------------------------------

// y = x * w + b (b broadcast over rows; b may be empty for no bias).
Matrix linear(const Matrix& x, const Matrix& w, const Matrix& b);

// Accumulates d_w += x^T d_out, d_b += column_sums(d_out), d_x += d_out w^T.
// Null destinations are skipped.
void linear_backward(const Matrix& x, const Matrix& w, const Matrix& d_out, Matrix* d_w,
                     Matrix* d_b, Matrix* d_x_accum);

// ---- attention -------------------------------------------------------------

struct AttentionResult {
    Matrix output;   // weights * V
    Matrix weights;  // row-softmax(Q K^T / sqrt(scale_dim))
};

AttentionResult scaled_dot_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                                     std::size_t scale_dim);

// Accumulates input gradients of scaled_dot_attention.
void scaled_dot_attention_backward(const Matrix& q, const Matrix& k, const Matrix& v,
                                   const Matrix& weights, std::size_t scale_dim,
                                   const Matrix& d_output, Matrix& d_q_accum,
                                   Matrix& d_k_accum, Matrix& d_v_accum);

struct MhaParams {
    Matrix wq, bq;  // d_model x d_model, 1 x d_model
    Matrix wk, bk;
    Matrix wv, bv;
    Matrix wo, bo;
};

struct MhaCache {
    Matrix qp, kp, vp;                 // projected inputs
    std::vector<Matrix> head_weights;  // per head, n_q x n_k
    Matrix context;                    // concatenated head outputs
    Matrix out;                        // context * wo + bo
};

// Multi-head attention: per head, slice the projected Q/K/V to d/h columns,
// run scaled_dot_attention with scale d/h, concatenate, project.
MhaCache multi_head_attention(const Matrix& q_in, const Matrix& k_in, const Matrix& v_in,
                              const MhaParams& params, std::size_t heads);

// Accumulates gradients w.r.t. the three inputs and (if d_params non-null)
// the projection parameters.
void multi_head_attention_backward(const Matrix& q_in, const Matrix& k_in, const Matrix& v_in,
                                   const MhaParams& params, std::size_t heads,
                                   const MhaCache& cache, const Matrix& d_out,
                                   Matrix& d_q_in_accum, Matrix& d_k_in_accum,
                                   Matrix& d_v_in_accum, MhaParams* d_params);

// Columns [j0, j0+width) as a new matrix.
Matrix col_slice(const Matrix& m, std::size_t j0, std::size_t width);
void add_col_slice(Matrix& dst, std::size_t j0, const Matrix& src);

}  // namespace cdt::ops
