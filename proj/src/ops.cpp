#include "cdt/ops.hpp"

#include <cmath>
#include <stdexcept>

#include "cdt/kernels.hpp"

namespace cdt::ops {

namespace {
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

void require(bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(msg);
}
}  // namespace

std::vector<double> softmax(std::span<const double> v) {
    require(!v.empty(), "softmax: empty input");
    double mx = v[0];
    for (double x : v) {
        require(std::isfinite(x), "softmax: non-finite entry");
        mx = std::max(mx, x);
    }
    std::vector<double> p(v.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        p[i] = std::exp(v[i] - mx);
        sum += p[i];
    }
    for (double& x : p) x /= sum;
    return p;
}

void softmax_backward_row(std::span<const double> p, std::span<const double> d_p,
                          std::span<double> d_logits_accum) {
    double dot = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) dot += d_p[i] * p[i];
    for (std::size_t i = 0; i < p.size(); ++i) d_logits_accum[i] += p[i] * (d_p[i] - dot);
}

std::vector<double> layer_norm(std::span<const double> x, std::span<const double> gain,
                               std::span<const double> shift, double eps) {
    require(x.size() == gain.size() && x.size() == shift.size(), "layer_norm: length mismatch");
    require(eps > 0.0, "layer_norm: eps must be positive");
    const std::size_t n = x.size();
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    const double inv_std = 1.0 / std::sqrt(var + eps);
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = gain[i] * (x[i] - mean) * inv_std + shift[i];
    return out;
}

double gelu(double x) { return x * 0.5 * std::erfc(-x * kInvSqrt2); }

double gelu_grad(double x) {
    const double cdf = 0.5 * std::erfc(-x * kInvSqrt2);
    const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
    return cdf + x * pdf;
}

void gelu_inplace(Matrix& m) {
    double* p = m.data();
    for (std::size_t i = 0; i < m.size(); ++i) p[i] = gelu(p[i]);
}

Matrix gelu_backward(const Matrix& pre_activation, const Matrix& d_out) {
    require(pre_activation.same_shape(d_out), "gelu_backward: shape mismatch");
    Matrix d_x(pre_activation.rows(), pre_activation.cols());
    const double* x = pre_activation.data();
    const double* dy = d_out.data();
    double* dx = d_x.data();
    for (std::size_t i = 0; i < d_x.size(); ++i) dx[i] = dy[i] * gelu_grad(x[i]);
    return d_x;
}

Matrix layer_norm_rows(const Matrix& x, const Matrix& gain, const Matrix& shift, double eps,
                       LayerNormCache* cache) {
    require(gain.rows() == 1 && gain.cols() == x.cols(), "layer_norm_rows: bad gain shape");
    require(shift.rows() == 1 && shift.cols() == x.cols(), "layer_norm_rows: bad shift shape");
    require(eps > 0.0, "layer_norm_rows: eps must be positive");
    const std::size_t d = x.cols();
    Matrix out(x.rows(), d);
    Matrix x_hat(x.rows(), d);
    std::vector<double> inv_std(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const double* xi = x.row_ptr(i);
        double mean = 0.0;
        for (std::size_t j = 0; j < d; ++j) mean += xi[j];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) var += (xi[j] - mean) * (xi[j] - mean);
        var /= static_cast<double>(d);
        const double s = 1.0 / std::sqrt(var + eps);
        inv_std[i] = s;
        double* hi = x_hat.row_ptr(i);
        double* oi = out.row_ptr(i);
        for (std::size_t j = 0; j < d; ++j) {
            hi[j] = (xi[j] - mean) * s;
            oi[j] = gain(0, j) * hi[j] + shift(0, j);
        }
    }
    if (cache) {
        cache->x_hat = std::move(x_hat);
        cache->inv_std = std::move(inv_std);
    }
    return out;
}

void layer_norm_rows_backward(const LayerNormCache& cache, const Matrix& gain,
                              const Matrix& d_out, Matrix* d_gain, Matrix* d_shift,
                              Matrix& d_x_accum) {
    const Matrix& x_hat = cache.x_hat;
    require(d_out.same_shape(x_hat), "layer_norm_rows_backward: shape mismatch");
    require(d_x_accum.same_shape(x_hat), "layer_norm_rows_backward: d_x shape mismatch");
    const std::size_t d = x_hat.cols();
    for (std::size_t i = 0; i < x_hat.rows(); ++i) {
        const double* dy = d_out.row_ptr(i);
        const double* xh = x_hat.row_ptr(i);
        double g_mean = 0.0;
        double gx_mean = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double g = dy[j] * gain(0, j);
            g_mean += g;
            gx_mean += g * xh[j];
        }
        g_mean /= static_cast<double>(d);
        gx_mean /= static_cast<double>(d);
        double* dx = d_x_accum.row_ptr(i);
        const double s = cache.inv_std[i];
        for (std::size_t j = 0; j < d; ++j) {
            const double g = dy[j] * gain(0, j);
            dx[j] += s * (g - g_mean - xh[j] * gx_mean);
        }
        if (d_gain)
            for (std::size_t j = 0; j < d; ++j) (*d_gain)(0, j) += dy[j] * xh[j];
        if (d_shift)
            for (std::size_t j = 0; j < d; ++j) (*d_shift)(0, j) += dy[j];
    }
}

Matrix dropout(const Matrix& x, double p, RngStream& rng, bool training, Matrix* mask) {
    require(p >= 0.0 && p < 1.0, "dropout: p must lie in [0, 1)");
    if (!training || p == 0.0) {
        if (mask && training) {
            *mask = Matrix(x.rows(), x.cols(), 1.0);
        }
        return x;
    }
    const double keep_scale = 1.0 / (1.0 - p);
    Matrix out(x.rows(), x.cols());
    Matrix m(x.rows(), x.cols());
    const double* px = x.data();
    double* po = out.data();
    double* pm = m.data();
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = rng.uniform01() >= p ? keep_scale : 0.0;
        pm[i] = keep;
        po[i] = px[i] * keep;
    }
    if (mask) *mask = std::move(m);
    return out;
}

Matrix linear(const Matrix& x, const Matrix& w, const Matrix& b) {
    Matrix y = kernels::matmul(x, w);
    if (!b.empty()) kernels::add_row_broadcast(y, b);
    return y;
}

void linear_backward(const Matrix& x, const Matrix& w, const Matrix& d_out, Matrix* d_w,
                     Matrix* d_b, Matrix* d_x_accum) {
    if (d_w) kernels::add_inplace(*d_w, kernels::matmul_tn(x, d_out));
    if (d_b) kernels::add_inplace(*d_b, kernels::column_sums(d_out));
    if (d_x_accum) kernels::add_inplace(*d_x_accum, kernels::matmul_nt(d_out, w));
}

AttentionResult scaled_dot_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                                     std::size_t scale_dim) {
    require(q.cols() == k.cols(), "scaled_dot_attention: Q/K column mismatch");
    require(k.rows() == v.rows(), "scaled_dot_attention: K/V row mismatch");
    require(scale_dim > 0, "scaled_dot_attention: scale_dim must be positive");
    Matrix weights = kernels::matmul_nt(q, k);
    kernels::scale_inplace(weights, 1.0 / std::sqrt(static_cast<double>(scale_dim)));
    kernels::row_softmax_inplace(weights);
    return {kernels::matmul(weights, v), std::move(weights)};
}

void scaled_dot_attention_backward(const Matrix& q, const Matrix& k, const Matrix& v,
                                   const Matrix& weights, std::size_t scale_dim,
                                   const Matrix& d_output, Matrix& d_q_accum,
                                   Matrix& d_k_accum, Matrix& d_v_accum) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(scale_dim));
    // d_weights = d_output V^T, d_v += weights^T d_output
    Matrix d_weights = kernels::matmul_nt(d_output, v);
    kernels::add_inplace(d_v_accum, kernels::matmul_tn(weights, d_output));
    // back through the row softmax
    Matrix d_scores(weights.rows(), weights.cols());
    for (std::size_t i = 0; i < weights.rows(); ++i)
        softmax_backward_row(weights.row(i), d_weights.row(i), d_scores.row(i));
    kernels::scale_inplace(d_scores, scale);
    kernels::add_inplace(d_q_accum, kernels::matmul(d_scores, k));
    kernels::add_inplace(d_k_accum, kernels::matmul_tn(d_scores, q));
}

Matrix col_slice(const Matrix& m, std::size_t j0, std::size_t width) {
    Matrix s(m.rows(), width);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const double* src = m.row_ptr(i) + j0;
        double* dst = s.row_ptr(i);
        for (std::size_t j = 0; j < width; ++j) dst[j] = src[j];
    }
    return s;
}

void add_col_slice(Matrix& dst, std::size_t j0, const Matrix& src) {
    for (std::size_t i = 0; i < src.rows(); ++i) {
        double* d = dst.row_ptr(i) + j0;
        const double* s = src.row_ptr(i);
        for (std::size_t j = 0; j < src.cols(); ++j) d[j] += s[j];
    }
}

MhaCache multi_head_attention(const Matrix& q_in, const Matrix& k_in, const Matrix& v_in,
                              const MhaParams& params, std::size_t heads) {
    const std::size_t d = params.wq.cols();
    require(heads > 0 && d % heads == 0, "multi_head_attention: model dim not divisible by heads");
    const std::size_t dk = d / heads;
    MhaCache cache;
    cache.qp = linear(q_in, params.wq, params.bq);
    cache.kp = linear(k_in, params.wk, params.bk);
    cache.vp = linear(v_in, params.wv, params.bv);
    cache.context = Matrix(q_in.rows(), d);
    cache.head_weights.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t j0 = h * dk;
        AttentionResult res = scaled_dot_attention(col_slice(cache.qp, j0, dk),
                                                   col_slice(cache.kp, j0, dk),
                                                   col_slice(cache.vp, j0, dk), dk);
        add_col_slice(cache.context, j0, res.output);
        cache.head_weights.push_back(std::move(res.weights));
    }
    cache.out = linear(cache.context, params.wo, params.bo);
    return cache;
}

void multi_head_attention_backward(const Matrix& q_in, const Matrix& k_in, const Matrix& v_in,
                                   const MhaParams& params, std::size_t heads,
                                   const MhaCache& cache, const Matrix& d_out,
                                   Matrix& d_q_in_accum, Matrix& d_k_in_accum,
                                   Matrix& d_v_in_accum, MhaParams* d_params) {
    const std::size_t d = params.wq.cols();
    const std::size_t dk = d / heads;
    Matrix d_context(cache.context.rows(), d);
    linear_backward(cache.context, params.wo, d_out, d_params ? &d_params->wo : nullptr,
                    d_params ? &d_params->bo : nullptr, &d_context);
    Matrix d_qp(cache.qp.rows(), d);
    Matrix d_kp(cache.kp.rows(), d);
    Matrix d_vp(cache.vp.rows(), d);
    for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t j0 = h * dk;
        Matrix q_h = col_slice(cache.qp, j0, dk);
        Matrix k_h = col_slice(cache.kp, j0, dk);
        Matrix v_h = col_slice(cache.vp, j0, dk);
        Matrix d_q_h(q_h.rows(), dk);
        Matrix d_k_h(k_h.rows(), dk);
        Matrix d_v_h(v_h.rows(), dk);
        scaled_dot_attention_backward(q_h, k_h, v_h, cache.head_weights[h], dk,
                                      col_slice(d_context, j0, dk), d_q_h, d_k_h, d_v_h);
        add_col_slice(d_qp, j0, d_q_h);
        add_col_slice(d_kp, j0, d_k_h);
        add_col_slice(d_vp, j0, d_v_h);
    }
    linear_backward(q_in, params.wq, d_qp, d_params ? &d_params->wq : nullptr,
                    d_params ? &d_params->bq : nullptr, &d_q_in_accum);
    linear_backward(k_in, params.wk, d_kp, d_params ? &d_params->wk : nullptr,
                    d_params ? &d_params->bk : nullptr, &d_k_in_accum);
    linear_backward(v_in, params.wv, d_vp, d_params ? &d_params->wv : nullptr,
                    d_params ? &d_params->bv : nullptr, &d_v_in_accum);
}

}  // namespace cdt::ops
