#include "cdt/backward.hpp"

#include <cmath>
#include <stdexcept>

#include "cdt/kernels.hpp"
#include "cdt/ops.hpp"

namespace cdt::model {

namespace {

Matrix apply_dropout_mask(const Matrix& d, const Matrix& mask) {
    return mask.empty() ? d : kernels::hadamard(d, mask);
}

// h = dropout(LN(x w + b)); returns d_x.
Matrix projection_backward(const ProjectionCache& cache, const ProjectionParams& params,
                           const Matrix& d_h, ProjectionParams* d_params) {
    Matrix d_normed = apply_dropout_mask(d_h, cache.mask);
    Matrix d_lin(cache.lin.rows(), cache.lin.cols());
    ops::layer_norm_rows_backward(cache.ln, params.norm.gain, d_normed,
                                  d_params ? &d_params->norm.gain : nullptr,
                                  d_params ? &d_params->norm.shift : nullptr, d_lin);
    Matrix d_x(cache.x.rows(), cache.x.cols());
    ops::linear_backward(cache.x, params.w, d_lin, d_params ? &d_params->w : nullptr,
                         d_params ? &d_params->b : nullptr, &d_x);
    return d_x;
}

// Per layer (reversed): h_out = LN(h_in + dropout(mha(h_in))); returns the
// gradient w.r.t. the stack input.
Matrix self_stack_backward(const std::vector<SelfAttnLayerParams>& layers,
                           const std::vector<SelfLayerCache>& caches, std::size_t heads,
                           Matrix d_out, std::vector<SelfAttnLayerParams>* d_layers) {
    for (std::size_t li = layers.size(); li-- > 0;) {
        const auto& layer = layers[li];
        const auto& cache = caches[li];
        Matrix d_resid(cache.resid.rows(), cache.resid.cols());
        ops::layer_norm_rows_backward(cache.ln, layer.norm.gain, d_out,
                                      d_layers ? &(*d_layers)[li].norm.gain : nullptr,
                                      d_layers ? &(*d_layers)[li].norm.shift : nullptr, d_resid);
        Matrix d_mha_out = apply_dropout_mask(d_resid, cache.mask);
        Matrix d_h_in = std::move(d_resid);  // residual branch
        ops::multi_head_attention_backward(cache.h_in, cache.h_in, cache.h_in, layer.mha, heads,
                                           cache.mha, d_mha_out, d_h_in, d_h_in, d_h_in,
                                           d_layers ? &(*d_layers)[li].mha : nullptr);
        d_out = std::move(d_h_in);
    }
    return d_out;
}

// fused = query + dropout(mha(query, context, context)); accumulates into
// d_query and d_context.
void cross_backward(const Matrix& query_h, const Matrix& context_h, const ops::MhaParams& params,
                    std::size_t heads, const CrossCache& cache, const Matrix& d_fused,
                    Matrix& d_query_accum, Matrix& d_context_accum, ops::MhaParams* d_params) {
    kernels::add_inplace(d_query_accum, d_fused);
    Matrix d_mha_out = apply_dropout_mask(d_fused, cache.mask);
    ops::multi_head_attention_backward(query_h, context_h, context_h, params, heads, cache.mha,
                                       d_mha_out, d_query_accum, d_context_accum,
                                       d_context_accum, d_params);
}

// z = softmax(q h^T / sqrt(d)) h; accumulates into d_h and d_q.
void pool_backward(const PoolCache& cache, const Matrix& query, const Matrix& h, std::size_t d,
                   const Matrix& d_z, Matrix& d_h_accum, Matrix* d_query) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    Matrix d_weights = kernels::matmul_nt(d_z, h);      // 1 x n
    kernels::add_inplace(d_h_accum, kernels::matmul_tn(cache.weights, d_z));
    Matrix d_logits(1, d_weights.cols());
    ops::softmax_backward_row(cache.weights.row(0), d_weights.row(0), d_logits.row(0));
    kernels::scale_inplace(d_logits, scale);
    if (d_query) kernels::add_inplace(*d_query, kernels::matmul(d_logits, h));
    kernels::add_inplace(d_h_accum, kernels::matmul_tn(d_logits, query));
}

}  // namespace

InputGrads backward(const ForwardRecord& rec, const ModelParams& params, const ModelConfig& cfg,
                    const Matrix& d_y, ModelParams* grads) {
    if (d_y.rows() != 1 || d_y.cols() != cfg.n_genes)
        throw std::invalid_argument("backward: cotangent must be 1 x n_genes");
    if (rec.head.y.empty()) throw std::invalid_argument("backward: no recorded forward pass");

    // task head
    Matrix d_dropped(1, rec.head.dropped.cols());
    ops::linear_backward(rec.head.dropped, params.head.w2, d_y,
                         grads ? &grads->head.w2 : nullptr, grads ? &grads->head.b2 : nullptr,
                         &d_dropped);
    Matrix d_act = apply_dropout_mask(d_dropped, rec.head.mask);
    Matrix d_lin1 = ops::gelu_backward(rec.head.lin1, d_act);
    Matrix d_h_vce(1, cfg.d);
    ops::linear_backward(rec.vce.h_vce, params.head.w1, d_lin1,
                         grads ? &grads->head.w1 : nullptr, grads ? &grads->head.b1 : nullptr,
                         &d_h_vce);

    // VCE fusion FFN
    Matrix d_vce_act(1, rec.vce.act.cols());
    ops::linear_backward(rec.vce.act, params.vce.ffn_w2, d_h_vce,
                         grads ? &grads->vce.ffn_w2 : nullptr,
                         grads ? &grads->vce.ffn_b2 : nullptr, &d_vce_act);
    Matrix d_vce_lin1 = ops::gelu_backward(rec.vce.lin1, d_vce_act);
    Matrix d_concat(1, 3 * cfg.d);
    ops::linear_backward(rec.vce.concat, params.vce.ffn_w1, d_vce_lin1,
                         grads ? &grads->vce.ffn_w1 : nullptr,
                         grads ? &grads->vce.ffn_b1 : nullptr, &d_concat);
    Matrix d_z_dna = ops::col_slice(d_concat, 0, cfg.d);
    Matrix d_z_rna = ops::col_slice(d_concat, cfg.d, cfg.d);
    Matrix d_z_protein = ops::col_slice(d_concat, 2 * cfg.d, cfg.d);

    // VCE attention pooling
    const Matrix& h_dna = rec.h_dna();
    const Matrix& h_rna = rec.h_rna();
    const Matrix& h_protein = rec.h_protein();
    const Matrix& h_rna_fused = rec.h_rna_fused();
    const Matrix& h_protein_fused = rec.h_protein_fused();
    Matrix d_h_dna(h_dna.rows(), h_dna.cols());
    Matrix d_h_rna_fused(h_rna_fused.rows(), h_rna_fused.cols());
    Matrix d_h_protein_fused(h_protein_fused.rows(), h_protein_fused.cols());
    pool_backward(rec.vce.dna, params.vce.q_dna, h_dna, cfg.d, d_z_dna, d_h_dna,
                  grads ? &grads->vce.q_dna : nullptr);
    pool_backward(rec.vce.rna, params.vce.q_rna, h_rna_fused, cfg.d, d_z_rna, d_h_rna_fused,
                  grads ? &grads->vce.q_rna : nullptr);
    pool_backward(rec.vce.protein, params.vce.q_protein, h_protein_fused, cfg.d, d_z_protein,
                  d_h_protein_fused, grads ? &grads->vce.q_protein : nullptr);

    // cross-attention blocks, downstream first
    Matrix d_h_rna(h_rna.rows(), h_rna.cols());
    Matrix d_h_protein(h_protein.rows(), h_protein.cols());
    cross_backward(h_protein, h_rna_fused, params.cross_rna_protein, cfg.heads,
                   rec.cross_rna_protein, d_h_protein_fused, d_h_protein, d_h_rna_fused,
                   grads ? &grads->cross_rna_protein : nullptr);
    cross_backward(h_rna, h_dna, params.cross_dna_rna, cfg.heads, rec.cross_dna_rna,
                   d_h_rna_fused, d_h_rna, d_h_dna, grads ? &grads->cross_dna_rna : nullptr);

    // self-attention stacks
    Matrix d_proj_dna = self_stack_backward(params.self_dna, rec.self_dna, cfg.heads,
                                            std::move(d_h_dna),
                                            grads ? &grads->self_dna : nullptr);
    Matrix d_proj_rna = self_stack_backward(params.self_rna, rec.self_rna, cfg.heads,
                                            std::move(d_h_rna),
                                            grads ? &grads->self_rna : nullptr);
    Matrix d_proj_protein = self_stack_backward(params.self_protein, rec.self_protein, cfg.heads,
                                                std::move(d_h_protein),
                                                grads ? &grads->self_protein : nullptr);

    // projections
    InputGrads input_grads;
    input_grads.dx_dna = projection_backward(rec.proj_dna, params.proj_dna, d_proj_dna,
                                             grads ? &grads->proj_dna : nullptr);
    input_grads.dx_rna = projection_backward(rec.proj_rna, params.proj_rna, d_proj_rna,
                                             grads ? &grads->proj_rna : nullptr);
    input_grads.dx_protein = projection_backward(rec.proj_protein, params.proj_protein,
                                                 d_proj_protein,
                                                 grads ? &grads->proj_protein : nullptr);
    return input_grads;
}

}  // namespace cdt::model
