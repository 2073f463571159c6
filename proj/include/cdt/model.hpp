#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cdt/matrix.hpp"
#include "cdt/ops.hpp"
#include "cdt/rng.hpp"

namespace cdt::model {

struct ModelConfig {
    std::size_t d = 768;
    std::size_t heads = 8;
    std::size_t dna_self_layers = 2;
    std::size_t rna_self_layers = 1;
    std::size_t protein_self_layers = 1;
    double dropout_p = 0.3;
    std::size_t n_genes = 0;
    std::size_t dna_positions = 0;
    std::size_t d_dna = 0;
    std::size_t d_rna = 0;
    std::size_t d_protein = 0;
    std::size_t vce_hidden = 0;   // 0 means d
    std::size_t head_hidden = 0;  // 0 means d
    double ln_eps = 1e-5;

    std::size_t head_dim() const { return d / heads; }
    std::size_t vce_hidden_dim() const { return vce_hidden ? vce_hidden : d; }
    std::size_t task_hidden_dim() const { return head_hidden ? head_hidden : d; }
    void validate() const;  // throws config_error
};

struct LayerNormParams {
    Matrix gain, shift;  // 1 x d
};

struct ProjectionParams {
    Matrix w, b;  // d_m x d, 1 x d
    LayerNormParams norm;
};

struct SelfAttnLayerParams {
    ops::MhaParams mha;
    LayerNormParams norm;  // post-residual norm
};

struct VceParams {
    Matrix q_dna, q_rna, q_protein;  // 1 x d learned pooling queries
    Matrix ffn_w1, ffn_b1;           // 3d x hidden, 1 x hidden
    Matrix ffn_w2, ffn_b2;           // hidden x d, 1 x d
};

struct TaskHeadParams {
    Matrix w1, b1;  // d x hidden
    Matrix w2, b2;  // hidden x n_genes
};

struct ModelParams {
    ProjectionParams proj_dna, proj_rna, proj_protein;
    std::vector<SelfAttnLayerParams> self_dna, self_rna, self_protein;
    ops::MhaParams cross_dna_rna, cross_rna_protein;
    VceParams vce;
    TaskHeadParams head;

    // Visits every tensor as (name, Matrix&) in a fixed canonical order;
    // serialization, the optimizer, and gradient checks all rely on it.
    template <class F>
    void visit(F&& f) {
        visit_impl(*this, f);
    }
    template <class F>
    void visit(F&& f) const {
        visit_impl(*this, f);
    }

    ModelParams zeros_like() const;
    std::size_t parameter_count() const;
    bool all_finite() const;

private:
    template <class Self, class F>
    static void visit_impl(Self& self, F&& f) {
        auto mha = [&f](const std::string& prefix, auto& m) {
            f(prefix + ".wq", m.wq);
            f(prefix + ".bq", m.bq);
            f(prefix + ".wk", m.wk);
            f(prefix + ".bk", m.bk);
            f(prefix + ".wv", m.wv);
            f(prefix + ".bv", m.bv);
            f(prefix + ".wo", m.wo);
            f(prefix + ".bo", m.bo);
        };
        auto proj = [&f](const std::string& prefix, auto& p) {
            f(prefix + ".w", p.w);
            f(prefix + ".b", p.b);
            f(prefix + ".ln_gain", p.norm.gain);
            f(prefix + ".ln_shift", p.norm.shift);
        };
        auto stack = [&](const std::string& prefix, auto& layers) {
            for (std::size_t i = 0; i < layers.size(); ++i) {
                const std::string base = prefix + "." + std::to_string(i);
                mha(base, layers[i].mha);
                f(base + ".ln_gain", layers[i].norm.gain);
                f(base + ".ln_shift", layers[i].norm.shift);
            }
        };
        proj("proj.dna", self.proj_dna);
        proj("proj.rna", self.proj_rna);
        proj("proj.protein", self.proj_protein);
        stack("self.dna", self.self_dna);
        stack("self.rna", self.self_rna);
        stack("self.protein", self.self_protein);
        mha("cross.dna_rna", self.cross_dna_rna);
        mha("cross.rna_protein", self.cross_rna_protein);
        f("vce.q_dna", self.vce.q_dna);
        f("vce.q_rna", self.vce.q_rna);
        f("vce.q_protein", self.vce.q_protein);
        f("vce.ffn_w1", self.vce.ffn_w1);
        f("vce.ffn_b1", self.vce.ffn_b1);
        f("vce.ffn_w2", self.vce.ffn_w2);
        f("vce.ffn_b2", self.vce.ffn_b2);
        f("head.w1", self.head.w1);
        f("head.b1", self.head.b1);
        f("head.w2", self.head.w2);
        f("head.b2", self.head.b2);
    }
};

std::vector<Matrix*> tensor_ptrs(ModelParams& p);
std::vector<const Matrix*> tensor_ptrs(const ModelParams& p);

// Zero-allocated parameters with shapes from the config.
ModelParams make_params(const ModelConfig& cfg);

// Weights scaled-uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)], biases zero,
// layer-norm gain 1 / shift 0, pooling queries scaled-uniform with fan_in d.
// Bit-deterministic for a given seed.
ModelParams init_params(const ModelConfig& cfg, RngStream& rng);

// ---- forward pass ----------------------------------------------------------

struct ProjectionCache {
    Matrix x;    // input
    Matrix lin;  // x w + b
    ops::LayerNormCache ln;
    Matrix mask;  // dropout mask, training only
    Matrix h;     // output
};

struct SelfLayerCache {
    Matrix h_in;
    ops::MhaCache mha;
    Matrix mask;
    Matrix resid;  // h_in + dropped attention output
    ops::LayerNormCache ln;
    Matrix h_out;
};

struct CrossCache {
    ops::MhaCache mha;
    Matrix mask;
    Matrix fused;  // query input + dropped attention output
};

struct PoolCache {
    Matrix logits;   // 1 x n, q H^T / sqrt(d)
    Matrix weights;  // 1 x n, softmax(logits)
    Matrix z;        // 1 x d
};

struct VceCache {
    PoolCache dna, rna, protein;
    Matrix concat;  // 1 x 3d
    Matrix lin1;    // pre-GELU
    Matrix act;
    Matrix h_vce;  // 1 x d
};

struct TaskHeadCache {
    Matrix lin1;  // pre-GELU
    Matrix act;
    Matrix mask;
    Matrix dropped;
    Matrix y;  // 1 x n_genes
};

struct ForwardRecord {
    bool training = false;
    ProjectionCache proj_dna, proj_rna, proj_protein;
    std::vector<SelfLayerCache> self_dna, self_rna, self_protein;
    CrossCache cross_dna_rna, cross_rna_protein;
    VceCache vce;
    TaskHeadCache head;

    const Matrix& h_dna() const {
        return self_dna.empty() ? proj_dna.h : self_dna.back().h_out;
    }
    const Matrix& h_rna() const {
        return self_rna.empty() ? proj_rna.h : self_rna.back().h_out;
    }
    const Matrix& h_protein() const {
        return self_protein.empty() ? proj_protein.h : self_protein.back().h_out;
    }
    const Matrix& h_rna_fused() const { return cross_dna_rna.fused; }
    const Matrix& h_protein_fused() const { return cross_rna_protein.fused; }
    const Matrix& h_vce() const { return vce.h_vce; }
    const Matrix& y_hat() const { return head.y; }
};

ProjectionCache project(const Matrix& x, const ProjectionParams& params, double eps,
                        double dropout_p, RngStream& rng, bool training);

// Per layer: H <- LayerNorm(H + Dropout(MultiHead(H, H, H))). Attention-only
// sublayer; zero layers is the identity.
std::vector<SelfLayerCache> self_attention_stack(const Matrix& h,
                                                 const std::vector<SelfAttnLayerParams>& layers,
                                                 std::size_t heads, double eps, double dropout_p,
                                                 RngStream& rng, bool training);

// fused = query_H + Dropout(MultiHead(Q=query_H, K=context_H, V=context_H));
// plain residual, no post-norm.
CrossCache cross_attend(const Matrix& query_h, const Matrix& context_h,
                        const ops::MhaParams& params, std::size_t heads, double dropout_p,
                        RngStream& rng, bool training);

// Single-head attention pooling with a learned query, scaled by sqrt(d).
PoolCache attention_pool(const Matrix& query, const Matrix& h, std::size_t d);

VceCache vce_pool(const Matrix& h_dna, const Matrix& h_rna_fused, const Matrix& h_protein_fused,
                  const VceParams& params, std::size_t d);

TaskHeadCache task_head(const Matrix& h_vce, const TaskHeadParams& params, double dropout_p,
                        RngStream& rng, bool training);

// Runs the six stages in order, retaining all attention weights. Throws
// numeric_error naming the stage if non-finite values appear.
ForwardRecord forward(const Matrix& x_dna, const Matrix& x_rna, const Matrix& x_protein,
                      const ModelParams& params, const ModelConfig& cfg, RngStream& rng,
                      bool training);

// Eval-mode forward; dropout-free, deterministic, consumes no randomness.
ForwardRecord forward_eval(const Matrix& x_dna, const Matrix& x_rna, const Matrix& x_protein,
                           const ModelParams& params, const ModelConfig& cfg);

}  // namespace cdt::model
