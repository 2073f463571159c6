#include "cdt/model.hpp"

#include <cmath>
#include <stdexcept>

#include "cdt/errors.hpp"
#include "cdt/kernels.hpp"

namespace cdt::model {

void ModelConfig::validate() const {
    if (d == 0 || heads == 0) throw config_error("config: d and heads must be positive");
    if (d % heads != 0) throw config_error("config: d must be divisible by heads");
    if (n_genes == 0) throw config_error("config: n_genes must be positive");
    if (dna_positions == 0) throw config_error("config: dna_positions must be positive");
    if (d_dna == 0 || d_rna == 0 || d_protein == 0)
        throw config_error("config: input dims must be positive");
    if (!(dropout_p >= 0.0 && dropout_p < 1.0))
        throw config_error("config: dropout_p must lie in [0, 1)");
    if (ln_eps <= 0.0) throw config_error("config: ln_eps must be positive");
}

ModelParams ModelParams::zeros_like() const {
    ModelParams z = *this;
    z.visit([](const std::string&, Matrix& m) { m.fill(0.0); });
    return z;
}

std::size_t ModelParams::parameter_count() const {
    std::size_t total = 0;
    visit([&total](const std::string&, const Matrix& m) { total += m.size(); });
    return total;
}

bool ModelParams::all_finite() const {
    bool ok = true;
    visit([&ok](const std::string&, const Matrix& m) { ok = ok && m.all_finite(); });
    return ok;
}

std::vector<Matrix*> tensor_ptrs(ModelParams& p) {
    std::vector<Matrix*> out;
    p.visit([&out](const std::string&, Matrix& m) { out.push_back(&m); });
    return out;
}

std::vector<const Matrix*> tensor_ptrs(const ModelParams& p) {
    std::vector<const Matrix*> out;
    p.visit([&out](const std::string&, const Matrix& m) { out.push_back(&m); });
    return out;
}

namespace {

ops::MhaParams make_mha(std::size_t d) {
    ops::MhaParams m;
    m.wq = Matrix(d, d);
    m.bq = Matrix(1, d);
    m.wk = Matrix(d, d);
    m.bk = Matrix(1, d);
    m.wv = Matrix(d, d);
    m.bv = Matrix(1, d);
    m.wo = Matrix(d, d);
    m.bo = Matrix(1, d);
    return m;
}

ProjectionParams make_projection(std::size_t d_in, std::size_t d) {
    ProjectionParams p;
    p.w = Matrix(d_in, d);
    p.b = Matrix(1, d);
    p.norm.gain = Matrix(1, d);
    p.norm.shift = Matrix(1, d);
    return p;
}

void init_weight(Matrix& w, std::size_t fan_in, RngStream& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-bound, bound);
}

void init_mha(ops::MhaParams& m, std::size_t d, RngStream& rng) {
    init_weight(m.wq, d, rng);
    init_weight(m.wk, d, rng);
    init_weight(m.wv, d, rng);
    init_weight(m.wo, d, rng);
}

void check_stage_finite(const Matrix& m, const char* stage) {
    if (!m.all_finite())
        throw numeric_error(std::string("non-finite values after stage: ") + stage);
}

}  // namespace

ModelParams make_params(const ModelConfig& cfg) {
    cfg.validate();
    const std::size_t d = cfg.d;
    ModelParams p;
    p.proj_dna = make_projection(cfg.d_dna, d);
    p.proj_rna = make_projection(cfg.d_rna, d);
    p.proj_protein = make_projection(cfg.d_protein, d);
    auto make_stack = [&](std::size_t layers) {
        std::vector<SelfAttnLayerParams> stack(layers);
        for (auto& layer : stack) {
            layer.mha = make_mha(d);
            layer.norm.gain = Matrix(1, d);
            layer.norm.shift = Matrix(1, d);
        }
        return stack;
    };
    p.self_dna = make_stack(cfg.dna_self_layers);
    p.self_rna = make_stack(cfg.rna_self_layers);
    p.self_protein = make_stack(cfg.protein_self_layers);
    p.cross_dna_rna = make_mha(d);
    p.cross_rna_protein = make_mha(d);
    p.vce.q_dna = Matrix(1, d);
    p.vce.q_rna = Matrix(1, d);
    p.vce.q_protein = Matrix(1, d);
    const std::size_t hidden = cfg.vce_hidden_dim();
    p.vce.ffn_w1 = Matrix(3 * d, hidden);
    p.vce.ffn_b1 = Matrix(1, hidden);
    p.vce.ffn_w2 = Matrix(hidden, d);
    p.vce.ffn_b2 = Matrix(1, d);
    const std::size_t task_hidden = cfg.task_hidden_dim();
    p.head.w1 = Matrix(d, task_hidden);
    p.head.b1 = Matrix(1, task_hidden);
    p.head.w2 = Matrix(task_hidden, cfg.n_genes);
    p.head.b2 = Matrix(1, cfg.n_genes);
    return p;
}

ModelParams init_params(const ModelConfig& cfg, RngStream& rng) {
    ModelParams p = make_params(cfg);
    auto init_proj = [&rng](ProjectionParams& proj) {
        init_weight(proj.w, proj.w.rows(), rng);
        proj.norm.gain.fill(1.0);
    };
    init_proj(p.proj_dna);
    init_proj(p.proj_rna);
    init_proj(p.proj_protein);
    auto init_stack = [&](std::vector<SelfAttnLayerParams>& stack) {
        for (auto& layer : stack) {
            init_mha(layer.mha, cfg.d, rng);
            layer.norm.gain.fill(1.0);
        }
    };
    init_stack(p.self_dna);
    init_stack(p.self_rna);
    init_stack(p.self_protein);
    init_mha(p.cross_dna_rna, cfg.d, rng);
    init_mha(p.cross_rna_protein, cfg.d, rng);
    init_weight(p.vce.q_dna, cfg.d, rng);
    init_weight(p.vce.q_rna, cfg.d, rng);
    init_weight(p.vce.q_protein, cfg.d, rng);
    init_weight(p.vce.ffn_w1, 3 * cfg.d, rng);
    init_weight(p.vce.ffn_w2, cfg.vce_hidden_dim(), rng);
    init_weight(p.head.w1, cfg.d, rng);
    init_weight(p.head.w2, cfg.task_hidden_dim(), rng);
    return p;
}

ProjectionCache project(const Matrix& x, const ProjectionParams& params, double eps,
                        double dropout_p, RngStream& rng, bool training) {
    if (x.cols() != params.w.rows())
        throw std::invalid_argument("project: input dim does not match projection");
    ProjectionCache cache;
    cache.x = x;
    cache.lin = ops::linear(x, params.w, params.b);
    Matrix normed = ops::layer_norm_rows(cache.lin, params.norm.gain, params.norm.shift, eps,
                                         &cache.ln);
    cache.h = ops::dropout(normed, dropout_p, rng, training, &cache.mask);
    return cache;
}

std::vector<SelfLayerCache> self_attention_stack(const Matrix& h,
                                                 const std::vector<SelfAttnLayerParams>& layers,
                                                 std::size_t heads, double eps, double dropout_p,
                                                 RngStream& rng, bool training) {
    std::vector<SelfLayerCache> caches;
    caches.reserve(layers.size());
    const Matrix* current = &h;
    for (const auto& layer : layers) {
        SelfLayerCache cache;
        cache.h_in = *current;
        cache.mha = ops::multi_head_attention(cache.h_in, cache.h_in, cache.h_in, layer.mha,
                                              heads);
        Matrix dropped = ops::dropout(cache.mha.out, dropout_p, rng, training, &cache.mask);
        cache.resid = cache.h_in;
        kernels::add_inplace(cache.resid, dropped);
        cache.h_out = ops::layer_norm_rows(cache.resid, layer.norm.gain, layer.norm.shift, eps,
                                           &cache.ln);
        caches.push_back(std::move(cache));
        current = &caches.back().h_out;
    }
    return caches;
}

CrossCache cross_attend(const Matrix& query_h, const Matrix& context_h,
                        const ops::MhaParams& params, std::size_t heads, double dropout_p,
                        RngStream& rng, bool training) {
    CrossCache cache;
    cache.mha = ops::multi_head_attention(query_h, context_h, context_h, params, heads);
    Matrix dropped = ops::dropout(cache.mha.out, dropout_p, rng, training, &cache.mask);
    cache.fused = query_h;
    kernels::add_inplace(cache.fused, dropped);
    return cache;
}

PoolCache attention_pool(const Matrix& query, const Matrix& h, std::size_t d) {
    if (query.rows() != 1 || query.cols() != h.cols())
        throw std::invalid_argument("attention_pool: query must be 1 x d");
    PoolCache cache;
    cache.logits = kernels::matmul_nt(query, h);
    kernels::scale_inplace(cache.logits, 1.0 / std::sqrt(static_cast<double>(d)));
    cache.weights = cache.logits;
    kernels::row_softmax_inplace(cache.weights);
    cache.z = kernels::matmul(cache.weights, h);
    return cache;
}

VceCache vce_pool(const Matrix& h_dna, const Matrix& h_rna_fused, const Matrix& h_protein_fused,
                  const VceParams& params, std::size_t d) {
    VceCache cache;
    cache.dna = attention_pool(params.q_dna, h_dna, d);
    cache.rna = attention_pool(params.q_rna, h_rna_fused, d);
    cache.protein = attention_pool(params.q_protein, h_protein_fused, d);
    cache.concat = Matrix(1, 3 * d);
    for (std::size_t j = 0; j < d; ++j) {
        cache.concat(0, j) = cache.dna.z(0, j);
        cache.concat(0, d + j) = cache.rna.z(0, j);
        cache.concat(0, 2 * d + j) = cache.protein.z(0, j);
    }
    cache.lin1 = ops::linear(cache.concat, params.ffn_w1, params.ffn_b1);
    cache.act = cache.lin1;
    ops::gelu_inplace(cache.act);
    cache.h_vce = ops::linear(cache.act, params.ffn_w2, params.ffn_b2);
    return cache;
}

TaskHeadCache task_head(const Matrix& h_vce, const TaskHeadParams& params, double dropout_p,
                        RngStream& rng, bool training) {
    TaskHeadCache cache;
    cache.lin1 = ops::linear(h_vce, params.w1, params.b1);
    cache.act = cache.lin1;
    ops::gelu_inplace(cache.act);
    cache.dropped = ops::dropout(cache.act, dropout_p, rng, training, &cache.mask);
    cache.y = ops::linear(cache.dropped, params.w2, params.b2);
    return cache;
}

ForwardRecord forward(const Matrix& x_dna, const Matrix& x_rna, const Matrix& x_protein,
                      const ModelParams& params, const ModelConfig& cfg, RngStream& rng,
                      bool training) {
    if (x_dna.rows() != cfg.dna_positions || x_dna.cols() != cfg.d_dna)
        throw std::invalid_argument("forward: DNA tensor shape does not match config");
    if (x_rna.rows() != cfg.n_genes || x_rna.cols() != cfg.d_rna)
        throw std::invalid_argument("forward: RNA tensor shape does not match config");
    if (x_protein.rows() != cfg.n_genes || x_protein.cols() != cfg.d_protein)
        throw std::invalid_argument("forward: Protein tensor shape does not match config");
    check_stage_finite(x_dna, "input");
    check_stage_finite(x_rna, "input");
    check_stage_finite(x_protein, "input");

    ForwardRecord rec;
    rec.training = training;
    rec.proj_dna = project(x_dna, params.proj_dna, cfg.ln_eps, cfg.dropout_p, rng, training);
    rec.proj_rna = project(x_rna, params.proj_rna, cfg.ln_eps, cfg.dropout_p, rng, training);
    rec.proj_protein =
        project(x_protein, params.proj_protein, cfg.ln_eps, cfg.dropout_p, rng, training);
    check_stage_finite(rec.proj_dna.h, "projection");
    check_stage_finite(rec.proj_rna.h, "projection");
    check_stage_finite(rec.proj_protein.h, "projection");

    rec.self_dna = self_attention_stack(rec.proj_dna.h, params.self_dna, cfg.heads, cfg.ln_eps,
                                        cfg.dropout_p, rng, training);
    rec.self_rna = self_attention_stack(rec.proj_rna.h, params.self_rna, cfg.heads, cfg.ln_eps,
                                        cfg.dropout_p, rng, training);
    rec.self_protein = self_attention_stack(rec.proj_protein.h, params.self_protein, cfg.heads,
                                            cfg.ln_eps, cfg.dropout_p, rng, training);
    check_stage_finite(rec.h_dna(), "self_attention");
    check_stage_finite(rec.h_rna(), "self_attention");
    check_stage_finite(rec.h_protein(), "self_attention");

    rec.cross_dna_rna = cross_attend(rec.h_rna(), rec.h_dna(), params.cross_dna_rna, cfg.heads,
                                     cfg.dropout_p, rng, training);
    check_stage_finite(rec.h_rna_fused(), "cross_attention_dna_rna");
    rec.cross_rna_protein = cross_attend(rec.h_protein(), rec.h_rna_fused(),
                                         params.cross_rna_protein, cfg.heads, cfg.dropout_p, rng,
                                         training);
    check_stage_finite(rec.h_protein_fused(), "cross_attention_rna_protein");

    rec.vce = vce_pool(rec.h_dna(), rec.h_rna_fused(), rec.h_protein_fused(), params.vce, cfg.d);
    check_stage_finite(rec.vce.h_vce, "vce");

    rec.head = task_head(rec.vce.h_vce, params.head, cfg.dropout_p, rng, training);
    check_stage_finite(rec.head.y, "task_head");
    return rec;
}

ForwardRecord forward_eval(const Matrix& x_dna, const Matrix& x_rna, const Matrix& x_protein,
                           const ModelParams& params, const ModelConfig& cfg) {
    RngStream unused(0);
    return forward(x_dna, x_rna, x_protein, params, cfg, unused, false);
}

}  // namespace cdt::model
