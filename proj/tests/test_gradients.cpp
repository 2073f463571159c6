#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <functional>
#include <vector>

#include "cdt/backward.hpp"
#include "cdt/kernels.hpp"
#include "cdt/model.hpp"
#include "cdt/ops.hpp"
#include "cdt/training.hpp"
#include "test_helpers.hpp"

using cdt::Matrix;
namespace ops = cdt::ops;
namespace model = cdt::model;
using cdt::test::random_matrix;
using cdt::test::random_normal_matrix;

namespace {

double rel_err(double analytic, double fd) {
    return std::fabs(analytic - fd) / (std::fabs(analytic) + 1e-8);
}

struct FdSample {
    Matrix x_dna;
    std::size_t gene = 0;
    double beta = 0.0;
};

double batch_loss(const model::ModelParams& params, const model::ModelConfig& cfg,
                  const Matrix& x_rna, const Matrix& x_protein,
                  const std::vector<FdSample>& batch, bool training, std::uint64_t rng_seed) {
    double total = 0.0;
    for (const auto& s : batch) {
        cdt::RngStream rng(rng_seed);  // same mask sequence for every evaluation
        auto rec = model::forward(s.x_dna, x_rna, x_protein, params, cfg, rng, training);
        total += cdt::train::huber(s.beta - rec.y_hat()(0, s.gene), 1.0);
    }
    return total / static_cast<double>(batch.size());
}

// Accumulates analytic gradients of the batch loss into grads and returns
// per-sample DNA input gradients.
std::vector<Matrix> analytic_grads(const model::ModelParams& params,
                                   const model::ModelConfig& cfg, const Matrix& x_rna,
                                   const Matrix& x_protein, const std::vector<FdSample>& batch,
                                   bool training, std::uint64_t rng_seed,
                                   model::ModelParams& grads) {
    std::vector<Matrix> dx;
    const double n = static_cast<double>(batch.size());
    for (const auto& s : batch) {
        cdt::RngStream rng(rng_seed);
        auto rec = model::forward(s.x_dna, x_rna, x_protein, params, cfg, rng, training);
        const double residual = s.beta - rec.y_hat()(0, s.gene);
        Matrix d_y(1, cfg.n_genes);
        d_y(0, s.gene) = -cdt::train::huber_grad(residual, 1.0) / n;
        auto input_grads = model::backward(rec, params, cfg, d_y, &grads);
        dx.push_back(std::move(input_grads.dx_dna));
    }
    return dx;
}

model::ModelConfig small_config() {
    model::ModelConfig cfg;
    cfg.d = 8;
    cfg.heads = 2;
    cfg.dna_self_layers = 1;
    cfg.rna_self_layers = 1;
    cfg.protein_self_layers = 1;
    cfg.dropout_p = 0.0;
    cfg.n_genes = 3;
    cfg.dna_positions = 4;
    cfg.d_dna = 5;
    cfg.d_rna = 4;
    cfg.d_protein = 6;
    return cfg;
}

std::vector<FdSample> make_batch(const model::ModelConfig& cfg, std::uint64_t seed) {
    cdt::RngStream rng(seed);
    std::vector<FdSample> batch;
    for (std::size_t i = 0; i < 3; ++i) {
        FdSample s;
        s.x_dna = random_normal_matrix(cfg.dna_positions, cfg.d_dna, rng);
        s.gene = i % cfg.n_genes;
        s.beta = rng.uniform(-1.5, 1.5);
        batch.push_back(std::move(s));
    }
    return batch;
}

}  // namespace

TEST_CASE("layer_norm backward matches finite differences") {
    cdt::RngStream rng(41);
    Matrix x = random_matrix(3, 5, rng);
    Matrix gain = random_matrix(1, 5, rng, 0.5, 1.5);
    Matrix shift = random_matrix(1, 5, rng);
    Matrix d_out = random_matrix(3, 5, rng);
    const double eps = 1e-5;

    ops::LayerNormCache cache;
    ops::layer_norm_rows(x, gain, shift, eps, &cache);
    Matrix d_x(3, 5), d_gain(1, 5), d_shift(1, 5);
    ops::layer_norm_rows_backward(cache, gain, d_out, &d_gain, &d_shift, d_x);

    auto scalar_loss = [&](const Matrix& xm, const Matrix& g, const Matrix& b) {
        Matrix y = ops::layer_norm_rows(xm, g, b, eps);
        double total = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) total += y.data()[i] * d_out.data()[i];
        return total;
    };
    const double h = 1e-6;
    for (std::size_t i = 0; i < x.size(); ++i) {
        Matrix xp = x, xm = x;
        xp.data()[i] += h;
        xm.data()[i] -= h;
        const double fd = (scalar_loss(xp, gain, shift) - scalar_loss(xm, gain, shift)) / (2 * h);
        CHECK(rel_err(d_x.data()[i], fd) < 1e-5);
    }
    for (std::size_t i = 0; i < gain.size(); ++i) {
        Matrix gp = gain, gm = gain;
        gp.data()[i] += h;
        gm.data()[i] -= h;
        const double fd = (scalar_loss(x, gp, shift) - scalar_loss(x, gm, shift)) / (2 * h);
        CHECK(rel_err(d_gain.data()[i], fd) < 1e-5);
    }
}

TEST_CASE("scaled_dot_attention backward matches finite differences") {
    cdt::RngStream rng(43);
    const std::size_t nq = 3, nk = 4, d = 5, dv = 2;
    Matrix q = random_matrix(nq, d, rng);
    Matrix k = random_matrix(nk, d, rng);
    Matrix v = random_matrix(nk, dv, rng);
    Matrix d_out = random_matrix(nq, dv, rng);

    auto res = ops::scaled_dot_attention(q, k, v, d);
    Matrix d_q(nq, d), d_k(nk, d), d_v(nk, dv);
    ops::scaled_dot_attention_backward(q, k, v, res.weights, d, d_out, d_q, d_k, d_v);

    auto scalar_loss = [&](const Matrix& qm, const Matrix& km, const Matrix& vm) {
        auto out = ops::scaled_dot_attention(qm, km, vm, d).output;
        double total = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) total += out.data()[i] * d_out.data()[i];
        return total;
    };
    const double h = 1e-6;
    auto check_tensor = [&](const Matrix& base, const Matrix& analytic, int which) {
        for (std::size_t i = 0; i < base.size(); ++i) {
            Matrix perturbed = base;
            perturbed.data()[i] += h;
            Matrix minus = base;
            minus.data()[i] -= h;
            double fp, fm;
            if (which == 0) {
                fp = scalar_loss(perturbed, k, v);
                fm = scalar_loss(minus, k, v);
            } else if (which == 1) {
                fp = scalar_loss(q, perturbed, v);
                fm = scalar_loss(q, minus, v);
            } else {
                fp = scalar_loss(q, k, perturbed);
                fm = scalar_loss(q, k, minus);
            }
            CHECK(rel_err(analytic.data()[i], (fp - fm) / (2 * h)) < 1e-5);
        }
    };
    check_tensor(q, d_q, 0);
    check_tensor(k, d_k, 1);
    check_tensor(v, d_v, 2);
}

TEST_CASE("full-model gradients agree with central finite differences (eval mode)") {
    auto cfg = small_config();
    cdt::RngStream init_rng(2024);
    auto params = model::init_params(cfg, init_rng);
    cdt::RngStream data_rng(77);
    Matrix x_rna = random_normal_matrix(cfg.n_genes, cfg.d_rna, data_rng);
    Matrix x_protein = random_normal_matrix(cfg.n_genes, cfg.d_protein, data_rng);
    auto batch = make_batch(cfg, 55);

    auto grads = params.zeros_like();
    auto dx = analytic_grads(params, cfg, x_rna, x_protein, batch, false, 0, grads);

    const double h = 1e-5;
    auto loss_at = [&](const model::ModelParams& p) {
        return batch_loss(p, cfg, x_rna, x_protein, batch, false, 0);
    };

    double worst = 0.0;
    auto grad_ptrs = model::tensor_ptrs(grads);
    auto base_ptrs = model::tensor_ptrs(params);
    for (std::size_t ti = 0; ti < base_ptrs.size(); ++ti) {
        for (std::size_t i = 0; i < base_ptrs[ti]->size(); ++i) {
            model::ModelParams perturbed = params;
            auto ptrs = model::tensor_ptrs(perturbed);
            ptrs[ti]->data()[i] += h;
            const double lp = loss_at(perturbed);
            ptrs[ti]->data()[i] -= 2 * h;
            const double lm = loss_at(perturbed);
            const double fd = (lp - lm) / (2 * h);
            worst = std::max(worst, rel_err(grad_ptrs[ti]->data()[i], fd));
        }
    }
    CHECK(worst < 1e-4);

    // DNA input gradients for the first sample
    double worst_input = 0.0;
    for (std::size_t i = 0; i < batch[0].x_dna.size(); ++i) {
        auto perturbed = batch;
        perturbed[0].x_dna.data()[i] += h;
        const double lp = batch_loss(params, cfg, x_rna, x_protein, perturbed, false, 0);
        perturbed[0].x_dna.data()[i] -= 2 * h;
        const double lm = batch_loss(params, cfg, x_rna, x_protein, perturbed, false, 0);
        worst_input = std::max(worst_input, rel_err(dx[0].data()[i], (lp - lm) / (2 * h)));
    }
    CHECK(worst_input < 1e-4);
}

TEST_CASE("training-mode gradients replay dropout masks correctly") {
    auto cfg = small_config();
    cfg.dropout_p = 0.3;
    cdt::RngStream init_rng(11);
    auto params = model::init_params(cfg, init_rng);
    cdt::RngStream data_rng(12);
    Matrix x_rna = random_normal_matrix(cfg.n_genes, cfg.d_rna, data_rng);
    Matrix x_protein = random_normal_matrix(cfg.n_genes, cfg.d_protein, data_rng);
    auto batch = make_batch(cfg, 13);
    const std::uint64_t mask_seed = 4242;

    auto grads = params.zeros_like();
    analytic_grads(params, cfg, x_rna, x_protein, batch, true, mask_seed, grads);

    // spot-check a deterministic spread of coordinates
    const double h = 1e-5;
    auto grad_ptrs = model::tensor_ptrs(grads);
    auto base_ptrs = model::tensor_ptrs(params);
    cdt::RngStream pick(321);
    for (int round = 0; round < 120; ++round) {
        const std::size_t ti = pick.next_below(base_ptrs.size());
        const std::size_t i = pick.next_below(base_ptrs[ti]->size());
        model::ModelParams perturbed = params;
        auto ptrs = model::tensor_ptrs(perturbed);
        ptrs[ti]->data()[i] += h;
        const double lp = batch_loss(perturbed, cfg, x_rna, x_protein, batch, true, mask_seed);
        ptrs[ti]->data()[i] -= 2 * h;
        const double lm = batch_loss(perturbed, cfg, x_rna, x_protein, batch, true, mask_seed);
        CHECK(rel_err(grad_ptrs[ti]->data()[i], (lp - lm) / (2 * h)) < 1e-4);
    }
}

TEST_CASE("masked loss gradient is zero for non-target outputs") {
    auto cfg = small_config();
    cdt::RngStream rng(9);
    auto params = model::init_params(cfg, rng);
    auto inputs = cdt::test::toy_inputs(cfg, 14);
    auto rec = model::forward_eval(inputs.x_dna, inputs.x_rna, inputs.x_protein, params, cfg);
    // an all-zero cotangent must produce exactly zero gradients everywhere
    Matrix d_y(1, cfg.n_genes);
    auto grads = params.zeros_like();
    model::backward(rec, params, cfg, d_y, &grads);
    bool all_zero = true;
    grads.visit([&all_zero](const std::string&, const Matrix& m) {
        for (std::size_t i = 0; i < m.size(); ++i)
            if (m.data()[i] != 0.0) all_zero = false;
    });
    CHECK(all_zero);
}
