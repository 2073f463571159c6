#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "cdt/backward.hpp"
#include "cdt/embedding_store.hpp"
#include "cdt/model.hpp"

namespace cdt::train {

struct TrainingSample {
    std::string enhancer_id;
    std::size_t dna_index = 0;   // DNA cache sample key
    std::size_t gene_index = 0;  // aligned gene index
    double beta = 0.0;           // natural-log-scale effect size
};

struct TrainConfig {
    double lr = 1e-4;
    double weight_decay = 1e-5;
    double huber_delta = 1.0;
    std::size_t batch_size = 8;
    std::size_t max_epochs = 50;
    std::size_t patience = 10;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double scheduler_factor = 0.5;
    std::size_t scheduler_patience = 5;
    double min_lr = 1e-6;
    double positive_beta_threshold = -0.1;  // stratification cutoff on min beta
    std::uint64_t seed = 0;

    void validate() const;
};

struct EpochStats {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double val_loss = 0.0;
    double train_pearson = 0.0;
    double val_pearson = 0.0;
    double lr = 0.0;
};

struct TrainHistory {
    std::vector<EpochStats> epochs;
    std::size_t best_epoch = 0;
    std::size_t stop_epoch = 0;
};

// ---- loss ------------------------------------------------------------------

// 0.5 r^2 for |r| <= delta, else delta (|r| - 0.5 delta).
double huber(double residual, double delta);
double huber_grad(double residual, double delta);  // d loss / d residual

// Mean over the batch of huber(beta_i - y_hat_i[gene_index_i]); only the
// target component of each prediction contributes.
double masked_loss(const std::vector<Matrix>& y_hats,
                   const std::vector<TrainingSample>& batch, double delta);

// ---- optimizer & scheduler --------------------------------------------------

struct AdamWState {
    model::ModelParams m, v;
    std::size_t t = 0;

    static AdamWState for_params(const model::ModelParams& params);
};

// Decoupled weight decay with bias correction:
//   theta <- theta - lr (m_hat / (sqrt(v_hat) + eps) + weight_decay * theta)
void adamw_step(model::ModelParams& params, const model::ModelParams& grads, AdamWState& state,
                const TrainConfig& cfg, double lr);

class PlateauScheduler {
public:
    PlateauScheduler(double lr, double factor, std::size_t patience, double min_lr)
        : lr_(lr), factor_(factor), patience_(patience), min_lr_(min_lr) {}

    // Feed the monitored metric (lower is better); returns the current lr.
    double step(double metric);
    double lr() const { return lr_; }

private:
    double lr_;
    double factor_;
    std::size_t patience_;
    double min_lr_;
    double best_ = std::numeric_limits<double>::infinity();
    std::size_t bad_epochs_ = 0;
};

// ---- splitting & metrics -----------------------------------------------------

struct Split {
    std::vector<TrainingSample> train;
    std::vector<TrainingSample> val;
};

// Enhancer-level stratified split: every sample of an enhancer lands in
// exactly one side. Stratum label: "positive" iff the enhancer's minimum
// beta <= positive_beta_threshold. Deterministic given the seed.
Split split_by_enhancer(const std::vector<TrainingSample>& samples, double val_fraction,
                        std::uint64_t seed, double positive_beta_threshold = -0.1);

// Pearson correlation coefficient; throws numeric_error on zero variance.
double pearson(std::span<const double> x, std::span<const double> y);

// ---- dataset io --------------------------------------------------------------

// Text format with header: enhancer_id,dna_index,gene_index,beta
std::vector<TrainingSample> read_dataset(const std::filesystem::path& file);
void write_dataset(const std::filesystem::path& file,
                   const std::vector<TrainingSample>& samples);

// ---- loop ---------------------------------------------------------------------

struct EvalResult {
    double loss = 0.0;
    double pearson_r = 0.0;  // 0 when variance degenerates
    std::vector<double> predictions;
};

EvalResult evaluate(const model::ModelParams& params, const model::ModelConfig& cfg,
                    const std::vector<TrainingSample>& samples,
                    const store::EmbeddingCache& dna, const Matrix& rna, const Matrix& protein,
                    double huber_delta);

struct TrainResult {
    model::ModelParams best_params;
    TrainHistory history;
    double best_val_pearson = 0.0;
    double best_val_loss = 0.0;
};

// Shuffled mini-batch epochs with AdamW, plateau scheduling on validation
// loss, and early stopping on validation Pearson. Emits one line per epoch
// to `log` when non-null. Throws numeric_error on NaN loss.
TrainResult train(const model::ModelConfig& mcfg, const TrainConfig& tcfg,
                  const std::vector<TrainingSample>& train_set,
                  const std::vector<TrainingSample>& val_set, const store::EmbeddingCache& dna,
                  const Matrix& rna, const Matrix& protein, std::ostream* log = nullptr);

}  // namespace cdt::train
