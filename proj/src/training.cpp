#include "cdt/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include "cdt/errors.hpp"
#include "cdt/rng.hpp"

namespace cdt::train {

void TrainConfig::validate() const {
    if (lr <= 0.0 || min_lr <= 0.0) throw config_error("train config: lr must be positive");
    if (weight_decay < 0.0) throw config_error("train config: weight_decay must be >= 0");
    if (huber_delta <= 0.0) throw config_error("train config: huber_delta must be positive");
    if (batch_size == 0 || max_epochs == 0)
        throw config_error("train config: batch_size and max_epochs must be positive");
    if (patience == 0) throw config_error("train config: patience must be >= 1");
    if (!(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0))
        throw config_error("train config: adam betas must lie in (0, 1)");
    if (adam_eps <= 0.0) throw config_error("train config: adam_eps must be positive");
    if (!(scheduler_factor > 0.0 && scheduler_factor < 1.0))
        throw config_error("train config: scheduler_factor must lie in (0, 1)");
    if (scheduler_patience == 0)
        throw config_error("train config: scheduler_patience must be >= 1");
}

double huber(double residual, double delta) {
    if (delta <= 0.0) throw std::invalid_argument("huber: delta must be positive");
    const double a = std::fabs(residual);
    if (a <= delta) return 0.5 * residual * residual;
    return delta * (a - 0.5 * delta);
}

double huber_grad(double residual, double delta) {
    if (delta <= 0.0) throw std::invalid_argument("huber: delta must be positive");
    if (std::fabs(residual) <= delta) return residual;
    return residual > 0.0 ? delta : -delta;
}

double masked_loss(const std::vector<Matrix>& y_hats,
                   const std::vector<TrainingSample>& batch, double delta) {
    if (batch.empty() || y_hats.size() != batch.size())
        throw std::invalid_argument("masked_loss: empty or mismatched batch");
    double total = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        if (batch[i].gene_index >= y_hats[i].cols())
            throw data_error("masked_loss: gene_index out of range");
        total += huber(batch[i].beta - y_hats[i](0, batch[i].gene_index), delta);
    }
    return total / static_cast<double>(batch.size());
}

AdamWState AdamWState::for_params(const model::ModelParams& params) {
    AdamWState state;
    state.m = params.zeros_like();
    state.v = params.zeros_like();
    return state;
}

void adamw_step(model::ModelParams& params, const model::ModelParams& grads, AdamWState& state,
                const TrainConfig& cfg, double lr) {
    ++state.t;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    auto p = model::tensor_ptrs(params);
    auto g = model::tensor_ptrs(grads);
    auto m = model::tensor_ptrs(state.m);
    auto v = model::tensor_ptrs(state.v);
    for (std::size_t ti = 0; ti < p.size(); ++ti) {
        if (!p[ti]->same_shape(*g[ti]))
            throw std::invalid_argument("adamw_step: gradient shape mismatch");
        double* theta = p[ti]->data();
        const double* grad = g[ti]->data();
        double* m1 = m[ti]->data();
        double* m2 = v[ti]->data();
        for (std::size_t i = 0; i < p[ti]->size(); ++i) {
            m1[i] = cfg.beta1 * m1[i] + (1.0 - cfg.beta1) * grad[i];
            m2[i] = cfg.beta2 * m2[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
            const double m_hat = m1[i] / bc1;
            const double v_hat = m2[i] / bc2;
            theta[i] -= lr * (m_hat / (std::sqrt(v_hat) + cfg.adam_eps) +
                              cfg.weight_decay * theta[i]);
        }
    }
}

double PlateauScheduler::step(double metric) {
    if (!std::isfinite(metric)) throw numeric_error("scheduler: non-finite metric");
    if (metric < best_ - 1e-8) {
        best_ = metric;
        bad_epochs_ = 0;
    } else {
        ++bad_epochs_;
        if (bad_epochs_ >= patience_) {
            lr_ = std::max(lr_ * factor_, min_lr_);
            bad_epochs_ = 0;
        }
    }
    return lr_;
}

Split split_by_enhancer(const std::vector<TrainingSample>& samples, double val_fraction,
                        std::uint64_t seed, double positive_beta_threshold) {
    if (!(val_fraction > 0.0 && val_fraction < 1.0))
        throw std::invalid_argument("split_by_enhancer: val_fraction must lie in (0, 1)");
    // group by enhancer in first-appearance order
    std::vector<std::string> enhancers;
    std::map<std::string, double> min_beta;
    for (const auto& s : samples) {
        auto [it, inserted] = min_beta.emplace(s.enhancer_id, s.beta);
        if (inserted)
            enhancers.push_back(s.enhancer_id);
        else
            it->second = std::min(it->second, s.beta);
    }
    if (enhancers.size() < 2)
        throw data_error("split_by_enhancer: need at least 2 enhancers");

    std::vector<std::string> strata[2];  // 0 = positive, 1 = negative
    for (const auto& id : enhancers)
        strata[min_beta.at(id) <= positive_beta_threshold ? 0 : 1].push_back(id);

    RngStream rng(seed);
    std::map<std::string, bool> in_val;
    for (auto& stratum : strata) {
        rng.shuffle(stratum.begin(), stratum.end());
        const auto n_val = static_cast<std::size_t>(
            std::llround(val_fraction * static_cast<double>(stratum.size())));
        for (std::size_t i = 0; i < stratum.size(); ++i) in_val[stratum[i]] = i < n_val;
    }

    Split split;
    for (const auto& s : samples)
        (in_val.at(s.enhancer_id) ? split.val : split.train).push_back(s);
    return split;
}

double pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw std::invalid_argument("pearson: length mismatch");
    if (x.size() < 2) throw std::invalid_argument("pearson: need at least 2 points");
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) throw numeric_error("pearson: zero variance input");
    return std::clamp(sxy / (std::sqrt(sxx) * std::sqrt(syy)), -1.0, 1.0);
}

namespace {

// Training-loop variant: degenerate inputs score 0 instead of throwing.
double guarded_pearson(std::span<const double> x, std::span<const double> y) {
    try {
        return pearson(x, y);
    } catch (const std::exception&) {
        return 0.0;
    }
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

std::vector<TrainingSample> read_dataset(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw data_error("dataset: cannot open " + file.string());
    std::string line;
    if (!std::getline(in, line)) throw data_error("dataset: empty file " + file.string());
    std::vector<TrainingSample> samples;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        std::istringstream row(line);
        std::string field;
        TrainingSample s;
        try {
            if (!std::getline(row, field, ',')) throw data_error("missing enhancer_id");
            s.enhancer_id = trim(field);
            if (!std::getline(row, field, ',')) throw data_error("missing dna_index");
            s.dna_index = std::stoull(trim(field));
            if (!std::getline(row, field, ',')) throw data_error("missing gene_index");
            s.gene_index = std::stoull(trim(field));
            if (!std::getline(row, field, ',')) throw data_error("missing beta");
            s.beta = std::stod(trim(field));
        } catch (const std::exception& e) {
            throw data_error("dataset: bad row at line " + std::to_string(line_no) + " in " +
                             file.string() + ": " + e.what());
        }
        if (!std::isfinite(s.beta))
            throw data_error("dataset: non-finite beta at line " + std::to_string(line_no));
        samples.push_back(std::move(s));
    }
    return samples;
}

void write_dataset(const std::filesystem::path& file,
                   const std::vector<TrainingSample>& samples) {
    std::ofstream out(file);
    if (!out) throw data_error("dataset: cannot open " + file.string() + " for writing");
    out << "enhancer_id,dna_index,gene_index,beta\n";
    out.precision(17);
    for (const auto& s : samples)
        out << s.enhancer_id << ',' << s.dna_index << ',' << s.gene_index << ',' << s.beta
            << '\n';
}

EvalResult evaluate(const model::ModelParams& params, const model::ModelConfig& cfg,
                    const std::vector<TrainingSample>& samples,
                    const store::EmbeddingCache& dna, const Matrix& rna, const Matrix& protein,
                    double huber_delta) {
    EvalResult result;
    result.predictions.reserve(samples.size());
    std::vector<double> betas;
    betas.reserve(samples.size());
    double total = 0.0;
    for (const auto& s : samples) {
        if (s.gene_index >= cfg.n_genes) throw data_error("evaluate: gene_index out of range");
        auto rec = model::forward_eval(dna.dna_sample(s.dna_index), rna, protein, params, cfg);
        const double pred = rec.y_hat()(0, s.gene_index);
        result.predictions.push_back(pred);
        betas.push_back(s.beta);
        total += huber(s.beta - pred, huber_delta);
    }
    result.loss = samples.empty() ? 0.0 : total / static_cast<double>(samples.size());
    result.pearson_r = guarded_pearson(result.predictions, betas);
    return result;
}

TrainResult train(const model::ModelConfig& mcfg, const TrainConfig& tcfg,
                  const std::vector<TrainingSample>& train_set,
                  const std::vector<TrainingSample>& val_set, const store::EmbeddingCache& dna,
                  const Matrix& rna, const Matrix& protein, std::ostream* log) {
    mcfg.validate();
    tcfg.validate();
    if (train_set.empty()) throw data_error("train: empty training set");

    RngStream init_rng(tcfg.seed);
    RngStream dropout_rng(tcfg.seed + 1);
    RngStream shuffle_rng(tcfg.seed + 2);

    model::ModelParams params = model::init_params(mcfg, init_rng);
    AdamWState opt_state = AdamWState::for_params(params);
    PlateauScheduler scheduler(tcfg.lr, tcfg.scheduler_factor, tcfg.scheduler_patience,
                               tcfg.min_lr);
    double lr = tcfg.lr;

    TrainResult result;
    result.best_params = params;
    double best_val_r = -std::numeric_limits<double>::infinity();
    std::size_t best_epoch = 0;

    std::vector<std::size_t> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (std::size_t epoch = 1; epoch <= tcfg.max_epochs; ++epoch) {
        shuffle_rng.shuffle(order.begin(), order.end());
        for (std::size_t start = 0; start < order.size(); start += tcfg.batch_size) {
            const std::size_t count = std::min(tcfg.batch_size, order.size() - start);
            model::ModelParams grads = params.zeros_like();
            double batch_loss = 0.0;
            for (std::size_t bi = 0; bi < count; ++bi) {
                const auto& s = train_set[order[start + bi]];
                if (s.gene_index >= mcfg.n_genes)
                    throw data_error("train: gene_index out of range");
                auto rec = model::forward(dna.dna_sample(s.dna_index), rna, protein, params,
                                          mcfg, dropout_rng, true);
                const double residual = s.beta - rec.y_hat()(0, s.gene_index);
                batch_loss += huber(residual, tcfg.huber_delta);
                Matrix d_y(1, mcfg.n_genes);
                d_y(0, s.gene_index) = -huber_grad(residual, tcfg.huber_delta) /
                                       static_cast<double>(count);
                model::backward(rec, params, mcfg, d_y, &grads);
            }
            batch_loss /= static_cast<double>(count);
            if (!std::isfinite(batch_loss))
                throw numeric_error("train: NaN loss at epoch " + std::to_string(epoch) +
                                    ", batch " + std::to_string(start / tcfg.batch_size));
            adamw_step(params, grads, opt_state, tcfg, lr);
        }

        EvalResult train_eval =
            evaluate(params, mcfg, train_set, dna, rna, protein, tcfg.huber_delta);
        EvalResult val_eval = evaluate(params, mcfg, val_set, dna, rna, protein,
                                       tcfg.huber_delta);
        EpochStats stats{epoch, train_eval.loss, val_eval.loss, train_eval.pearson_r,
                         val_eval.pearson_r, lr};
        result.history.epochs.push_back(stats);
        if (log)
            *log << "epoch " << epoch << " train_loss " << stats.train_loss << " val_loss "
                 << stats.val_loss << " train_r " << stats.train_pearson << " val_r "
                 << stats.val_pearson << " lr " << stats.lr << '\n';

        if (stats.val_pearson > best_val_r) {
            best_val_r = stats.val_pearson;
            best_epoch = epoch;
            result.best_params = params;
            result.best_val_pearson = stats.val_pearson;
            result.best_val_loss = stats.val_loss;
        }
        result.history.stop_epoch = epoch;
        lr = scheduler.step(val_eval.loss);
        if (epoch - best_epoch >= tcfg.patience) break;
    }
    result.history.best_epoch = best_epoch;
    return result;
}

}  // namespace cdt::train
