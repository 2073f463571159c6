#include "cdt/serialize.hpp"

#include <fstream>

#include "cdt/embedding_store.hpp"
#include "cdt/errors.hpp"

namespace cdt::serialize {

namespace fs = std::filesystem;
using nlohmann::json;

nlohmann::json model_config_to_json(const model::ModelConfig& cfg) {
    json j;
    j["d"] = cfg.d;
    j["heads"] = cfg.heads;
    j["dna_self_layers"] = cfg.dna_self_layers;
    j["rna_self_layers"] = cfg.rna_self_layers;
    j["protein_self_layers"] = cfg.protein_self_layers;
    j["dropout_p"] = cfg.dropout_p;
    j["n_genes"] = cfg.n_genes;
    j["dna_positions"] = cfg.dna_positions;
    j["d_dna"] = cfg.d_dna;
    j["d_rna"] = cfg.d_rna;
    j["d_protein"] = cfg.d_protein;
    j["vce_hidden"] = cfg.vce_hidden;
    j["head_hidden"] = cfg.head_hidden;
    j["ln_eps"] = cfg.ln_eps;
    return j;
}

model::ModelConfig model_config_from_json(const nlohmann::json& j) {
    model::ModelConfig cfg;
    try {
        cfg.d = j.value("d", cfg.d);
        cfg.heads = j.value("heads", cfg.heads);
        cfg.dna_self_layers = j.value("dna_self_layers", cfg.dna_self_layers);
        cfg.rna_self_layers = j.value("rna_self_layers", cfg.rna_self_layers);
        cfg.protein_self_layers = j.value("protein_self_layers", cfg.protein_self_layers);
        cfg.dropout_p = j.value("dropout_p", cfg.dropout_p);
        cfg.n_genes = j.at("n_genes").get<std::size_t>();
        cfg.dna_positions = j.at("dna_positions").get<std::size_t>();
        cfg.d_dna = j.at("d_dna").get<std::size_t>();
        cfg.d_rna = j.at("d_rna").get<std::size_t>();
        cfg.d_protein = j.at("d_protein").get<std::size_t>();
        cfg.vce_hidden = j.value("vce_hidden", cfg.vce_hidden);
        cfg.head_hidden = j.value("head_hidden", cfg.head_hidden);
        cfg.ln_eps = j.value("ln_eps", cfg.ln_eps);
    } catch (const json::exception& e) {
        throw config_error("model config: " + std::string(e.what()));
    }
    cfg.validate();
    return cfg;
}

nlohmann::json train_config_to_json(const train::TrainConfig& cfg) {
    json j;
    j["lr"] = cfg.lr;
    j["weight_decay"] = cfg.weight_decay;
    j["huber_delta"] = cfg.huber_delta;
    j["batch_size"] = cfg.batch_size;
    j["max_epochs"] = cfg.max_epochs;
    j["patience"] = cfg.patience;
    j["beta1"] = cfg.beta1;
    j["beta2"] = cfg.beta2;
    j["adam_eps"] = cfg.adam_eps;
    j["scheduler_factor"] = cfg.scheduler_factor;
    j["scheduler_patience"] = cfg.scheduler_patience;
    j["min_lr"] = cfg.min_lr;
    j["positive_beta_threshold"] = cfg.positive_beta_threshold;
    j["seed"] = cfg.seed;
    return j;
}

train::TrainConfig train_config_from_json(const nlohmann::json& j) {
    train::TrainConfig cfg;
    try {
        if (!j.contains("seed")) throw config_error("train config: missing field 'seed'");
        cfg.seed = j.at("seed").get<std::uint64_t>();
        cfg.lr = j.value("lr", cfg.lr);
        cfg.weight_decay = j.value("weight_decay", cfg.weight_decay);
        cfg.huber_delta = j.value("huber_delta", cfg.huber_delta);
        cfg.batch_size = j.value("batch_size", cfg.batch_size);
        cfg.max_epochs = j.value("max_epochs", cfg.max_epochs);
        cfg.patience = j.value("patience", cfg.patience);
        cfg.beta1 = j.value("beta1", cfg.beta1);
        cfg.beta2 = j.value("beta2", cfg.beta2);
        cfg.adam_eps = j.value("adam_eps", cfg.adam_eps);
        cfg.scheduler_factor = j.value("scheduler_factor", cfg.scheduler_factor);
        cfg.scheduler_patience = j.value("scheduler_patience", cfg.scheduler_patience);
        cfg.min_lr = j.value("min_lr", cfg.min_lr);
        cfg.positive_beta_threshold =
            j.value("positive_beta_threshold", cfg.positive_beta_threshold);
    } catch (const json::exception& e) {
        throw config_error("train config: " + std::string(e.what()));
    }
    cfg.validate();
    return cfg;
}

nlohmann::json history_to_json(const train::TrainHistory& history) {
    json epochs = json::array();
    for (const auto& e : history.epochs) {
        json j;
        j["epoch"] = e.epoch;
        j["train_loss"] = e.train_loss;
        j["val_loss"] = e.val_loss;
        j["train_pearson"] = e.train_pearson;
        j["val_pearson"] = e.val_pearson;
        j["lr"] = e.lr;
        epochs.push_back(std::move(j));
    }
    json j;
    j["epochs"] = std::move(epochs);
    j["best_epoch"] = history.best_epoch;
    j["stop_epoch"] = history.stop_epoch;
    return j;
}

void write_history(const std::filesystem::path& file, const train::TrainHistory& history) {
    std::ofstream out(file);
    if (!out) throw data_error("history: cannot open " + file.string());
    out << history_to_json(history).dump(2) << '\n';
}

void save_checkpoint(const Checkpoint& ckpt, const fs::path& dir) {
    fs::create_directories(dir / "params");
    json manifest;
    manifest["format_version"] = 1;
    manifest["config"] = model_config_to_json(ckpt.config);
    manifest["seed"] = ckpt.seed;
    manifest["epoch"] = ckpt.epoch;
    manifest["metrics"] = {{"val_pearson", ckpt.val_pearson}, {"val_loss", ckpt.val_loss}};
    json shapes = json::array();
    ckpt.params.visit([&](const std::string& name, const Matrix& m) {
        shapes.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}});
        store::write_tensor(dir / "params" / (name + ".bin"), m);
    });
    manifest["parameters"] = std::move(shapes);
    std::ofstream out(dir / "checkpoint.json");
    if (!out) throw data_error("checkpoint: cannot open manifest in " + dir.string());
    out << manifest.dump(2) << '\n';
}

Checkpoint load_checkpoint(const fs::path& dir) {
    std::ifstream in(dir / "checkpoint.json");
    if (!in) throw data_error("checkpoint: missing checkpoint.json in " + dir.string());
    json manifest;
    try {
        in >> manifest;
    } catch (const json::exception& e) {
        throw data_error("checkpoint: manifest parse failure: " + std::string(e.what()));
    }
    Checkpoint ckpt;
    try {
        ckpt.config = model_config_from_json(manifest.at("config"));
        ckpt.seed = manifest.value("seed", std::uint64_t{0});
        ckpt.epoch = manifest.value("epoch", std::size_t{0});
        if (manifest.contains("metrics")) {
            ckpt.val_pearson = manifest["metrics"].value("val_pearson", 0.0);
            ckpt.val_loss = manifest["metrics"].value("val_loss", 0.0);
        }
    } catch (const json::exception& e) {
        throw data_error("checkpoint: " + std::string(e.what()));
    }
    ckpt.params = model::make_params(ckpt.config);
    ckpt.params.visit([&](const std::string& name, Matrix& m) {
        Matrix loaded = store::read_tensor(dir / "params" / (name + ".bin"));
        if (!loaded.same_shape(m))
            throw data_error("checkpoint: tensor '" + name + "' has unexpected shape");
        m = std::move(loaded);
    });
    return ckpt;
}

}  // namespace cdt::serialize
