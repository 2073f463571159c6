#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "cdt/model.hpp"
#include "cdt/training.hpp"

namespace cdt::serialize {

nlohmann::json model_config_to_json(const model::ModelConfig& cfg);
model::ModelConfig model_config_from_json(const nlohmann::json& j);

nlohmann::json train_config_to_json(const train::TrainConfig& cfg);
train::TrainConfig train_config_from_json(const nlohmann::json& j);

nlohmann::json history_to_json(const train::TrainHistory& history);
void write_history(const std::filesystem::path& file, const train::TrainHistory& history);

// Checkpoint directory:
//   checkpoint.json                manifest (config, seed, epoch, metrics,
//                                  parameter shapes)
//   params/<tensor name>.bin       one tensor file per parameter group
struct Checkpoint {
    model::ModelConfig config;
    model::ModelParams params;
    std::uint64_t seed = 0;
    std::size_t epoch = 0;
    double val_pearson = 0.0;
    double val_loss = 0.0;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& dir);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace cdt::serialize
