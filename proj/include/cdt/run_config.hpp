#pragma once

#include <filesystem>
#include <string>

#include "cdt/model.hpp"
#include "cdt/training.hpp"

namespace cdt::run {

struct DataPaths {
    std::filesystem::path dna_cache;
    std::filesystem::path rna_cache;
    std::filesystem::path protein_cache;
    std::filesystem::path dataset;
    std::filesystem::path output_dir;
    double val_fraction = 0.2;
    std::size_t alignment_samples = 100;
};

struct ReportOptions {
    std::size_t top_k = 20;
    double temperature = 1.0;
    std::string chrom;
    long long enhancer_center = 0;
};

// Union of model, training, data, and report settings; one config file
// drives a full run.
struct RunConfig {
    model::ModelConfig model;
    train::TrainConfig train;
    DataPaths data;
    ReportOptions report;
};

RunConfig load_run_config(const std::filesystem::path& file);
void write_run_config(const std::filesystem::path& file, const RunConfig& cfg);

}  // namespace cdt::run
