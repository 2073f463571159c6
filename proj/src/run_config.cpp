#include "cdt/run_config.hpp"

#include <fstream>

#include <json.hpp>

#include "cdt/errors.hpp"
#include "cdt/serialize.hpp"

namespace cdt::run {

using nlohmann::json;

RunConfig load_run_config(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw config_error("run config: cannot open " + file.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw config_error("run config: parse failure: " + std::string(e.what()));
    }
    RunConfig cfg;
    try {
        if (!j.contains("model")) throw config_error("run config: missing section 'model'");
        if (!j.contains("train")) throw config_error("run config: missing section 'train'");
        if (!j.contains("data")) throw config_error("run config: missing section 'data'");
        cfg.model = serialize::model_config_from_json(j.at("model"));
        cfg.train = serialize::train_config_from_json(j.at("train"));
        const json& data = j.at("data");
        auto need_path = [&data](const char* field) {
            if (!data.contains(field))
                throw config_error(std::string("run config: missing field 'data.") + field +
                                   "'");
            return std::filesystem::path(data.at(field).get<std::string>());
        };
        cfg.data.dna_cache = need_path("dna_cache");
        cfg.data.rna_cache = need_path("rna_cache");
        cfg.data.protein_cache = need_path("protein_cache");
        cfg.data.dataset = need_path("dataset");
        cfg.data.output_dir = need_path("output_dir");
        cfg.data.val_fraction = data.value("val_fraction", cfg.data.val_fraction);
        cfg.data.alignment_samples = data.value("alignment_samples", cfg.data.alignment_samples);
        if (j.contains("report")) {
            const json& rep = j.at("report");
            cfg.report.top_k = rep.value("top_k", cfg.report.top_k);
            cfg.report.temperature = rep.value("temperature", cfg.report.temperature);
            cfg.report.chrom = rep.value("chrom", cfg.report.chrom);
            cfg.report.enhancer_center = rep.value("enhancer_center", cfg.report.enhancer_center);
        }
    } catch (const json::exception& e) {
        throw config_error("run config: " + std::string(e.what()));
    }
    if (!(cfg.data.val_fraction > 0.0 && cfg.data.val_fraction < 1.0))
        throw config_error("run config: val_fraction must lie in (0, 1)");
    if (cfg.report.top_k == 0) throw config_error("run config: top_k must be >= 1");
    if (cfg.report.temperature <= 0.0)
        throw config_error("run config: temperature must be positive");
    return cfg;
}

void write_run_config(const std::filesystem::path& file, const RunConfig& cfg) {
    json j;
    j["model"] = serialize::model_config_to_json(cfg.model);
    j["train"] = serialize::train_config_to_json(cfg.train);
    j["data"] = {{"dna_cache", cfg.data.dna_cache.string()},
                 {"rna_cache", cfg.data.rna_cache.string()},
                 {"protein_cache", cfg.data.protein_cache.string()},
                 {"dataset", cfg.data.dataset.string()},
                 {"output_dir", cfg.data.output_dir.string()},
                 {"val_fraction", cfg.data.val_fraction},
                 {"alignment_samples", cfg.data.alignment_samples}};
    j["report"] = {{"top_k", cfg.report.top_k},
                   {"temperature", cfg.report.temperature},
                   {"chrom", cfg.report.chrom},
                   {"enhancer_center", cfg.report.enhancer_center}};
    std::ofstream out(file);
    if (!out) throw config_error("run config: cannot open " + file.string() + " for writing");
    out << j.dump(2) << '\n';
}

}  // namespace cdt::run
