// cdt — command-line front end: synthetic data generation, cache validation,
// training, evaluation, and interpretation reports.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "cdt/backward.hpp"
#include "cdt/errors.hpp"
#include "cdt/interpretation.hpp"
#include "cdt/run_config.hpp"
#include "cdt/serialize.hpp"
#include "cdt/synthetic.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Wall-clock metadata is quarantined here so every other artifact is
// byte-identical across reruns.
void write_run_meta(const fs::path& dir, const std::string& command) {
    std::ofstream out(dir / "run_meta.json");
    if (!out) return;
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char buf[64];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    json j;
    j["command"] = command;
    j["finished_at"] = buf;
    out << j.dump(2) << '\n';
}

struct LoadedData {
    cdt::store::EmbeddingCache dna, rna, protein;
    std::vector<cdt::train::TrainingSample> samples;
};

LoadedData load_data(const fs::path& dna_dir, const fs::path& rna_dir,
                     const fs::path& protein_dir, const fs::path& dataset) {
    LoadedData data;
    data.dna = cdt::store::read_cache(dna_dir);
    data.rna = cdt::store::read_cache(rna_dir);
    data.protein = cdt::store::read_cache(protein_dir);
    if (data.dna.manifest.modality != cdt::store::Modality::DNA)
        throw cdt::data_error("expected a DNA cache at " + dna_dir.string());
    if (data.rna.manifest.modality != cdt::store::Modality::RNA)
        throw cdt::data_error("expected an RNA cache at " + rna_dir.string());
    if (data.protein.manifest.modality != cdt::store::Modality::Protein)
        throw cdt::data_error("expected a Protein cache at " + protein_dir.string());
    data.samples = cdt::train::read_dataset(dataset);
    return data;
}

void check_alignment_or_throw(const cdt::store::EmbeddingCache& rna,
                              const cdt::store::EmbeddingCache& protein, std::size_t samples,
                              std::uint64_t seed) {
    cdt::RngStream rng(seed);
    auto report = cdt::store::verify_alignment(rna, protein, samples, rng);
    std::cout << report.summary() << '\n';
    if (!report.passed) throw cdt::data_error(report.summary());
}

int cmd_gen(const fs::path& spec_file, const fs::path& out_dir) {
    auto spec = cdt::synth::read_spec(spec_file);
    auto caches = cdt::synth::gen_caches(spec);
    auto planted = cdt::synth::plant_signal(caches.dna, spec);
    fs::create_directories(out_dir);
    cdt::store::write_cache(caches.dna, out_dir / "dna_cache");
    cdt::store::write_cache(caches.rna, out_dir / "rna_cache");
    cdt::store::write_cache(caches.protein, out_dir / "protein_cache");
    cdt::train::write_dataset(out_dir / "dataset.csv", planted.samples);
    cdt::synth::write_ground_truth(out_dir / "ground_truth.json", planted.truth);
    write_run_meta(out_dir, "gen");
    std::cout << "generated " << spec.n_samples << " DNA samples (" << spec.dna_positions
              << " x " << spec.d_dna << "), " << spec.n_genes << " genes (RNA " << spec.d_rna
              << ", Protein " << spec.d_protein << "), seed " << spec.seed << '\n'
              << "dataset: " << planted.samples.size() << " samples, "
              << spec.planted_positions.size() << " planted position(s), noise_std "
              << spec.noise_std << '\n'
              << "output: " << out_dir.string() << '\n';
    return 0;
}

int cmd_cache_verify(const std::vector<fs::path>& dirs) {
    std::vector<cdt::store::EmbeddingCache> gene_caches;
    for (const auto& dir : dirs) {
        auto cache = cdt::store::read_cache(dir);
        std::cout << dir.string() << ": ok (" << cdt::store::to_string(cache.manifest.modality);
        if (cache.manifest.modality == cdt::store::Modality::DNA)
            std::cout << ", " << cache.manifest.sample_count << " samples x "
                      << cache.manifest.positions << " x " << cache.manifest.dim;
        else
            std::cout << ", " << cache.manifest.gene_count << " genes x " << cache.manifest.dim;
        std::cout << ")\n";
        if (cache.manifest.modality != cdt::store::Modality::DNA)
            gene_caches.push_back(std::move(cache));
    }
    if (gene_caches.size() >= 2)
        check_alignment_or_throw(gene_caches[0], gene_caches[1], 100, 0);
    return 0;
}

int cmd_train(const fs::path& config_file) {
    auto cfg = cdt::run::load_run_config(config_file);
    auto data = load_data(cfg.data.dna_cache, cfg.data.rna_cache, cfg.data.protein_cache,
                          cfg.data.dataset);
    check_alignment_or_throw(data.rna, data.protein, cfg.data.alignment_samples,
                             cfg.train.seed + 4);
    if (data.rna.manifest.gene_count != cfg.model.n_genes)
        throw cdt::data_error("config n_genes does not match the gene caches");

    auto split = cdt::train::split_by_enhancer(data.samples, cfg.data.val_fraction,
                                               cfg.train.seed + 3,
                                               cfg.train.positive_beta_threshold);
    std::cout << "split: " << split.train.size() << " train / " << split.val.size()
              << " val samples\n";
    auto result = cdt::train::train(cfg.model, cfg.train, split.train, split.val, data.dna,
                                    data.rna.shared, data.protein.shared, &std::cout);

    fs::create_directories(cfg.data.output_dir);
    cdt::serialize::Checkpoint ckpt;
    ckpt.config = cfg.model;
    ckpt.params = std::move(result.best_params);
    ckpt.seed = cfg.train.seed;
    ckpt.epoch = result.history.best_epoch;
    ckpt.val_pearson = result.best_val_pearson;
    ckpt.val_loss = result.best_val_loss;
    cdt::serialize::save_checkpoint(ckpt, cfg.data.output_dir / "checkpoint");
    cdt::serialize::write_history(cfg.data.output_dir / "history.json", result.history);
    write_run_meta(cfg.data.output_dir, "train");
    std::cout << "best epoch " << result.history.best_epoch << " val_r "
              << result.best_val_pearson << "; stopped at epoch " << result.history.stop_epoch
              << '\n'
              << "checkpoint: " << (cfg.data.output_dir / "checkpoint").string() << '\n';
    return 0;
}

int cmd_eval(const fs::path& ckpt_dir, const fs::path& dataset, const fs::path& dna_dir,
             const fs::path& rna_dir, const fs::path& protein_dir, const fs::path& out_dir) {
    auto ckpt = cdt::serialize::load_checkpoint(ckpt_dir);
    auto data = load_data(dna_dir, rna_dir, protein_dir, dataset);
    if (data.samples.empty()) throw cdt::config_error("eval: dataset is empty");
    if (data.rna.manifest.gene_count != ckpt.config.n_genes)
        throw cdt::data_error("eval: checkpoint n_genes does not match the gene caches");

    auto eval = cdt::train::evaluate(ckpt.params, ckpt.config, data.samples, data.dna,
                                     data.rna.shared, data.protein.shared, 1.0);
    std::cout << "n " << data.samples.size() << "\npearson_r " << eval.pearson_r
              << "\nmean_huber " << eval.loss << '\n';
    fs::create_directories(out_dir);
    std::ofstream out(out_dir / "predictions.csv");
    if (!out) throw cdt::data_error("eval: cannot write predictions.csv");
    out << "enhancer_id,gene_index,beta,beta_hat\n";
    out.precision(17);
    for (std::size_t i = 0; i < data.samples.size(); ++i)
        out << data.samples[i].enhancer_id << ',' << data.samples[i].gene_index << ','
            << data.samples[i].beta << ',' << eval.predictions[i] << '\n';
    write_run_meta(out_dir, "eval");
    return 0;
}

int cmd_report(const fs::path& ckpt_dir, const fs::path& dataset, const fs::path& dna_dir,
               const fs::path& rna_dir, const fs::path& protein_dir, const fs::path& out_dir,
               std::size_t top_k_count, double temperature, const std::string& chrom,
               long long enhancer_center, const std::vector<std::string>& formats,
               const fs::path& ground_truth_file) {
    namespace itp = cdt::interpret;
    auto ckpt = cdt::serialize::load_checkpoint(ckpt_dir);
    auto data = load_data(dna_dir, rna_dir, protein_dir, dataset);
    if (data.samples.empty()) throw cdt::config_error("report: dataset is empty");
    if (top_k_count == 0 || top_k_count > ckpt.config.dna_positions)
        throw cdt::config_error("report: top-k must lie in [1, dna_positions]");

    itp::BinMapping mapping;
    mapping.enhancer_center = enhancer_center;
    mapping.positions = ckpt.config.dna_positions;

    std::vector<itp::SampleReport> reports;
    reports.reserve(data.samples.size());
    for (const auto& s : data.samples) {
        auto rec = cdt::model::forward_eval(data.dna.dna_sample(s.dna_index), data.rna.shared,
                                            data.protein.shared, ckpt.params, ckpt.config);
        auto attention = itp::extract_cross_attention(rec, itp::CrossLayer::DnaToRna);
        auto gradient = itp::gradient_importance(rec, ckpt.params, ckpt.config, s.gene_index);

        itp::SampleReport r;
        r.sample_id = s.enhancer_id + "#" + std::to_string(s.dna_index);
        r.gene_index = s.gene_index;
        r.attention_full = attention.head_mean;
        auto row = attention.head_mean.row(s.gene_index);
        r.attention = itp::temperature_scale(row, temperature);
        r.gradient = gradient.importance;
        r.attention_top = itp::top_k(r.attention, top_k_count);
        r.gradient_top = itp::top_k(r.gradient, top_k_count);
        r.overlap = itp::overlap_count(r.attention_top, r.gradient_top);
        r.attention_peak_offset_bp = mapping.offset_of_bin(itp::peak_position(r.attention));
        r.gradient_peak_offset_bp = mapping.offset_of_bin(itp::peak_position(r.gradient));
        reports.push_back(std::move(r));
    }

    auto summary = itp::summarize_reports(reports, top_k_count);

    fs::path truth_file = ground_truth_file;
    if (truth_file.empty() && fs::exists(dataset.parent_path() / "ground_truth.json"))
        truth_file = dataset.parent_path() / "ground_truth.json";
    if (!truth_file.empty()) {
        auto truth = cdt::synth::read_ground_truth(truth_file);
        std::size_t top1 = 0, top3 = 0;
        for (const auto& r : reports) {
            for (const auto& planted : truth.planted_positions) {
                const auto& top = r.gradient_top;
                if (!top.empty() && top[0] == planted.position) ++top1;
                for (std::size_t k = 0; k < std::min<std::size_t>(3, top.size()); ++k)
                    if (top[k] == planted.position) {
                        ++top3;
                        break;
                    }
            }
        }
        summary.recovery_top1 = static_cast<double>(top1) / static_cast<double>(reports.size());
        summary.recovery_top3 = static_cast<double>(top3) / static_cast<double>(reports.size());
    }

    fs::create_directories(out_dir);
    for (const auto& fmt_name : formats) {
        const auto fmt = itp::report_format_from_string(fmt_name);
        const fs::path file = out_dir / ("report." + fmt_name);
        itp::export_report(reports, summary, mapping, fmt, file, chrom);
        std::cout << "wrote " << file.string() << '\n';
    }
    write_run_meta(out_dir, "report");

    std::cout << "samples " << reports.size() << "\nmean_overlap " << summary.mean_overlap
              << " of " << top_k_count << "\nattention_peak_mean_abs_bp "
              << summary.attention_peaks.mean_abs_offset_bp << " (within 50kb: "
              << summary.attention_peaks.fraction_within_50kb << ")\ngradient_peak_mean_abs_bp "
              << summary.gradient_peaks.mean_abs_offset_bp << " (within 50kb: "
              << summary.gradient_peaks.fraction_within_50kb << ")\n";
    if (summary.recovery_top1 >= 0.0)
        std::cout << "planted-position recovery: top1 " << summary.recovery_top1 << ", top3 "
                  << summary.recovery_top3 << '\n';
    return 0;
}

int cmd_param_count(const fs::path& config_file) {
    std::ifstream in(config_file);
    if (!in) throw cdt::config_error("param-count: cannot open " + config_file.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw cdt::config_error("param-count: parse failure: " + std::string(e.what()));
    }
    auto cfg = cdt::serialize::model_config_from_json(j.contains("model") ? j.at("model") : j);
    auto params = cdt::model::make_params(cfg);
    std::map<std::string, std::size_t> groups;
    params.visit([&groups](const std::string& name, const cdt::Matrix& m) {
        groups[name.substr(0, name.find('.'))] += m.size();
    });
    for (const auto& [group, count] : groups)
        std::cout << group << ": " << count << '\n';
    std::cout << "total trainable parameters: " << params.parameter_count() << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Central Dogma Transformer engine"};
    app.require_subcommand(1);

    fs::path gen_spec, gen_out;
    auto* gen = app.add_subcommand("gen", "generate synthetic caches and a dataset");
    gen->add_option("spec", gen_spec, "synthetic spec JSON")->required();
    gen->add_option("out", gen_out, "output directory")->required();

    std::vector<fs::path> verify_dirs;
    auto* cache = app.add_subcommand("cache", "cache utilities");
    auto* verify = cache->add_subcommand("verify", "validate cache directories");
    verify->add_option("dirs", verify_dirs, "cache directories")->required();

    fs::path train_config;
    auto* train_cmd = app.add_subcommand("train", "train from a run config");
    train_cmd->add_option("config", train_config, "run config JSON")->required();

    fs::path eval_ckpt, eval_dataset, eval_dna, eval_rna, eval_protein, eval_out;
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    eval_cmd->add_option("--checkpoint", eval_ckpt)->required();
    eval_cmd->add_option("--dataset", eval_dataset)->required();
    eval_cmd->add_option("--dna-cache", eval_dna)->required();
    eval_cmd->add_option("--rna-cache", eval_rna)->required();
    eval_cmd->add_option("--protein-cache", eval_protein)->required();
    eval_cmd->add_option("--out", eval_out)->required();

    fs::path rep_ckpt, rep_dataset, rep_dna, rep_rna, rep_protein, rep_out, rep_truth;
    std::size_t rep_topk = 20;
    double rep_temperature = 1.0;
    std::string rep_chrom;
    long long rep_center = 0;
    std::vector<std::string> rep_formats{"json"};
    auto* report_cmd = app.add_subcommand("report", "attention and gradient attribution report");
    report_cmd->add_option("--checkpoint", rep_ckpt)->required();
    report_cmd->add_option("--dataset", rep_dataset)->required();
    report_cmd->add_option("--dna-cache", rep_dna)->required();
    report_cmd->add_option("--rna-cache", rep_rna)->required();
    report_cmd->add_option("--protein-cache", rep_protein)->required();
    report_cmd->add_option("--out", rep_out)->required();
    report_cmd->add_option("--top-k", rep_topk, "positions per ranking");
    report_cmd->add_option("--temperature", rep_temperature, "attention sharpening temperature");
    report_cmd->add_option("--chrom", rep_chrom, "chromosome label for BED output");
    report_cmd->add_option("--enhancer-center", rep_center, "window center coordinate (bp)");
    report_cmd->add_option("--formats", rep_formats, "json, csv, bed")->delimiter(',');
    report_cmd->add_option("--ground-truth", rep_truth, "planted-signal ground truth JSON");

    fs::path pc_config;
    auto* pc = app.add_subcommand("param-count", "report trainable parameter counts");
    pc->add_option("config", pc_config, "run config or model config JSON")->required();

    try {
        app.parse(argc, argv);
        if (*gen) return cmd_gen(gen_spec, gen_out);
        if (*verify) return cmd_cache_verify(verify_dirs);
        if (*train_cmd) return cmd_train(train_config);
        if (*eval_cmd)
            return cmd_eval(eval_ckpt, eval_dataset, eval_dna, eval_rna, eval_protein, eval_out);
        if (*report_cmd)
            return cmd_report(rep_ckpt, rep_dataset, rep_dna, rep_rna, rep_protein, rep_out,
                              rep_topk, rep_temperature, rep_chrom, rep_center, rep_formats,
                              rep_truth);
        if (*pc) return cmd_param_count(pc_config);
        if (*cache) {
            std::cerr << "cache: missing subcommand (try 'cache verify')\n";
            return 2;
        }
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const cdt::config_error& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const cdt::data_error& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 3;
    } catch (const cdt::numeric_error& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
