#include "cdt/interpretation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "cdt/errors.hpp"
#include "cdt/kernels.hpp"

namespace cdt::interpret {

using nlohmann::json;

AttentionProfile extract_cross_attention(const model::ForwardRecord& rec, CrossLayer layer,
                                         bool keep_heads) {
    const model::CrossCache& cache =
        layer == CrossLayer::DnaToRna ? rec.cross_dna_rna : rec.cross_rna_protein;
    if (cache.mha.head_weights.empty())
        throw std::invalid_argument("extract_cross_attention: layer absent from record");
    AttentionProfile profile;
    profile.layer_tag = layer == CrossLayer::DnaToRna ? "dna_rna" : "rna_protein";
    const auto& heads = cache.mha.head_weights;
    profile.head_mean = Matrix(heads[0].rows(), heads[0].cols());
    for (const auto& h : heads) kernels::add_inplace(profile.head_mean, h);
    kernels::scale_inplace(profile.head_mean, 1.0 / static_cast<double>(heads.size()));
    if (keep_heads) profile.per_head = heads;
    return profile;
}

std::vector<double> gene_averaged_attention(const AttentionProfile& profile) {
    const Matrix& m = profile.head_mean;
    if (m.empty()) throw std::invalid_argument("gene_averaged_attention: empty profile");
    std::vector<double> mean(m.cols(), 0.0);
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) mean[j] += m(i, j);
    for (double& v : mean) v /= static_cast<double>(m.rows());
    return mean;
}

std::vector<double> importance_from_input_grad(const Matrix& dx_dna) {
    std::vector<double> importance(dx_dna.rows());
    for (std::size_t p = 0; p < dx_dna.rows(); ++p) {
        double sq = 0.0;
        for (std::size_t j = 0; j < dx_dna.cols(); ++j) sq += dx_dna(p, j) * dx_dna(p, j);
        importance[p] = std::sqrt(sq);
    }
    return importance;
}

GradientProfile gradient_importance(const model::ForwardRecord& rec,
                                    const model::ModelParams& params,
                                    const model::ModelConfig& cfg, std::size_t target_gene) {
    if (rec.training)
        throw std::invalid_argument("gradient_importance: record must come from eval mode");
    if (target_gene >= cfg.n_genes)
        throw std::invalid_argument("gradient_importance: target gene out of range");
    Matrix d_y(1, cfg.n_genes);
    d_y(0, target_gene) = 1.0;
    model::InputGrads grads = model::backward(rec, params, cfg, d_y, nullptr);
    GradientProfile profile;
    profile.gene_index = target_gene;
    profile.importance = importance_from_input_grad(grads.dx_dna);
    return profile;
}

std::vector<std::size_t> top_k(std::span<const double> scores, std::size_t k) {
    if (k > scores.size()) throw std::invalid_argument("top_k: k exceeds score count");
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&scores](std::size_t a, std::size_t b) {
        return scores[a] > scores[b];
    });
    idx.resize(k);
    return idx;
}

std::size_t overlap_count(std::span<const std::size_t> a, std::span<const std::size_t> b) {
    std::set<std::size_t> sa(a.begin(), a.end());
    std::size_t count = 0;
    std::set<std::size_t> seen;
    for (auto x : b)
        if (sa.count(x) && seen.insert(x).second) ++count;
    return count;
}

double BinMapping::offset_of_bin(std::size_t p) const {
    if (p >= positions) throw std::invalid_argument("offset_of_bin: bin out of range");
    return (static_cast<double>(p) + 0.5) * static_cast<double>(bin_width) -
           static_cast<double>(half_span());
}

std::size_t BinMapping::bin_of_offset(double offset_bp) const {
    const double raw =
        std::floor((offset_bp + static_cast<double>(half_span())) / static_cast<double>(bin_width));
    if (raw < 0.0 || raw >= static_cast<double>(positions))
        throw std::invalid_argument("bin_of_offset: offset outside the window");
    return static_cast<std::size_t>(raw);
}

std::size_t BinMapping::bin_of_coordinate(long long coordinate) const {
    return bin_of_offset(static_cast<double>(coordinate - enhancer_center));
}

long long BinMapping::start_of_bin(std::size_t p) const {
    if (p >= positions) throw std::invalid_argument("start_of_bin: bin out of range");
    return enhancer_center - half_span() + static_cast<long long>(p) * bin_width;
}

std::size_t peak_position(std::span<const double> scores) {
    if (scores.empty()) throw std::invalid_argument("peak_position: empty scores");
    std::size_t best = 0;
    for (std::size_t i = 1; i < scores.size(); ++i)
        if (scores[i] > scores[best]) best = i;
    return best;
}

double attention_peak_offset(const AttentionProfile& profile, std::size_t gene,
                             const BinMapping& mapping) {
    if (gene >= profile.head_mean.rows())
        throw std::invalid_argument("attention_peak_offset: gene row out of range");
    return mapping.offset_of_bin(peak_position(profile.head_mean.row(gene)));
}

PeakStats peak_distance_stats(std::span<const double> offsets_bp) {
    if (offsets_bp.empty()) throw std::invalid_argument("peak_distance_stats: empty list");
    PeakStats stats;
    std::size_t within = 0;
    for (double off : offsets_bp) {
        stats.mean_abs_offset_bp += std::fabs(off);
        if (std::fabs(off) <= 50000.0) ++within;
    }
    stats.mean_abs_offset_bp /= static_cast<double>(offsets_bp.size());
    stats.fraction_within_50kb =
        static_cast<double>(within) / static_cast<double>(offsets_bp.size());
    return stats;
}

std::vector<double> temperature_scale(std::span<const double> dist, double temperature) {
    if (temperature <= 0.0)
        throw std::invalid_argument("temperature_scale: temperature must be positive");
    if (dist.empty()) throw std::invalid_argument("temperature_scale: empty distribution");
    double sum = 0.0;
    double max_log = -std::numeric_limits<double>::infinity();
    for (double p : dist) {
        if (p < 0.0) throw std::invalid_argument("temperature_scale: negative probability");
        sum += p;
        if (p > 0.0) max_log = std::max(max_log, std::log(p));
    }
    if (std::fabs(sum - 1.0) > 1e-6)
        throw std::invalid_argument("temperature_scale: distribution does not sum to 1");
    std::vector<double> out(dist.size(), 0.0);
    double norm = 0.0;
    for (std::size_t i = 0; i < dist.size(); ++i) {
        if (dist[i] > 0.0) {
            out[i] = std::exp((std::log(dist[i]) - max_log) / temperature);
            norm += out[i];
        }
    }
    for (double& v : out) v /= norm;
    return out;
}

ReportFormat report_format_from_string(const std::string& s) {
    if (s == "json") return ReportFormat::Json;
    if (s == "csv") return ReportFormat::Csv;
    if (s == "bed") return ReportFormat::Bed;
    throw config_error("unknown report format '" + s + "'");
}

ReportSummary summarize_reports(const std::vector<SampleReport>& reports, std::size_t k) {
    ReportSummary summary;
    summary.overlap_histogram.assign(k + 1, 0);
    if (reports.empty()) return summary;
    std::vector<double> attn_offsets, grad_offsets;
    for (const auto& r : reports) {
        summary.mean_overlap += static_cast<double>(r.overlap);
        if (r.overlap < summary.overlap_histogram.size())
            ++summary.overlap_histogram[r.overlap];
        attn_offsets.push_back(r.attention_peak_offset_bp);
        grad_offsets.push_back(r.gradient_peak_offset_bp);
    }
    summary.mean_overlap /= static_cast<double>(reports.size());
    summary.attention_peaks = peak_distance_stats(attn_offsets);
    summary.gradient_peaks = peak_distance_stats(grad_offsets);
    return summary;
}

namespace {

json report_to_json(const SampleReport& r) {
    json j;
    j["sample_id"] = r.sample_id;
    j["gene_index"] = r.gene_index;
    if (!r.attention_full.empty()) {
        json rows = json::array();
        for (std::size_t i = 0; i < r.attention_full.rows(); ++i) {
            json row = json::array();
            for (std::size_t k = 0; k < r.attention_full.cols(); ++k)
                row.push_back(r.attention_full(i, k));
            rows.push_back(std::move(row));
        }
        j["attention_matrix"] = std::move(rows);
    }
    j["attention"] = r.attention;
    j["gradient"] = r.gradient;
    j["attention_top"] = r.attention_top;
    j["gradient_top"] = r.gradient_top;
    j["overlap"] = r.overlap;
    j["attention_peak_offset_bp"] = r.attention_peak_offset_bp;
    j["gradient_peak_offset_bp"] = r.gradient_peak_offset_bp;
    return j;
}

}  // namespace

void export_report(const std::vector<SampleReport>& reports, const ReportSummary& summary,
                   const BinMapping& mapping, ReportFormat format,
                   const std::filesystem::path& file, const std::string& chrom) {
    std::ofstream out(file);
    if (!out) throw data_error("export_report: cannot open " + file.string());
    switch (format) {
        case ReportFormat::Json: {
            json j;
            j["bin_width"] = mapping.bin_width;
            j["positions"] = mapping.positions;
            j["enhancer_center"] = mapping.enhancer_center;
            j["samples"] = json::array();
            for (const auto& r : reports) j["samples"].push_back(report_to_json(r));
            json s;
            s["mean_overlap"] = summary.mean_overlap;
            s["overlap_histogram"] = summary.overlap_histogram;
            s["attention_peak_mean_abs_bp"] = summary.attention_peaks.mean_abs_offset_bp;
            s["attention_peak_within_50kb"] = summary.attention_peaks.fraction_within_50kb;
            s["gradient_peak_mean_abs_bp"] = summary.gradient_peaks.mean_abs_offset_bp;
            s["gradient_peak_within_50kb"] = summary.gradient_peaks.fraction_within_50kb;
            if (summary.recovery_top1 >= 0.0) {
                s["recovery_top1"] = summary.recovery_top1;
                s["recovery_top3"] = summary.recovery_top3;
            }
            j["summary"] = s;
            out << j.dump(2) << '\n';
            break;
        }
        case ReportFormat::Csv: {
            out << "sample_id,bin,offset_bp,attention,gradient\n";
            out.precision(17);
            for (const auto& r : reports)
                for (std::size_t p = 0; p < r.attention.size(); ++p)
                    out << r.sample_id << ',' << p << ',' << mapping.offset_of_bin(p) << ','
                        << r.attention[p] << ',' << r.gradient[p] << '\n';
            break;
        }
        case ReportFormat::Bed: {
            if (chrom.empty()) throw config_error("export_report: bed output needs a chromosome");
            out.precision(17);
            auto write_intervals = [&](const SampleReport& r,
                                       const std::vector<std::size_t>& bins, const char* tag,
                                       const std::vector<double>& scores) {
                for (std::size_t rank = 0; rank < bins.size(); ++rank) {
                    const long long start = mapping.start_of_bin(bins[rank]);
                    out << chrom << '\t' << start << '\t' << start + mapping.bin_width << '\t'
                        << r.sample_id << '_' << tag << rank + 1 << '\t' << scores[bins[rank]]
                        << '\n';
                }
            };
            for (const auto& r : reports) {
                write_intervals(r, r.attention_top, "attn", r.attention);
                write_intervals(r, r.gradient_top, "grad", r.gradient);
            }
            break;
        }
    }
    if (!out) throw data_error("export_report: write failed for " + file.string());
}

}  // namespace cdt::interpret
