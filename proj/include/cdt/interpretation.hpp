#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cdt/backward.hpp"
#include "cdt/model.hpp"

namespace cdt::interpret {

enum class CrossLayer { DnaToRna, RnaToProtein };

struct AttentionProfile {
    std::string sample_id;
    std::string layer_tag;
    Matrix head_mean;               // query rows x key rows
    std::vector<Matrix> per_head;   // retained on request
};

// Head-averaged cross-attention map from a recorded forward pass.
AttentionProfile extract_cross_attention(const model::ForwardRecord& rec, CrossLayer layer,
                                         bool keep_heads = false);

// Column means of the head-averaged map: one weight per key position,
// aggregated over all query rows. The per-gene row stays the default view
// for reports; this is the gene-aggregate alternative.
std::vector<double> gene_averaged_attention(const AttentionProfile& profile);

struct GradientProfile {
    std::string sample_id;
    std::size_t gene_index = 0;
    std::vector<double> importance;  // per DNA position
};

// Per-position L2 norms of a (positions x d_dna) input gradient.
std::vector<double> importance_from_input_grad(const Matrix& dx_dna);

// Backward from y_hat[target_gene] to the raw DNA input; importance is the
// Euclidean norm of the gradient at each position. Requires an eval-mode
// record so the result is independent of dropout state.
GradientProfile gradient_importance(const model::ForwardRecord& rec,
                                    const model::ModelParams& params,
                                    const model::ModelConfig& cfg, std::size_t target_gene);

// Indices of the k largest scores, sorted by descending score then ascending
// index; ties broken toward the smaller index.
std::vector<std::size_t> top_k(std::span<const double> scores, std::size_t k);

std::size_t overlap_count(std::span<const std::size_t> a, std::span<const std::size_t> b);

// Genomic coordinate mapping for the enhancer-centered DNA window.
struct BinMapping {
    long long enhancer_center = 0;  // bp
    long long bin_width = 128;      // bp per positional bin
    std::size_t positions = 896;

    long long half_span() const {
        return static_cast<long long>(positions) * bin_width / 2;
    }
    // Offset of the bin center from the enhancer center.
    double offset_of_bin(std::size_t p) const;
    std::size_t bin_of_offset(double offset_bp) const;
    std::size_t bin_of_coordinate(long long coordinate) const;
    long long start_of_bin(std::size_t p) const;  // 0-based genomic start
};

// Bin-center offset of the argmax of one gene's attention row.
double attention_peak_offset(const AttentionProfile& profile, std::size_t gene,
                             const BinMapping& mapping);

std::size_t peak_position(std::span<const double> scores);

struct PeakStats {
    double mean_abs_offset_bp = 0.0;
    double fraction_within_50kb = 0.0;
};

PeakStats peak_distance_stats(std::span<const double> offsets_bp);

// Post hoc sharpening of a stored probability vector:
// p_i^(1/T) / sum_j p_j^(1/T). Argmax-preserving for every T > 0; zero
// entries stay zero.
std::vector<double> temperature_scale(std::span<const double> dist, double temperature);

// ---- report export -----------------------------------------------------------

enum class ReportFormat { Json, Csv, Bed };

ReportFormat report_format_from_string(const std::string& s);

struct SampleReport {
    std::string sample_id;
    std::size_t gene_index = 0;
    Matrix attention_full;          // head-mean map, queries x keys (json only)
    std::vector<double> attention;  // per position (target-gene row, head mean)
    std::vector<double> gradient;   // per position importance
    std::vector<std::size_t> attention_top;
    std::vector<std::size_t> gradient_top;
    std::size_t overlap = 0;
    double attention_peak_offset_bp = 0.0;
    double gradient_peak_offset_bp = 0.0;
};

struct ReportSummary {
    double mean_overlap = 0.0;
    std::vector<std::size_t> overlap_histogram;  // index = overlap count
    PeakStats attention_peaks;
    PeakStats gradient_peaks;
    double recovery_top1 = -1.0;  // fraction; -1 when no ground truth
    double recovery_top3 = -1.0;
};

ReportSummary summarize_reports(const std::vector<SampleReport>& reports, std::size_t k);

// json: all profiles plus summary in one file. csv: one row per
// (sample, bin) with offset, attention, gradient. bed: 128-bp top-k
// intervals, tab-separated, 0-based half-open; requires a chromosome label.
void export_report(const std::vector<SampleReport>& reports, const ReportSummary& summary,
                   const BinMapping& mapping, ReportFormat format,
                   const std::filesystem::path& file, const std::string& chrom = "");

}  // namespace cdt::interpret
