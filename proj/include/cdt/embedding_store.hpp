#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "cdt/matrix.hpp"
#include "cdt/rng.hpp"

namespace cdt::store {

// On-disk layout of a cache directory:
//   manifest.json                     (fields of EmbeddingManifest)
//   embeddings.bin                    (RNA / Protein shared tensor)
//   sample_000000.bin, sample_...     (DNA, one tensor per sample id)
//
// Binary tensor file, little-endian:
//   magic "CDTE" | version u32 | rows u64 | cols u64 | payload rows*cols f32,
//   row-major. Values are widened to double on load.

inline constexpr char kTensorMagic[4] = {'C', 'D', 'T', 'E'};
inline constexpr std::uint32_t kTensorFormatVersion = 1;

enum class Modality { DNA, RNA, Protein };

std::string to_string(Modality m);
Modality modality_from_string(const std::string& s);

struct EmbeddingManifest {
    Modality modality = Modality::DNA;
    std::size_t sample_count = 0;  // DNA only
    std::size_t gene_count = 0;    // RNA / Protein only
    std::size_t positions = 0;     // DNA only
    std::size_t dim = 0;
    std::string dtype = "f32";
    std::string endianness = "little";
    std::vector<std::string> gene_symbols;  // RNA / Protein, bytewise ascending
    std::string source_model;

    void validate() const;  // throws data_error on violated invariants
};

struct EmbeddingCache {
    EmbeddingManifest manifest;
    std::map<std::size_t, Matrix> dna_samples;  // keyed by sample id
    Matrix shared;                              // gene_count x dim

    void validate() const;
    const Matrix& dna_sample(std::size_t id) const;
};

// Injective original-index -> aligned-index map.
struct IndexMap {
    std::map<std::size_t, std::size_t> pairs;

    void validate(std::size_t gene_count) const;
};

std::size_t apply_index_map(const IndexMap& map, std::size_t original);

void write_tensor(const std::filesystem::path& file, const Matrix& m);
Matrix read_tensor(const std::filesystem::path& file);

void write_cache(const EmbeddingCache& cache, const std::filesystem::path& dir);
EmbeddingCache read_cache(const std::filesystem::path& dir);

// Loads one DNA sample without reading the rest of the cache.
Matrix read_dna_sample(const std::filesystem::path& dir, std::size_t id);

struct AlignmentReport {
    bool passed = false;
    std::size_t checked = 0;
    std::size_t rna_gene_count = 0;
    std::size_t protein_gene_count = 0;
    struct Mismatch {
        std::size_t index;
        std::string rna_symbol;
        std::string protein_symbol;
    };
    std::vector<Mismatch> mismatches;

    std::string summary() const;
};

// Samples `samples` random gene indices and checks that both caches agree on
// gene count and symbol at each index. Intended to run at model
// initialization; reports rather than throws.
AlignmentReport verify_alignment(const EmbeddingCache& rna, const EmbeddingCache& protein,
                                 std::size_t samples, RngStream& rng);

}  // namespace cdt::store
