#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "cdt/embedding_store.hpp"
#include "cdt/training.hpp"

namespace cdt::synth {

struct PlantedPosition {
    std::size_t position = 0;
    std::vector<double> weight;  // length d_dna
};

// Desk-scale generator with a planted linear regulatory signal: Gaussian
// embeddings everywhere, beta = sum over planted positions of <x[p], w> plus
// Gaussian noise, so the optimum and the causal positions are known exactly.
struct SyntheticSpec {
    std::size_t n_samples = 0;
    std::size_t dna_positions = 0;
    std::size_t d_dna = 0;
    std::size_t d_rna = 0;
    std::size_t d_protein = 0;
    std::size_t n_genes = 0;
    std::vector<PlantedPosition> planted_positions;
    double noise_std = 0.0;
    // Fraction of each DNA row drawn from a fixed per-position signature
    // vector shared across samples, mixed as sqrt(1-g^2) noise + g signature
    // so entries stay zero-mean unit-variance. Content-only attention cannot
    // address positions in exchangeable rows, so recovering a planted
    // position needs g > 0, mirroring how the upstream DNA encoder stamps
    // genomic context into its embeddings. 0 disables it.
    double positional_signal = 0.0;
    std::size_t enhancers_per_group = 1;
    std::uint64_t seed = 0;

    void validate() const;
};

struct SyntheticCaches {
    store::EmbeddingCache dna;
    store::EmbeddingCache rna;
    store::EmbeddingCache protein;
};

// I.i.d. standard-normal tensors; gene symbols "G0000..." already in
// canonical order. Deterministic given the seed.
SyntheticCaches gen_caches(const SyntheticSpec& spec);

struct GroundTruth {
    std::vector<PlantedPosition> planted_positions;
    double noise_std = 0.0;
    std::uint64_t seed = 0;
};

struct PlantResult {
    std::vector<train::TrainingSample> samples;
    GroundTruth truth;
};

// Gene indices round-robin; enhancer ids group `enhancers_per_group`
// consecutive samples so the enhancer-level split has work to do.
PlantResult plant_signal(const store::EmbeddingCache& dna, const SyntheticSpec& spec);

void write_ground_truth(const std::filesystem::path& file, const GroundTruth& truth);
GroundTruth read_ground_truth(const std::filesystem::path& file);

SyntheticSpec read_spec(const std::filesystem::path& file);
void write_spec(const std::filesystem::path& file, const SyntheticSpec& spec);

}  // namespace cdt::synth
