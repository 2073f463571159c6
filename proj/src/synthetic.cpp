#include "cdt/synthetic.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cdt/errors.hpp"
#include "cdt/rng.hpp"

namespace cdt::synth {

using nlohmann::json;

void SyntheticSpec::validate() const {
    if (n_samples == 0 || dna_positions == 0 || n_genes == 0)
        throw config_error("synthetic spec: counts must be positive");
    if (d_dna == 0 || d_rna == 0 || d_protein == 0)
        throw config_error("synthetic spec: embedding dims must be positive");
    if (noise_std < 0.0) throw config_error("synthetic spec: noise_std must be >= 0");
    if (!(positional_signal >= 0.0 && positional_signal < 1.0))
        throw config_error("synthetic spec: positional_signal must lie in [0, 1)");
    if (enhancers_per_group == 0)
        throw config_error("synthetic spec: enhancers_per_group must be >= 1");
    for (const auto& p : planted_positions) {
        if (p.position >= dna_positions)
            throw config_error("synthetic spec: planted position " +
                               std::to_string(p.position) + " out of range");
        if (p.weight.size() != d_dna)
            throw config_error("synthetic spec: planted weight length must equal d_dna");
    }
}

namespace {

std::string gene_symbol(std::size_t i, std::size_t width) {
    std::string digits = std::to_string(i);
    std::string out = "G";
    for (std::size_t k = digits.size(); k < width; ++k) out += '0';
    return out + digits;
}

std::string enhancer_id(std::size_t group) {
    std::string digits = std::to_string(group);
    std::string out = "ENH";
    for (std::size_t k = digits.size(); k < 5; ++k) out += '0';
    return out + digits;
}

Matrix gaussian_matrix(std::size_t rows, std::size_t cols, RngStream& rng) {
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
    return m;
}

}  // namespace

SyntheticCaches gen_caches(const SyntheticSpec& spec) {
    spec.validate();
    RngStream rng(spec.seed);
    SyntheticCaches caches;

    caches.dna.manifest.modality = store::Modality::DNA;
    caches.dna.manifest.sample_count = spec.n_samples;
    caches.dna.manifest.positions = spec.dna_positions;
    caches.dna.manifest.dim = spec.d_dna;
    caches.dna.manifest.source_model = "synthetic-gaussian";
    // fixed per-position signatures, shared across samples
    Matrix signatures;
    const double g = spec.positional_signal;
    if (g > 0.0) {
        RngStream sig_rng(spec.seed + 0x90511);
        signatures = gaussian_matrix(spec.dna_positions, spec.d_dna, sig_rng);
    }
    const double noise_scale = std::sqrt(1.0 - g * g);
    for (std::size_t i = 0; i < spec.n_samples; ++i) {
        Matrix x = gaussian_matrix(spec.dna_positions, spec.d_dna, rng);
        if (g > 0.0)
            for (std::size_t e = 0; e < x.size(); ++e)
                x.data()[e] = noise_scale * x.data()[e] + g * signatures.data()[e];
        caches.dna.dna_samples.emplace(i, std::move(x));
    }

    const std::size_t width = std::max<std::size_t>(4, std::to_string(spec.n_genes).size());
    std::vector<std::string> symbols(spec.n_genes);
    for (std::size_t g = 0; g < spec.n_genes; ++g) symbols[g] = gene_symbol(g, width);

    caches.rna.manifest.modality = store::Modality::RNA;
    caches.rna.manifest.gene_count = spec.n_genes;
    caches.rna.manifest.dim = spec.d_rna;
    caches.rna.manifest.gene_symbols = symbols;
    caches.rna.manifest.source_model = "synthetic-gaussian";
    caches.rna.shared = gaussian_matrix(spec.n_genes, spec.d_rna, rng);

    caches.protein.manifest.modality = store::Modality::Protein;
    caches.protein.manifest.gene_count = spec.n_genes;
    caches.protein.manifest.dim = spec.d_protein;
    caches.protein.manifest.gene_symbols = symbols;
    caches.protein.manifest.source_model = "synthetic-gaussian";
    caches.protein.shared = gaussian_matrix(spec.n_genes, spec.d_protein, rng);
    return caches;
}

PlantResult plant_signal(const store::EmbeddingCache& dna, const SyntheticSpec& spec) {
    spec.validate();
    if (spec.planted_positions.empty())
        throw config_error("plant_signal: need at least one planted position");
    // noise draws come after the cache draws so betas depend only on the seed
    RngStream rng(spec.seed + 0x5eed);
    PlantResult result;
    result.truth.planted_positions = spec.planted_positions;
    result.truth.noise_std = spec.noise_std;
    result.truth.seed = spec.seed;
    result.samples.reserve(spec.n_samples);
    for (std::size_t i = 0; i < spec.n_samples; ++i) {
        const Matrix& x = dna.dna_sample(i);
        double beta = 0.0;
        for (const auto& planted : spec.planted_positions) {
            const double* row = x.row_ptr(planted.position);
            for (std::size_t j = 0; j < planted.weight.size(); ++j)
                beta += row[j] * planted.weight[j];
        }
        if (spec.noise_std > 0.0) beta += spec.noise_std * rng.normal();
        train::TrainingSample s;
        s.enhancer_id = enhancer_id(i / spec.enhancers_per_group);
        s.dna_index = i;
        s.gene_index = i % spec.n_genes;
        s.beta = beta;
        result.samples.push_back(std::move(s));
    }
    return result;
}

namespace {

json planted_to_json(const std::vector<PlantedPosition>& planted) {
    json arr = json::array();
    for (const auto& p : planted) arr.push_back({{"position", p.position}, {"weight", p.weight}});
    return arr;
}

std::vector<PlantedPosition> planted_from_json(const json& arr) {
    std::vector<PlantedPosition> planted;
    for (const auto& j : arr) {
        PlantedPosition p;
        p.position = j.at("position").get<std::size_t>();
        p.weight = j.at("weight").get<std::vector<double>>();
        planted.push_back(std::move(p));
    }
    return planted;
}

}  // namespace

void write_ground_truth(const std::filesystem::path& file, const GroundTruth& truth) {
    json j;
    j["planted_positions"] = planted_to_json(truth.planted_positions);
    j["noise_std"] = truth.noise_std;
    j["seed"] = truth.seed;
    std::ofstream out(file);
    if (!out) throw data_error("ground truth: cannot open " + file.string());
    out << j.dump(2) << '\n';
}

GroundTruth read_ground_truth(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw data_error("ground truth: cannot open " + file.string());
    json j;
    try {
        in >> j;
        GroundTruth truth;
        truth.planted_positions = planted_from_json(j.at("planted_positions"));
        truth.noise_std = j.at("noise_std").get<double>();
        truth.seed = j.at("seed").get<std::uint64_t>();
        return truth;
    } catch (const json::exception& e) {
        throw data_error("ground truth: " + file.string() + ": " + e.what());
    }
}

SyntheticSpec read_spec(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw config_error("synthetic spec: cannot open " + file.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw config_error("synthetic spec: parse failure: " + std::string(e.what()));
    }
    SyntheticSpec spec;
    auto need = [&j](const char* field) -> const json& {
        if (!j.contains(field))
            throw config_error(std::string("synthetic spec: missing field '") + field + "'");
        return j.at(field);
    };
    try {
        spec.n_samples = need("n_samples").get<std::size_t>();
        spec.dna_positions = need("dna_positions").get<std::size_t>();
        spec.d_dna = need("d_dna").get<std::size_t>();
        spec.d_rna = need("d_rna").get<std::size_t>();
        spec.d_protein = need("d_protein").get<std::size_t>();
        spec.n_genes = need("n_genes").get<std::size_t>();
        spec.seed = need("seed").get<std::uint64_t>();
        spec.noise_std = j.value("noise_std", 0.0);
        spec.positional_signal = j.value("positional_signal", 0.0);
        spec.enhancers_per_group = j.value("enhancers_per_group", std::size_t{1});
        if (j.contains("planted_positions"))
            spec.planted_positions = planted_from_json(j.at("planted_positions"));
    } catch (const json::exception& e) {
        throw config_error("synthetic spec: " + std::string(e.what()));
    }
    spec.validate();
    return spec;
}

void write_spec(const std::filesystem::path& file, const SyntheticSpec& spec) {
    json j;
    j["n_samples"] = spec.n_samples;
    j["dna_positions"] = spec.dna_positions;
    j["d_dna"] = spec.d_dna;
    j["d_rna"] = spec.d_rna;
    j["d_protein"] = spec.d_protein;
    j["n_genes"] = spec.n_genes;
    j["noise_std"] = spec.noise_std;
    j["positional_signal"] = spec.positional_signal;
    j["enhancers_per_group"] = spec.enhancers_per_group;
    j["seed"] = spec.seed;
    j["planted_positions"] = planted_to_json(spec.planted_positions);
    std::ofstream out(file);
    if (!out) throw config_error("synthetic spec: cannot open " + file.string());
    out << j.dump(2) << '\n';
}

}  // namespace cdt::synth
