#include "cdt/embedding_store.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "cdt/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "tensor files are little-endian; big-endian hosts are unsupported");

namespace cdt::store {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Modality m) {
    switch (m) {
        case Modality::DNA: return "DNA";
        case Modality::RNA: return "RNA";
        case Modality::Protein: return "Protein";
    }
    throw std::logic_error("unknown modality");
}

Modality modality_from_string(const std::string& s) {
    if (s == "DNA") return Modality::DNA;
    if (s == "RNA") return Modality::RNA;
    if (s == "Protein") return Modality::Protein;
    throw data_error("unknown modality '" + s + "'");
}

void EmbeddingManifest::validate() const {
    if (dim == 0) throw data_error("manifest: dim must be positive");
    if (dtype != "f32") throw data_error("manifest: unsupported dtype '" + dtype + "'");
    if (endianness != "little")
        throw data_error("manifest: unsupported endianness '" + endianness + "'");
    if (modality == Modality::DNA) {
        if (sample_count == 0) throw data_error("manifest: DNA cache needs sample_count > 0");
        if (positions == 0) throw data_error("manifest: DNA cache needs positions > 0");
        if (!gene_symbols.empty())
            throw data_error("manifest: DNA cache must not carry gene_symbols");
    } else {
        if (gene_count == 0) throw data_error("manifest: gene cache needs gene_count > 0");
        if (positions != 0) throw data_error("manifest: only DNA caches carry positions");
        if (gene_symbols.size() != gene_count)
            throw data_error("manifest: gene_symbols length != gene_count");
        for (std::size_t i = 1; i < gene_symbols.size(); ++i)
            if (!(gene_symbols[i - 1] < gene_symbols[i]))
                throw data_error("manifest: gene_symbols not strictly sorted at index " +
                                 std::to_string(i));
    }
}

void EmbeddingCache::validate() const {
    manifest.validate();
    if (manifest.modality == Modality::DNA) {
        if (dna_samples.size() != manifest.sample_count)
            throw data_error("cache: sample count does not match manifest");
        for (const auto& [id, m] : dna_samples) {
            if (id >= manifest.sample_count)
                throw data_error("cache: sample id " + std::to_string(id) + " out of range");
            if (m.rows() != manifest.positions || m.cols() != manifest.dim)
                throw data_error("cache: sample " + std::to_string(id) +
                                 " shape does not match manifest");
            if (!m.all_finite())
                throw data_error("cache: sample " + std::to_string(id) +
                                 " contains non-finite values");
        }
    } else {
        if (shared.rows() != manifest.gene_count || shared.cols() != manifest.dim)
            throw data_error("cache: tensor shape does not match manifest");
        if (!shared.all_finite()) throw data_error("cache: tensor contains non-finite values");
    }
}

const Matrix& EmbeddingCache::dna_sample(std::size_t id) const {
    auto it = dna_samples.find(id);
    if (it == dna_samples.end())
        throw data_error("cache: no DNA sample with id " + std::to_string(id));
    return it->second;
}

void IndexMap::validate(std::size_t gene_count) const {
    std::map<std::size_t, std::size_t> seen;
    for (const auto& [orig, aligned] : pairs) {
        if (aligned >= gene_count)
            throw data_error("index map: aligned index " + std::to_string(aligned) +
                             " out of range");
        auto [it, inserted] = seen.emplace(aligned, orig);
        if (!inserted)
            throw data_error("index map: aligned index " + std::to_string(aligned) +
                             " mapped twice");
    }
}

std::size_t apply_index_map(const IndexMap& map, std::size_t original) {
    auto it = map.pairs.find(original);
    if (it == map.pairs.end())
        throw data_error("index map: unmapped original index " + std::to_string(original));
    return it->second;
}

void write_tensor(const fs::path& file, const Matrix& m) {
    if (!m.all_finite()) throw data_error("write_tensor: non-finite values");
    std::ofstream out(file, std::ios::binary);
    if (!out) throw data_error("write_tensor: cannot open " + file.string());
    out.write(kTensorMagic, 4);
    const std::uint32_t version = kTensorFormatVersion;
    const std::uint64_t rows = m.rows();
    const std::uint64_t cols = m.cols();
    out.write(reinterpret_cast<const char*>(&version), sizeof version);
    out.write(reinterpret_cast<const char*>(&rows), sizeof rows);
    out.write(reinterpret_cast<const char*>(&cols), sizeof cols);
    std::vector<float> payload(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) {
        const float v = static_cast<float>(m.data()[i]);
        if (!std::isfinite(v))
            throw data_error("write_tensor: value exceeds f32 range at offset " +
                             std::to_string(i));
        payload[i] = v;
    }
    out.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(payload.size() * sizeof(float)));
    if (!out) throw data_error("write_tensor: write failed for " + file.string());
}

Matrix read_tensor(const fs::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw data_error("read_tensor: cannot open " + file.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kTensorMagic, 4) != 0)
        throw data_error("read_tensor: bad magic in " + file.string());
    std::uint32_t version = 0;
    std::uint64_t rows = 0, cols = 0;
    in.read(reinterpret_cast<char*>(&version), sizeof version);
    in.read(reinterpret_cast<char*>(&rows), sizeof rows);
    in.read(reinterpret_cast<char*>(&cols), sizeof cols);
    if (!in) throw data_error("read_tensor: truncated header in " + file.string());
    if (version != kTensorFormatVersion)
        throw data_error("read_tensor: unsupported version " + std::to_string(version) +
                         " in " + file.string());
    const std::uint64_t count = rows * cols;
    std::vector<float> payload(count);
    in.read(reinterpret_cast<char*>(payload.data()),
            static_cast<std::streamsize>(count * sizeof(float)));
    if (static_cast<std::uint64_t>(in.gcount()) != count * sizeof(float))
        throw data_error("read_tensor: truncated payload in " + file.string());
    in.peek();
    if (!in.eof()) throw data_error("read_tensor: trailing bytes in " + file.string());
    Matrix m(rows, cols);
    for (std::uint64_t i = 0; i < count; ++i) {
        const double v = static_cast<double>(payload[i]);
        if (!std::isfinite(v))
            throw data_error("read_tensor: non-finite value at offset " + std::to_string(i) +
                             " in " + file.string());
        m.data()[i] = v;
    }
    return m;
}

namespace {

std::string sample_file_name(std::size_t id) {
    std::ostringstream name;
    name << "sample_";
    std::string digits = std::to_string(id);
    for (std::size_t i = digits.size(); i < 6; ++i) name << '0';
    name << digits << ".bin";
    return name.str();
}

json manifest_to_json(const EmbeddingManifest& man) {
    json j;
    j["modality"] = to_string(man.modality);
    j["dim"] = man.dim;
    j["dtype"] = man.dtype;
    j["endianness"] = man.endianness;
    j["source_model"] = man.source_model;
    if (man.modality == Modality::DNA) {
        j["sample_count"] = man.sample_count;
        j["positions"] = man.positions;
    } else {
        j["gene_count"] = man.gene_count;
        j["gene_symbols"] = man.gene_symbols;
    }
    return j;
}

EmbeddingManifest manifest_from_json(const json& j) {
    EmbeddingManifest man;
    try {
        man.modality = modality_from_string(j.at("modality").get<std::string>());
        man.dim = j.at("dim").get<std::size_t>();
        man.dtype = j.at("dtype").get<std::string>();
        man.endianness = j.at("endianness").get<std::string>();
        man.source_model = j.value("source_model", std::string{});
        if (man.modality == Modality::DNA) {
            man.sample_count = j.at("sample_count").get<std::size_t>();
            man.positions = j.at("positions").get<std::size_t>();
        } else {
            man.gene_count = j.at("gene_count").get<std::size_t>();
            man.gene_symbols = j.at("gene_symbols").get<std::vector<std::string>>();
        }
    } catch (const json::exception& e) {
        throw data_error(std::string("manifest: ") + e.what());
    }
    return man;
}

}  // namespace

void write_cache(const EmbeddingCache& cache, const fs::path& dir) {
    cache.validate();
    fs::create_directories(dir);
    {
        std::ofstream out(dir / "manifest.json");
        if (!out) throw data_error("write_cache: cannot open manifest in " + dir.string());
        out << manifest_to_json(cache.manifest).dump(2) << '\n';
    }
    if (cache.manifest.modality == Modality::DNA) {
        for (const auto& [id, m] : cache.dna_samples) write_tensor(dir / sample_file_name(id), m);
    } else {
        write_tensor(dir / "embeddings.bin", cache.shared);
    }
}

EmbeddingCache read_cache(const fs::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw data_error("read_cache: missing manifest.json in " + dir.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw data_error(std::string("read_cache: manifest parse failure: ") + e.what());
    }
    EmbeddingCache cache;
    cache.manifest = manifest_from_json(j);
    cache.manifest.validate();
    if (cache.manifest.modality == Modality::DNA) {
        for (std::size_t id = 0; id < cache.manifest.sample_count; ++id)
            cache.dna_samples.emplace(id, read_tensor(dir / sample_file_name(id)));
    } else {
        cache.shared = read_tensor(dir / "embeddings.bin");
    }
    cache.validate();
    return cache;
}

Matrix read_dna_sample(const fs::path& dir, std::size_t id) {
    return read_tensor(dir / sample_file_name(id));
}

std::string AlignmentReport::summary() const {
    std::ostringstream out;
    out << "alignment check: " << (passed ? "pass" : "FAIL") << " (" << checked
        << " indices sampled, gene counts " << rna_gene_count << "/" << protein_gene_count
        << ")";
    for (const auto& m : mismatches)
        out << "\n  index " << m.index << ": RNA '" << m.rna_symbol << "' vs Protein '"
            << m.protein_symbol << "'";
    return out.str();
}

AlignmentReport verify_alignment(const EmbeddingCache& rna, const EmbeddingCache& protein,
                                 std::size_t samples, RngStream& rng) {
    if (samples == 0) throw std::invalid_argument("verify_alignment: samples must be >= 1");
    AlignmentReport report;
    report.rna_gene_count = rna.manifest.gene_count;
    report.protein_gene_count = protein.manifest.gene_count;
    if (report.rna_gene_count != report.protein_gene_count) {
        report.passed = false;
        return report;
    }
    const std::size_t n = report.rna_gene_count;
    for (std::size_t s = 0; s < samples; ++s) {
        const auto idx = static_cast<std::size_t>(rng.next_below(n));
        ++report.checked;
        if (rna.manifest.gene_symbols[idx] != protein.manifest.gene_symbols[idx])
            report.mismatches.push_back(
                {idx, rna.manifest.gene_symbols[idx], protein.manifest.gene_symbols[idx]});
    }
    report.passed = report.mismatches.empty();
    return report;
}

}  // namespace cdt::store
