#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "rsan/attributes.hpp"
#include "rsan/dataset.hpp"
#include "rsan/errors.hpp"
#include "rsan/model.hpp"

// Binary file formats (RSANFEAT datasets, RSANCKPT checkpoints) and the
// attribute-embedding text format. All multi-byte values are little-endian;
// feature payloads are 32-bit floats, parameters 64-bit.

namespace rsan::io {

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian; byte swapping is not implemented");

constexpr char kDatasetMagic[8] = {'R', 'S', 'A', 'N', 'F', 'E', 'A', 'T'};
constexpr char kCheckpointMagic[8] = {'R', 'S', 'A', 'N', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kDatasetVersion = 1;
constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

class Writer {
public:
    explicit Writer(const std::string& path) : path_(path), out_(path, std::ios::binary) {
        if (!out_) throw IoError("cannot open '" + path + "' for writing");
    }

    void bytes(const void* p, std::size_t n) {
        out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
        if (!out_) throw IoError("write failure on '" + path_ + "'");
    }

    template <class T>
    void pod(T v) {
        bytes(&v, sizeof(T));
    }

    void str(const std::string& s) {
        pod<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }

private:
    std::string path_;
    std::ofstream out_;
};

class Reader {
public:
    explicit Reader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
        if (!in_) throw IoError("cannot open '" + path + "' for reading");
    }

    void bytes(void* p, std::size_t n) {
        in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n) {
            throw DataError("'" + path_ + "' truncated at byte offset " +
                            std::to_string(offset_ + static_cast<std::size_t>(in_.gcount())));
        }
        offset_ += n;
    }

    template <class T>
    T pod() {
        T v;
        bytes(&v, sizeof(T));
        return v;
    }

    std::string str(std::size_t max_len = 1u << 20) {
        const std::uint32_t n = pod<std::uint32_t>();
        if (n > max_len) {
            throw DataError("'" + path_ + "' string of " + std::to_string(n) +
                            " bytes at offset " + std::to_string(offset_ - 4) +
                            " exceeds sane bounds");
        }
        std::string s(n, '\0');
        bytes(s.data(), n);
        return s;
    }

    void expect_magic(const char (&magic)[8]) {
        char buf[8];
        bytes(buf, 8);
        if (std::memcmp(buf, magic, 8) != 0) {
            throw DataError("'" + path_ + "' has wrong magic at byte offset 0, expected '" +
                            std::string(magic, 8) + "'");
        }
    }

    std::size_t offset() const { return offset_; }
    const std::string& path() const { return path_; }

private:
    std::string path_;
    std::ifstream in_;
    std::size_t offset_ = 0;
};

}  // namespace detail

// ---------------------------------------------------------------------------
// RSANFEAT dataset files

inline void save_dataset(const std::string& path, const Dataset& data,
                         std::uint64_t config_hash) {
    data.validate();
    detail::Writer w(path);
    w.bytes(kDatasetMagic, 8);
    w.pod<std::uint32_t>(kDatasetVersion);
    w.pod<std::uint64_t>(data.seed);
    w.pod<std::uint64_t>(config_hash);
    w.str(data.name);

    const std::uint32_t num_classes = static_cast<std::uint32_t>(data.table.num_classes());
    const std::uint32_t num_samples = static_cast<std::uint32_t>(data.samples.size());
    const std::uint32_t C = static_cast<std::uint32_t>(data.channels());
    const std::uint32_t H = static_cast<std::uint32_t>(data.height());
    const std::uint32_t W = static_cast<std::uint32_t>(data.width());
    const std::uint32_t K = static_cast<std::uint32_t>(data.num_attributes());
    w.pod(num_classes);
    w.pod(num_samples);
    w.pod(C);
    w.pod(H);
    w.pod(W);
    w.pod(K);

    for (const Sample& s : data.samples) {
        const TensorF f32 = s.features.cast<float>();
        w.bytes(f32.data(), f32.numel() * sizeof(float));
    }
    for (const Sample& s : data.samples) w.pod<std::uint32_t>(s.label);
    for (const Sample& s : data.samples) w.pod<std::uint8_t>(static_cast<std::uint8_t>(s.split));

    // Attribute table in k-major order (K rows of |Y| doubles).
    for (std::uint32_t k = 0; k < K; ++k) {
        for (std::uint32_t y = 0; y < num_classes; ++y) {
            w.pod<double>(data.table.attributes.at(y, k));
        }
    }
    for (std::uint32_t y = 0; y < num_classes; ++y) w.pod<std::uint8_t>(data.table.seen[y]);

    const bool has_plants = !data.samples.empty() && data.samples.front().has_plants();
    w.pod<std::uint8_t>(has_plants ? 1 : 0);
    if (has_plants) {
        for (const Sample& s : data.samples) {
            if (!s.has_plants()) throw DataError("mixed plant annotations in dataset");
            for (std::uint32_t k = 0; k < K; ++k) {
                w.pod<std::uint8_t>(s.plant_active[k]);
                w.pod<std::uint16_t>(static_cast<std::uint16_t>(s.plants[k].row));
                w.pod<std::uint16_t>(static_cast<std::uint16_t>(s.plants[k].col));
            }
        }
    }
}

struct LoadedDataset {
    Dataset dataset;
    std::uint64_t config_hash = 0;
};

inline LoadedDataset load_dataset(const std::string& path) {
    detail::Reader r(path);
    r.expect_magic(kDatasetMagic);
    const std::uint32_t version = r.pod<std::uint32_t>();
    if (version != kDatasetVersion) {
        throw DataError("'" + path + "' has unsupported dataset version " +
                        std::to_string(version) + " at byte offset 8");
    }
    LoadedDataset out;
    out.dataset.seed = r.pod<std::uint64_t>();
    out.config_hash = r.pod<std::uint64_t>();
    out.dataset.name = r.str(4096);

    const std::uint32_t num_classes = r.pod<std::uint32_t>();
    const std::uint32_t num_samples = r.pod<std::uint32_t>();
    const std::uint32_t C = r.pod<std::uint32_t>();
    const std::uint32_t H = r.pod<std::uint32_t>();
    const std::uint32_t W = r.pod<std::uint32_t>();
    const std::uint32_t K = r.pod<std::uint32_t>();
    if (num_classes == 0 || num_samples == 0 || C == 0 || H == 0 || W == 0 || K == 0) {
        throw DataError("'" + path + "' declares an empty extent in its header (byte offset " +
                        std::to_string(r.offset()) + ")");
    }

    out.dataset.samples.resize(num_samples);
    std::vector<float> buf(static_cast<std::size_t>(C) * H * W);
    for (Sample& s : out.dataset.samples) {
        r.bytes(buf.data(), buf.size() * sizeof(float));
        s.features = Tensor({C, H, W});
        for (std::size_t i = 0; i < buf.size(); ++i) {
            s.features[i] = static_cast<double>(buf[i]);
        }
    }
    for (Sample& s : out.dataset.samples) {
        s.label = r.pod<std::uint32_t>();
        if (s.label >= num_classes) {
            throw DataError("'" + path + "' sample label " + std::to_string(s.label) +
                            " out of range at byte offset " + std::to_string(r.offset() - 4));
        }
    }
    for (Sample& s : out.dataset.samples) {
        const std::uint8_t sp = r.pod<std::uint8_t>();
        if (sp > 2) {
            throw DataError("'" + path + "' invalid split tag at byte offset " +
                            std::to_string(r.offset() - 1));
        }
        s.split = static_cast<Split>(sp);
    }

    out.dataset.table.attributes = Tensor({num_classes, K});
    for (std::uint32_t k = 0; k < K; ++k) {
        for (std::uint32_t y = 0; y < num_classes; ++y) {
            out.dataset.table.attributes.at(y, k) = r.pod<double>();
        }
    }
    out.dataset.table.seen.resize(num_classes);
    for (std::uint32_t y = 0; y < num_classes; ++y) out.dataset.table.seen[y] = r.pod<std::uint8_t>();

    const std::uint8_t has_plants = r.pod<std::uint8_t>();
    if (has_plants) {
        for (Sample& s : out.dataset.samples) {
            s.plants.assign(K, GridIndex{});
            s.plant_active.assign(K, 0);
            for (std::uint32_t k = 0; k < K; ++k) {
                s.plant_active[k] = r.pod<std::uint8_t>();
                s.plants[k].row = r.pod<std::uint16_t>();
                s.plants[k].col = r.pod<std::uint16_t>();
                if (s.plant_active[k] && (s.plants[k].row >= H || s.plants[k].col >= W)) {
                    throw DataError("'" + path + "' plant location outside grid at byte offset " +
                                    std::to_string(r.offset() - 4));
                }
            }
        }
    }
    out.dataset.validate();
    return out;
}

// ---------------------------------------------------------------------------
// RSANCKPT checkpoints

struct Checkpoint {
    Model model;
    std::uint64_t seed = 0;
    std::uint64_t config_hash = 0;
    std::string config_echo;
    std::string rng_state;
};

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    detail::Writer w(path);
    w.bytes(kCheckpointMagic, 8);
    w.pod<std::uint32_t>(kCheckpointVersion);
    w.pod<std::uint64_t>(ckpt.seed);
    w.pod<std::uint64_t>(ckpt.config_hash);

    const AblationFlags& f = ckpt.model.flags;
    w.pod<std::uint8_t>(f.use_region_mapping);
    w.pod<std::uint8_t>(f.use_concentrate);
    w.pod<std::uint8_t>(f.use_cosine_embedding);
    w.pod<std::uint8_t>(f.use_regression);
    w.pod<std::uint8_t>(f.use_semantic_init);

    w.pod<std::uint32_t>(static_cast<std::uint32_t>(ckpt.model.channels()));
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(ckpt.model.num_attributes()));
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(ckpt.model.bank.kernel_h));
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(ckpt.model.bank.kernel_w));
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(ckpt.model.bank.kernels.size()));

    const Tensor& mat =
        f.use_region_mapping ? ckpt.model.projection : ckpt.model.pooled_projection;
    w.bytes(mat.data(), mat.numel() * sizeof(double));
    for (const Tensor& k : ckpt.model.bank.kernels) {
        w.bytes(k.data(), k.numel() * sizeof(double));
    }
    w.str(ckpt.config_echo);
    w.str(ckpt.rng_state);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    detail::Reader r(path);
    r.expect_magic(kCheckpointMagic);
    const std::uint32_t version = r.pod<std::uint32_t>();
    if (version != kCheckpointVersion) {
        throw DataError("'" + path + "' has unsupported checkpoint version " +
                        std::to_string(version) + " at byte offset 8");
    }
    Checkpoint ckpt;
    ckpt.seed = r.pod<std::uint64_t>();
    ckpt.config_hash = r.pod<std::uint64_t>();

    AblationFlags f;
    f.use_region_mapping = r.pod<std::uint8_t>() != 0;
    f.use_concentrate = r.pod<std::uint8_t>() != 0;
    f.use_cosine_embedding = r.pod<std::uint8_t>() != 0;
    f.use_regression = r.pod<std::uint8_t>() != 0;
    f.use_semantic_init = r.pod<std::uint8_t>() != 0;
    ckpt.model.flags = f;

    const std::uint32_t C = r.pod<std::uint32_t>();
    const std::uint32_t K = r.pod<std::uint32_t>();
    const std::uint32_t kh = r.pod<std::uint32_t>();
    const std::uint32_t kw = r.pod<std::uint32_t>();
    const std::uint32_t num_kernels = r.pod<std::uint32_t>();
    if (C == 0 || K == 0) {
        throw DataError("'" + path + "' declares empty model extents (byte offset " +
                        std::to_string(r.offset()) + ")");
    }

    Tensor mat({C, K});
    r.bytes(mat.data(), mat.numel() * sizeof(double));
    if (f.use_region_mapping) {
        ckpt.model.projection = std::move(mat);
    } else {
        ckpt.model.pooled_projection = std::move(mat);
    }
    ckpt.model.bank.kernel_h = kh;
    ckpt.model.bank.kernel_w = kw;
    for (std::uint32_t k = 0; k < num_kernels; ++k) {
        Tensor kernel({C, kh, kw});
        r.bytes(kernel.data(), kernel.numel() * sizeof(double));
        ckpt.model.bank.kernels.push_back(std::move(kernel));
    }
    ckpt.config_echo = r.str();
    ckpt.rng_state = r.str();
    if (!ckpt.model.projection.all_finite() || !ckpt.model.pooled_projection.all_finite()) {
        throw DataError("'" + path + "' contains non-finite parameters");
    }
    return ckpt;
}

// ---------------------------------------------------------------------------
// Attribute embedding text files: one line per attribute,
// "<attribute_id>\t<v_1> <v_2> ... <v_d>".

inline void save_embeddings_text(const std::string& path, const AttributeEmbeddings& emb) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out.precision(17);
    for (std::size_t k = 0; k < emb.num_attributes(); ++k) {
        out << k << '\t';
        for (std::size_t t = 0; t < emb.dim(); ++t) {
            if (t) out << ' ';
            out << emb.rows.at(k, t);
        }
        out << '\n';
    }
    if (!out) throw IoError("write failure on '" + path + "'");
}

inline AttributeEmbeddings load_embeddings_text(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t lineno = 0;
    std::size_t dim = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const std::size_t tab = line.find('\t');
        if (tab == std::string::npos) {
            throw DataError("'" + path + "' line " + std::to_string(lineno) +
                            ": expected '<id>\\t<floats>'");
        }
        std::istringstream id_in(line.substr(0, tab));
        std::size_t id = 0;
        if (!(id_in >> id) || id != rows.size()) {
            throw DataError("'" + path + "' line " + std::to_string(lineno) +
                            ": attribute ids must be dense and ascending from 0");
        }
        std::istringstream vec_in(line.substr(tab + 1));
        std::vector<double> vals;
        double v;
        while (vec_in >> v) vals.push_back(v);
        if (vals.empty()) {
            throw DataError("'" + path + "' line " + std::to_string(lineno) +
                            ": attribute " + std::to_string(id) + " has no values");
        }
        if (dim == 0) dim = vals.size();
        if (vals.size() != dim) {
            throw DataError("'" + path + "' line " + std::to_string(lineno) + ": expected " +
                            std::to_string(dim) + " values, got " + std::to_string(vals.size()));
        }
        rows.push_back(std::move(vals));
    }
    if (rows.empty()) throw DataError("'" + path + "' contains no attribute embeddings");
    AttributeEmbeddings emb;
    emb.rows = Tensor({rows.size(), dim});
    for (std::size_t k = 0; k < rows.size(); ++k) {
        for (std::size_t t = 0; t < dim; ++t) emb.rows.at(k, t) = rows[k][t];
    }
    emb.rows.ensure_finite("load_embeddings_text");
    return emb;
}

}  // namespace rsan::io
