#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "rsan/classifier.hpp"
#include "rsan/errors.hpp"
#include "rsan/tensor.hpp"
#include "rsan/trainer.hpp"

// Plain-file exports: saliency maps (CSV + PGM), metrics records and
// training logs.

namespace rsan::exporter {

// One H x W attribute plane of a K x H x W map, raw values, full precision.
inline void write_saliency_csv(const std::string& path, const Tensor& map, std::size_t attribute) {
    if (map.rank() != 3 || attribute >= map.extent(0)) {
        throw UsageError("saliency export: attribute " + std::to_string(attribute) +
                         " outside map " + shape_str(map.shape()));
    }
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out.precision(17);
    const std::size_t H = map.extent(1), W = map.extent(2);
    for (std::size_t i = 0; i < H; ++i) {
        for (std::size_t j = 0; j < W; ++j) {
            if (j) out << ',';
            out << map.at(attribute, i, j);
        }
        out << '\n';
    }
    if (!out) throw IoError("write failure on '" + path + "'");
}

// Same plane as binary 8-bit PGM (P5) after min-max normalization. A
// constant plane maps to all zeros.
inline void write_saliency_pgm(const std::string& path, const Tensor& map, std::size_t attribute) {
    if (map.rank() != 3 || attribute >= map.extent(0)) {
        throw UsageError("saliency export: attribute " + std::to_string(attribute) +
                         " outside map " + shape_str(map.shape()));
    }
    const std::size_t H = map.extent(1), W = map.extent(2);
    const double* plane = map.data() + attribute * H * W;
    double lo = plane[0], hi = plane[0];
    for (std::size_t r = 1; r < H * W; ++r) {
        lo = std::min(lo, plane[r]);
        hi = std::max(hi, plane[r]);
    }
    const double range = hi - lo;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << "P5\n" << W << ' ' << H << "\n255\n";
    for (std::size_t r = 0; r < H * W; ++r) {
        const double norm = range > 0.0 ? (plane[r] - lo) / range : 0.0;
        const int byte = static_cast<int>(norm * 255.0 + 0.5);
        out.put(static_cast<char>(byte < 0 ? 0 : (byte > 255 ? 255 : byte)));
    }
    if (!out) throw IoError("write failure on '" + path + "'");
}

constexpr const char* kMetricsHeader =
    "dataset,split,T1,S,U,H,gamma,tau_s,seed,config_hash";

inline std::string metrics_csv_line(const std::string& dataset, const std::string& split,
                                    const GzslMetrics& m, double gamma, double tau_s,
                                    std::uint64_t seed, std::uint64_t config_hash) {
    std::ostringstream os;
    os.precision(10);
    os << dataset << ',' << split << ',' << m.top1 << ',' << m.seen_acc << ',' << m.unseen_acc
       << ',' << m.harmonic << ',' << gamma << ',' << tau_s << ',' << seed << ','
       << config_hash;
    return os.str();
}

// Appends one record; writes the header first when creating the file.
inline void append_metrics_line(const std::string& path, const std::string& line) {
    const bool fresh = !std::filesystem::exists(path);
    std::ofstream out(path, std::ios::app);
    if (!out) throw IoError("cannot open '" + path + "' for appending");
    if (fresh) out << kMetricsHeader << '\n';
    out << line << '\n';
    if (!out) throw IoError("write failure on '" + path + "'");
}

inline void write_training_log(const std::string& path, const std::vector<EpochLog>& history) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out.precision(10);
    out << "epoch,lr,l_cls,l_con,l_reg,val_T1\n";
    for (const EpochLog& e : history) {
        out << e.epoch << ',' << e.lr << ',' << e.l_cls << ',' << e.l_con << ',' << e.l_reg
            << ',' << e.val_t1 << '\n';
    }
    if (!out) throw IoError("write failure on '" + path + "'");
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << text;
    if (!out) throw IoError("write failure on '" + path + "'");
}

}  // namespace rsan::exporter
