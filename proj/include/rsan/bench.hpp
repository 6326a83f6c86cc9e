#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "rsan/attributes.hpp"
#include "rsan/classifier.hpp"
#include "rsan/dataset.hpp"
#include "rsan/errors.hpp"
#include "rsan/model.hpp"
#include "rsan/region_mapping.hpp"
#include "rsan/rng.hpp"

// Planted-attribute benchmark: synthetic feature maps in which every active
// attribute injects a known signature vector at a known region. Ground truth
// for transfer, localization and ablation claims without a pretrained
// encoder.

namespace rsan::bench {

enum class SignatureMode {
    kRandomOrthonormal,  // rows of a random orthogonal frame; needs C >= K
    kAxisAligned,        // canonical basis vectors; needs C >= K
    kRandomUnit,         // random unit rows with min-angle rejection; any C
};

struct BenchSpec {
    std::size_t channels = 32;
    std::size_t height = 14;
    std::size_t width = 14;
    std::size_t num_attributes = 16;
    std::size_t num_seen = 12;
    std::size_t num_unseen = 4;
    std::size_t samples_per_class = 30;
    double noise_sigma = 0.05;
    std::size_t embedding_dim = 16;
    std::uint64_t seed = 1;
    SignatureMode signature_mode = SignatureMode::kRandomOrthonormal;

    // Class attribute patterns: how many attributes a class activates and how
    // strongly. The per-class scale spreads vector norms so that cosine and
    // dot-product classifiers genuinely differ.
    std::size_t min_active = 3;
    std::size_t max_active = 6;
    double strength_min = 0.4;
    double strength_max = 1.0;
    double class_scale_min = 0.75;
    double class_scale_max = 1.25;
    double embedding_noise = 0.02;

    std::string name = "planted";

    void validate() const {
        if (channels == 0 || height == 0 || width == 0 || num_attributes == 0) {
            throw ConfigError("benchmark extents must be positive");
        }
        if (num_seen < 2 || num_unseen < 1) {
            throw ConfigError("need at least 2 seen and 1 unseen class");
        }
        if (samples_per_class < 3) {
            throw ConfigError("need at least 3 samples per class for train/val/test splits");
        }
        if (noise_sigma < 0.0) throw ConfigError("noise_sigma must be >= 0");
        if (embedding_dim == 0) throw ConfigError("embedding_dim must be positive");
        if (min_active == 0 || min_active > max_active || max_active > num_attributes) {
            throw ConfigError("active-attribute range invalid");
        }
        if (signature_mode != SignatureMode::kRandomUnit && channels < num_attributes) {
            throw ConfigError("cannot build " + std::to_string(num_attributes) +
                              " orthogonal signatures in " + std::to_string(channels) +
                              " channels");
        }
    }
};

struct GeneratedBenchmark {
    Dataset dataset;
    AttributeEmbeddings embeddings;
    Tensor signatures;  // K x C unit-norm rows
};

namespace detail {

inline Tensor make_signatures(const BenchSpec& spec, Rng& rng) {
    const std::size_t K = spec.num_attributes, C = spec.channels;
    Tensor sig({K, C});
    if (spec.signature_mode == SignatureMode::kAxisAligned) {
        for (std::size_t k = 0; k < K; ++k) sig.at(k, k) = 1.0;
        return sig;
    }
    if (spec.signature_mode == SignatureMode::kRandomOrthonormal) {
        // Gram-Schmidt on gaussian rows.
        for (std::size_t k = 0; k < K; ++k) {
            std::vector<double> row(C);
            for (;;) {
                for (std::size_t c = 0; c < C; ++c) row[c] = rng.normal();
                for (std::size_t m = 0; m < k; ++m) {
                    double proj = 0.0;
                    for (std::size_t c = 0; c < C; ++c) proj += row[c] * sig.at(m, c);
                    for (std::size_t c = 0; c < C; ++c) row[c] -= proj * sig.at(m, c);
                }
                double norm2 = 0.0;
                for (std::size_t c = 0; c < C; ++c) norm2 += row[c] * row[c];
                if (norm2 > 1e-12) {
                    const double inv = 1.0 / std::sqrt(norm2);
                    for (std::size_t c = 0; c < C; ++c) sig.at(k, c) = row[c] * inv;
                    break;
                }
            }
        }
        return sig;
    }
    // Random unit rows, rejecting pairs closer than a minimum angle.
    const double max_abs_cos = 0.8;
    for (std::size_t k = 0; k < K; ++k) {
        for (int attempt = 0; attempt < 1000; ++attempt) {
            std::vector<double> row(C);
            double norm2 = 0.0;
            for (std::size_t c = 0; c < C; ++c) {
                row[c] = rng.normal();
                norm2 += row[c] * row[c];
            }
            const double inv = 1.0 / std::sqrt(norm2);
            bool ok = true;
            for (std::size_t m = 0; m < k && ok; ++m) {
                double cosv = 0.0;
                for (std::size_t c = 0; c < C; ++c) cosv += row[c] * inv * sig.at(m, c);
                ok = std::abs(cosv) < max_abs_cos;
            }
            if (ok) {
                for (std::size_t c = 0; c < C; ++c) sig.at(k, c) = row[c] * inv;
                break;
            }
            if (attempt == 999) {
                throw ConfigError("could not place " + std::to_string(K) +
                                  " well-separated signatures in " + std::to_string(C) +
                                  " channels");
            }
        }
    }
    return sig;
}

inline double row_cosine(const Tensor& a, std::size_t i, const Tensor& b, std::size_t j) {
    const std::size_t n = a.extent(1);
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
        dot += a.at(i, t) * b.at(j, t);
        na += a.at(i, t) * a.at(i, t);
        nb += b.at(j, t) * b.at(j, t);
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

inline bool distinct_from_rows(const Tensor& table, std::size_t upto,
                               const std::vector<double>& candidate) {
    const std::size_t K = table.extent(1);
    double nc = 0.0;
    for (double v : candidate) nc += v * v;
    if (nc == 0.0) return false;
    for (std::size_t y = 0; y < upto; ++y) {
        double dot = 0.0, ny = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            dot += table.at(y, k) * candidate[k];
            ny += table.at(y, k) * table.at(y, k);
        }
        if (ny == 0.0) continue;
        if (dot / (std::sqrt(ny) * std::sqrt(nc)) >= 1.0 - 1e-6) return false;
    }
    return true;
}

}  // namespace detail

// Builds the full benchmark: semantic table (seen patterns plus convex-like
// unseen combinations of them), planted feature maps with recorded
// locations, and attribute embeddings that carry the signature geometry into
// d dimensions.
inline GeneratedBenchmark generate(const BenchSpec& spec) {
    spec.validate();
    const std::size_t K = spec.num_attributes, C = spec.channels;
    const std::size_t H = spec.height, W = spec.width;
    const std::size_t num_classes = spec.num_seen + spec.num_unseen;

    Rng root(spec.seed);
    Rng sig_rng = root.fork(1);
    Rng class_rng = root.fork(2);
    Rng emb_rng = root.fork(3);

    GeneratedBenchmark out;
    out.signatures = detail::make_signatures(spec, sig_rng);

    // Seen classes: sparse nonnegative attribute patterns. Unseen classes:
    // convex combinations of two seen patterns, so that unseen semantics lie
    // in the span the seen classes cover (the transfer premise).
    Tensor table({num_classes, K});
    for (std::size_t y = 0; y < num_classes; ++y) {
        const bool is_seen = y < spec.num_seen;
        for (int attempt = 0;; ++attempt) {
            if (attempt >= 1000) {
                throw ConfigError("could not generate distinct class attribute vectors");
            }
            std::vector<double> row(K, 0.0);
            const double scale = class_rng.uniform(spec.class_scale_min, spec.class_scale_max);
            if (is_seen) {
                const std::size_t n_active =
                    spec.min_active +
                    static_cast<std::size_t>(
                        class_rng.uniform_index(spec.max_active - spec.min_active + 1));
                for (std::size_t k : class_rng.sample_without_replacement(K, n_active)) {
                    row[k] = scale * class_rng.uniform(spec.strength_min, spec.strength_max);
                }
            } else {
                // Unseen classes: near-even blends of two seen patterns,
                // pruned to their strongest entries. Every active attribute
                // still comes from a seen class, but the support stays as
                // sparse as a typical seen class; an unpruned union support
                // is denser, and with the max read-out's positive noise
                // floor denser vectors attract every noisy estimate, which
                // would invert the usual seen-class prediction bias.
                const std::size_t p = class_rng.uniform_index(spec.num_seen);
                std::size_t q = class_rng.uniform_index(spec.num_seen - 1);
                if (q >= p) ++q;
                const double alpha = class_rng.uniform(0.45, 0.55);
                for (std::size_t k = 0; k < K; ++k) {
                    row[k] = scale * (alpha * table.at(p, k) + (1.0 - alpha) * table.at(q, k));
                }
                std::vector<std::size_t> order(K);
                for (std::size_t k = 0; k < K; ++k) order[k] = k;
                std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                    if (row[a] != row[b]) return row[a] > row[b];
                    return a < b;
                });
                for (std::size_t r = spec.min_active; r < K; ++r) row[order[r]] = 0.0;
            }
            if (detail::distinct_from_rows(table, y, row)) {
                for (std::size_t k = 0; k < K; ++k) table.at(y, k) = row[k];
                break;
            }
        }
    }

    out.dataset.name = spec.name;
    out.dataset.seed = spec.seed;
    out.dataset.table.attributes = std::move(table);
    out.dataset.table.seen.assign(num_classes, 0);
    for (std::size_t y = 0; y < spec.num_seen; ++y) out.dataset.table.seen[y] = 1;

    // Attribute "word embeddings": the signature projected to d dimensions
    // plus small noise, emitted through the word-averaging path (1-3 word
    // vectors whose mean is the target).
    Tensor proj({C, spec.embedding_dim});
    for (std::size_t i = 0; i < proj.numel(); ++i) {
        proj[i] = emb_rng.normal() / std::sqrt(static_cast<double>(C));
    }
    std::vector<std::vector<Tensor>> words(K);
    for (std::size_t k = 0; k < K; ++k) {
        Tensor target({spec.embedding_dim});
        for (std::size_t t = 0; t < spec.embedding_dim; ++t) {
            double acc = 0.0;
            for (std::size_t c = 0; c < C; ++c) acc += out.signatures.at(k, c) * proj.at(c, t);
            target[t] = acc + spec.embedding_noise * emb_rng.normal();
        }
        const std::size_t n_words = 1 + static_cast<std::size_t>(emb_rng.uniform_index(3));
        std::vector<Tensor> deltas;
        Tensor mean_delta({spec.embedding_dim});
        for (std::size_t i = 0; i < n_words; ++i) {
            Tensor d({spec.embedding_dim});
            for (std::size_t t = 0; t < spec.embedding_dim; ++t) d[t] = 0.1 * emb_rng.normal();
            for (std::size_t t = 0; t < spec.embedding_dim; ++t) mean_delta[t] += d[t];
            deltas.push_back(std::move(d));
        }
        for (std::size_t t = 0; t < spec.embedding_dim; ++t) {
            mean_delta[t] /= static_cast<double>(n_words);
        }
        for (std::size_t i = 0; i < n_words; ++i) {
            Tensor w({spec.embedding_dim});
            for (std::size_t t = 0; t < spec.embedding_dim; ++t) {
                w[t] = target[t] + deltas[i][t] - mean_delta[t];
            }
            words[k].push_back(std::move(w));
        }
    }
    out.embeddings = average_word_embeddings(words);

    // Samples: i.i.d. gaussian background, one plant per active attribute at
    // a uniform location. Collisions simply add. Each sample owns an RNG
    // stream keyed by its global index, so generation order is irrelevant.
    const std::size_t spc = spec.samples_per_class;
    const std::size_t val_count = std::max<std::size_t>(1, spc / 6);
    const std::size_t test_count = std::max<std::size_t>(1, spc / 6);
    const std::size_t train_count = spc - val_count - test_count;

    std::size_t sample_index = 0;
    for (std::size_t y = 0; y < num_classes; ++y) {
        const bool is_seen = out.dataset.table.seen[y] != 0;
        for (std::size_t s = 0; s < spc; ++s, ++sample_index) {
            Rng srng = root.fork(0x100000 + sample_index);
            Sample sample;
            sample.label = static_cast<ClassId>(y);
            if (!is_seen) {
                sample.split = Split::kTest;
            } else if (s < train_count) {
                sample.split = Split::kTrain;
            } else if (s < train_count + val_count) {
                sample.split = Split::kVal;
            } else {
                sample.split = Split::kTest;
            }
            sample.features = Tensor({C, H, W});
            if (spec.noise_sigma > 0.0) {
                for (std::size_t i = 0; i < sample.features.numel(); ++i) {
                    sample.features[i] = spec.noise_sigma * srng.normal();
                }
            }
            sample.plants.assign(K, GridIndex{});
            sample.plant_active.assign(K, 0);
            for (std::size_t k = 0; k < K; ++k) {
                const double strength = out.dataset.table.attributes.at(y, k);
                if (strength <= 0.0) continue;
                const std::size_t pos = static_cast<std::size_t>(srng.uniform_index(H * W));
                const GridIndex loc{pos / W, pos % W};
                sample.plants[k] = loc;
                sample.plant_active[k] = 1;
                for (std::size_t c = 0; c < C; ++c) {
                    sample.features.at(c, loc.row, loc.col) +=
                        strength * out.signatures.at(k, c);
                }
            }
            out.dataset.samples.push_back(std::move(sample));
        }
    }
    out.dataset.validate();
    return out;
}

// Nearest seen classes of an unseen class by attribute cosine, best first.
inline std::vector<ClassId> similar_seen_classes(const SemanticTable& table, ClassId unseen_id,
                                                 std::size_t count) {
    if (unseen_id >= table.num_classes() || table.is_seen(unseen_id)) {
        throw UsageError("similar_seen_classes expects an unseen class id");
    }
    std::vector<std::pair<double, ClassId>> scored;
    for (ClassId y : table.seen_ids()) {
        scored.emplace_back(detail::row_cosine(table.attributes, unseen_id, table.attributes, y),
                            y);
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    std::vector<ClassId> ids;
    for (std::size_t i = 0; i < scored.size() && i < count; ++i) ids.push_back(scored[i].second);
    return ids;
}

// Fraction of active attributes whose saliency peak lands within Chebyshev
// distance 1 of the planted region.
inline double localization_score(const std::vector<GridIndex>& peaks, const Sample& sample) {
    if (!sample.has_plants()) throw UsageError("localization_score needs plant ground truth");
    if (peaks.size() != sample.plant_active.size()) {
        throw UsageError("localization_score: peak count does not match attribute count");
    }
    std::size_t active = 0, hit = 0;
    for (std::size_t k = 0; k < peaks.size(); ++k) {
        if (!sample.plant_active[k]) continue;
        ++active;
        const long di = static_cast<long>(peaks[k].row) - static_cast<long>(sample.plants[k].row);
        const long dj = static_cast<long>(peaks[k].col) - static_cast<long>(sample.plants[k].col);
        if (std::labs(di) <= 1 && std::labs(dj) <= 1) ++hit;
    }
    if (active == 0) return 0.0;
    return static_cast<double>(hit) / static_cast<double>(active);
}

// Aggregate over a split: fraction over all (sample, active attribute)
// pairs.
inline double localization_score(const Model& model, const Dataset& data, Split split) {
    if (!model.flags.use_region_mapping) {
        throw UsageError("localization_score needs a region-mapping model");
    }
    std::size_t active = 0, hit = 0;
    for (const Sample& s : data.samples) {
        if (s.split != split || !s.has_plants()) continue;
        const SaliencyResult sal = saliency(s.features, model.projection);
        for (std::size_t k = 0; k < sal.peaks.size(); ++k) {
            if (!s.plant_active[k]) continue;
            ++active;
            const long di =
                static_cast<long>(sal.peaks[k].row) - static_cast<long>(s.plants[k].row);
            const long dj =
                static_cast<long>(sal.peaks[k].col) - static_cast<long>(s.plants[k].col);
            if (std::labs(di) <= 1 && std::labs(dj) <= 1) ++hit;
        }
    }
    if (active == 0) return 0.0;
    return static_cast<double>(hit) / static_cast<double>(active);
}

// Where do an unseen class's samples go: itself, each listed similar seen
// class, or anywhere else. Proportions sum to 1 per class.
struct ConfusionRow {
    ClassId unseen_class = 0;
    std::size_t sample_count = 0;
    double self_fraction = 0.0;
    std::vector<std::pair<ClassId, double>> similar_fractions;
    double other_fraction = 0.0;
};

inline std::vector<ConfusionRow> confusion_breakdown(
    const std::vector<ClassId>& predictions, const std::vector<ClassId>& truths,
    const SemanticTable& table, const std::map<ClassId, std::vector<ClassId>>& similar_map) {
    if (predictions.size() != truths.size()) {
        throw DimensionError("confusion_breakdown: " + std::to_string(predictions.size()) +
                             " predictions vs " + std::to_string(truths.size()) + " truths");
    }
    std::vector<ConfusionRow> rows;
    for (const auto& [unseen_id, similar] : similar_map) {
        ConfusionRow row;
        row.unseen_class = unseen_id;
        std::size_t self_n = 0, other_n = 0;
        std::vector<std::size_t> sim_n(similar.size(), 0);
        for (std::size_t i = 0; i < truths.size(); ++i) {
            if (truths[i] != unseen_id) continue;
            ++row.sample_count;
            if (predictions[i] == unseen_id) {
                ++self_n;
                continue;
            }
            bool matched = false;
            for (std::size_t j = 0; j < similar.size(); ++j) {
                if (predictions[i] == similar[j]) {
                    ++sim_n[j];
                    matched = true;
                    break;
                }
            }
            if (!matched) ++other_n;
        }
        if (row.sample_count == 0) continue;
        const double inv = 1.0 / static_cast<double>(row.sample_count);
        row.self_fraction = static_cast<double>(self_n) * inv;
        for (std::size_t j = 0; j < similar.size(); ++j) {
            row.similar_fractions.emplace_back(similar[j], static_cast<double>(sim_n[j]) * inv);
        }
        row.other_fraction = static_cast<double>(other_n) * inv;
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace rsan::bench
