#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "rsan/errors.hpp"
#include "rsan/ops.hpp"
#include "rsan/tensor.hpp"

// Fine-grained Recognition branch, part 2: cosine-embedding classification
// over seen classes plus the ZSL / GZSL decision rules and their metrics.

namespace rsan {

using ClassId = std::uint32_t;

// Class-level semantic descriptions a(y) with the seen/unseen partition.
struct SemanticTable {
    Tensor attributes;              // |Y| x K
    std::vector<std::uint8_t> seen; // 1 = seen class, 0 = unseen

    std::size_t num_classes() const { return attributes.extent(0); }
    std::size_t num_attributes() const { return attributes.extent(1); }
    bool is_seen(ClassId y) const { return seen.at(y) != 0; }

    Tensor row(ClassId y) const {
        const std::size_t K = num_attributes();
        Tensor r({K});
        for (std::size_t k = 0; k < K; ++k) r[k] = attributes.at(y, k);
        return r;
    }

    std::vector<ClassId> seen_ids() const {
        std::vector<ClassId> ids;
        for (ClassId y = 0; y < num_classes(); ++y) {
            if (seen[y]) ids.push_back(y);
        }
        return ids;
    }

    std::vector<ClassId> unseen_ids() const {
        std::vector<ClassId> ids;
        for (ClassId y = 0; y < num_classes(); ++y) {
            if (!seen[y]) ids.push_back(y);
        }
        return ids;
    }

    void validate() const {
        if (attributes.rank() != 2) {
            throw ConfigError("semantic table must be |Y|xK, got " +
                              shape_str(attributes.shape()));
        }
        if (seen.size() != num_classes()) {
            throw ConfigError("seen mask covers " + std::to_string(seen.size()) +
                              " of " + std::to_string(num_classes()) + " classes");
        }
        for (ClassId y = 0; y < num_classes(); ++y) {
            double norm2 = 0.0;
            for (std::size_t k = 0; k < num_attributes(); ++k) {
                norm2 += attributes.at(y, k) * attributes.at(y, k);
            }
            if (norm2 == 0.0) {
                throw ConfigError("semantic description of class " + std::to_string(y) +
                                  " has zero norm");
            }
        }
    }
};

struct ClassifierConfig {
    double tau_s = 0.04;        // softmax temperature; grid-searched per dataset
    double sigma_scale = 20.0;  // cosine scaling at GZSL inference
    double gamma = 0.7;         // calibrated-stacking penalty on seen classes

    void validate() const {
        if (!(tau_s > 0.0)) throw ConfigError("tau_s must be positive");
        if (!(sigma_scale > 0.0)) throw ConfigError("sigma_scale must be positive");
        if (gamma < 0.0) throw ConfigError("gamma must be nonnegative");
    }
};

namespace detail {

// Softmax cross-entropy over given logits; returns loss and fills dlogits.
inline double softmax_ce(const std::vector<double>& logits, std::size_t target,
                         std::vector<double>* dlogits) {
    const double m = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double l : logits) z += std::exp(l - m);
    const double loss = -(logits[target] - m - std::log(z));
    if (dlogits) {
        dlogits->resize(logits.size());
        for (std::size_t i = 0; i < logits.size(); ++i) {
            (*dlogits)[i] = std::exp(logits[i] - m) / z - (i == target ? 1.0 : 0.0);
        }
    }
    return loss;
}

}  // namespace detail

// Eq-style cosine-embedding loss: softmax cross-entropy over SEEN classes
// with logits cos(a_hat, a(y')) / tau_s. Numerically stabilized by
// max-subtraction.
inline double classification_loss(const Tensor& a_hat, ClassId y, const SemanticTable& table,
                                  const ClassifierConfig& cfg, Tensor* grad_a_hat = nullptr) {
    if (y >= table.num_classes() || !table.is_seen(y)) {
        throw UsageError("classification_loss target class " + std::to_string(y) +
                         " is not a seen class");
    }
    const std::vector<ClassId> seen = table.seen_ids();
    std::vector<double> logits(seen.size());
    std::size_t target = 0;
    for (std::size_t i = 0; i < seen.size(); ++i) {
        logits[i] = ops::cosine(a_hat, table.row(seen[i])) / cfg.tau_s;
        if (seen[i] == y) target = i;
    }
    std::vector<double> dlogits;
    const double loss = detail::softmax_ce(logits, target, grad_a_hat ? &dlogits : nullptr);
    if (grad_a_hat) {
        *grad_a_hat = Tensor({a_hat.numel()});
        for (std::size_t i = 0; i < seen.size(); ++i) {
            Tensor du, dw;
            ops::cosine_backward(a_hat, table.row(seen[i]), dlogits[i] / cfg.tau_s, du, dw);
            for (std::size_t k = 0; k < a_hat.numel(); ++k) (*grad_a_hat)[k] += du[k];
        }
    }
    return loss;
}

// Dot-product counterpart used by the ablation study in place of the cosine
// embedding: logits are raw inner products, no temperature.
inline double dot_classification_loss(const Tensor& a_hat, ClassId y, const SemanticTable& table,
                                      Tensor* grad_a_hat = nullptr) {
    if (y >= table.num_classes() || !table.is_seen(y)) {
        throw UsageError("dot_classification_loss target class " + std::to_string(y) +
                         " is not a seen class");
    }
    const std::vector<ClassId> seen = table.seen_ids();
    std::vector<double> logits(seen.size());
    std::size_t target = 0;
    for (std::size_t i = 0; i < seen.size(); ++i) {
        logits[i] = ops::dot(a_hat, table.row(seen[i]));
        if (seen[i] == y) target = i;
    }
    std::vector<double> dlogits;
    const double loss = detail::softmax_ce(logits, target, grad_a_hat ? &dlogits : nullptr);
    if (grad_a_hat) {
        *grad_a_hat = Tensor({a_hat.numel()});
        for (std::size_t i = 0; i < seen.size(); ++i) {
            const Tensor a_i = table.row(seen[i]);
            for (std::size_t k = 0; k < a_hat.numel(); ++k) {
                (*grad_a_hat)[k] += dlogits[i] * a_i[k];
            }
        }
    }
    return loss;
}

// ZSL rule: argmax of cosine over unseen classes only, ties to lowest id.
inline ClassId zsl_predict(const Tensor& a_hat, const SemanticTable& table) {
    const std::vector<ClassId> unseen = table.unseen_ids();
    if (unseen.empty()) throw ConfigError("zsl_predict: table has no unseen classes");
    ClassId best = unseen[0];
    double best_s = ops::cosine(a_hat, table.row(unseen[0]));
    for (std::size_t i = 1; i < unseen.size(); ++i) {
        const double s = ops::cosine(a_hat, table.row(unseen[i]));
        if (s > best_s) {
            best_s = s;
            best = unseen[i];
        }
    }
    return best;
}

// Seen-class cosine argmax; used for validation-split model selection.
inline ClassId seen_predict(const Tensor& a_hat, const SemanticTable& table) {
    const std::vector<ClassId> seen = table.seen_ids();
    if (seen.empty()) throw ConfigError("seen_predict: table has no seen classes");
    ClassId best = seen[0];
    double best_s = ops::cosine(a_hat, table.row(seen[0]));
    for (std::size_t i = 1; i < seen.size(); ++i) {
        const double s = ops::cosine(a_hat, table.row(seen[i]));
        if (s > best_s) {
            best_s = s;
            best = seen[i];
        }
    }
    return best;
}

// GZSL rule with calibrated stacking:
// score(y) = sigma_scale * cos(a_hat, a(y)) - gamma * [y seen], argmax over
// all classes, ties to lowest id.
inline ClassId gzsl_predict(const Tensor& a_hat, const SemanticTable& table,
                            const ClassifierConfig& cfg) {
    if (table.num_classes() == 0) throw ConfigError("gzsl_predict: empty table");
    ClassId best = 0;
    double best_s = -std::numeric_limits<double>::infinity();
    for (ClassId y = 0; y < table.num_classes(); ++y) {
        double s = cfg.sigma_scale * ops::cosine(a_hat, table.row(y));
        if (table.is_seen(y)) s -= cfg.gamma;
        if (s > best_s) {
            best_s = s;
            best = y;
        }
    }
    return best;
}

struct GzslMetrics {
    double seen_acc = 0.0;    // S: macro per-class accuracy over seen classes
    double unseen_acc = 0.0;  // U: same over unseen classes
    double harmonic = 0.0;    // H = 2SU/(S+U), 0 when S+U == 0
    double top1 = 0.0;        // T1: macro over every evaluated class
};

// Macro (per-class) averaging throughout. Classes with zero test samples are
// excluded from their averages.
inline GzslMetrics gzsl_metrics(const std::vector<ClassId>& predictions,
                                const std::vector<ClassId>& truths,
                                const SemanticTable& table) {
    if (predictions.size() != truths.size()) {
        throw DimensionError("gzsl_metrics: " + std::to_string(predictions.size()) +
                             " predictions vs " + std::to_string(truths.size()) + " truths");
    }
    const std::size_t n_classes = table.num_classes();
    std::vector<std::size_t> total(n_classes, 0), correct(n_classes, 0);
    for (std::size_t i = 0; i < truths.size(); ++i) {
        if (truths[i] >= n_classes) {
            throw UsageError("gzsl_metrics: truth class " + std::to_string(truths[i]) +
                             " not in table");
        }
        ++total[truths[i]];
        if (predictions[i] == truths[i]) ++correct[truths[i]];
    }
    double seen_sum = 0.0, unseen_sum = 0.0, all_sum = 0.0;
    std::size_t seen_n = 0, unseen_n = 0, all_n = 0;
    for (ClassId y = 0; y < n_classes; ++y) {
        if (total[y] == 0) continue;
        const double acc = static_cast<double>(correct[y]) / static_cast<double>(total[y]);
        all_sum += acc;
        ++all_n;
        if (table.is_seen(y)) {
            seen_sum += acc;
            ++seen_n;
        } else {
            unseen_sum += acc;
            ++unseen_n;
        }
    }
    GzslMetrics m;
    m.seen_acc = seen_n ? seen_sum / static_cast<double>(seen_n) : 0.0;
    m.unseen_acc = unseen_n ? unseen_sum / static_cast<double>(unseen_n) : 0.0;
    m.top1 = all_n ? all_sum / static_cast<double>(all_n) : 0.0;
    const double s = m.seen_acc + m.unseen_acc;
    m.harmonic = s > 0.0 ? 2.0 * m.seen_acc * m.unseen_acc / s : 0.0;
    return m;
}

}  // namespace rsan
