#pragma once

#include <vector>

#include "rsan/classifier.hpp"
#include "rsan/dataset.hpp"
#include "rsan/model.hpp"

// Test-time evaluation paths shared by the trainer, the CLI and the
// acceptance suite.

namespace rsan {

// ZSL: restrict the split to unseen-class samples and predict among unseen
// classes only. T1 and the unseen accuracy coincide by construction.
inline GzslMetrics evaluate_zsl(const Model& model, const Dataset& data, Split split) {
    std::vector<ClassId> predictions, truths;
    for (const Sample& s : data.samples) {
        if (s.split != split || data.table.is_seen(s.label)) continue;
        predictions.push_back(zsl_predict(model.predict_attributes(s.features), data.table));
        truths.push_back(s.label);
    }
    return gzsl_metrics(predictions, truths, data.table);
}

// GZSL: every sample of the split, calibrated-stacking prediction over all
// classes.
inline GzslMetrics evaluate_gzsl(const Model& model, const Dataset& data, Split split,
                                 const ClassifierConfig& ccfg) {
    std::vector<ClassId> predictions, truths;
    for (const Sample& s : data.samples) {
        if (s.split != split) continue;
        predictions.push_back(gzsl_predict(model.predict_attributes(s.features), data.table, ccfg));
        truths.push_back(s.label);
    }
    return gzsl_metrics(predictions, truths, data.table);
}

// Model selection signal: macro per-class accuracy on the held-out seen
// validation split, predicting among seen classes by cosine.
inline double evaluate_val_t1(const Model& model, const Dataset& data) {
    std::vector<ClassId> predictions, truths;
    for (const Sample& s : data.samples) {
        if (s.split != Split::kVal || !data.table.is_seen(s.label)) continue;
        predictions.push_back(seen_predict(model.predict_attributes(s.features), data.table));
        truths.push_back(s.label);
    }
    if (truths.empty()) return 0.0;
    return gzsl_metrics(predictions, truths, data.table).seen_acc;
}

// Count of GZSL predictions landing on seen classes; monotonically
// non-increasing in gamma.
inline std::size_t count_seen_predictions(const Model& model, const Dataset& data, Split split,
                                          const ClassifierConfig& ccfg) {
    std::size_t count = 0;
    for (const Sample& s : data.samples) {
        if (s.split != split) continue;
        const ClassId y = gzsl_predict(model.predict_attributes(s.features), data.table, ccfg);
        if (data.table.is_seen(y)) ++count;
    }
    return count;
}

}  // namespace rsan
