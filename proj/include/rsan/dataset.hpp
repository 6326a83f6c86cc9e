#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rsan/attributes.hpp"
#include "rsan/classifier.hpp"
#include "rsan/errors.hpp"
#include "rsan/tensor.hpp"

namespace rsan {

enum class Split : std::uint8_t { kTrain = 0, kVal = 1, kTest = 2 };

inline const char* split_name(Split s) {
    switch (s) {
        case Split::kTrain: return "train";
        case Split::kVal: return "val";
        case Split::kTest: return "test";
    }
    return "?";
}

// One labelled feature map. When the sample comes from the planted-attribute
// generator, plants records the ground-truth region of every active
// attribute (plant_active[k] == 0 means attribute k is absent from the
// sample's class).
struct Sample {
    Tensor features;  // C x H x W
    ClassId label = 0;
    Split split = Split::kTrain;
    std::vector<GridIndex> plants;
    std::vector<std::uint8_t> plant_active;

    bool has_plants() const { return !plant_active.empty(); }
};

struct Dataset {
    std::string name = "dataset";
    std::uint64_t seed = 0;
    SemanticTable table;
    std::vector<Sample> samples;

    std::size_t channels() const { return samples.empty() ? 0 : samples[0].features.extent(0); }
    std::size_t height() const { return samples.empty() ? 0 : samples[0].features.extent(1); }
    std::size_t width() const { return samples.empty() ? 0 : samples[0].features.extent(2); }
    std::size_t num_attributes() const { return table.num_attributes(); }

    std::vector<std::size_t> split_indices(Split s) const {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < samples.size(); ++i) {
            if (samples[i].split == s) idx.push_back(i);
        }
        return idx;
    }

    void validate() const {
        table.validate();
        if (samples.empty()) throw DataError("dataset has no samples");
        const Shape& ref = samples[0].features.shape();
        for (const Sample& s : samples) {
            if (s.features.shape() != ref) {
                throw DataError("inconsistent feature shapes: " + shape_str(ref) + " vs " +
                                shape_str(s.features.shape()));
            }
            if (s.label >= table.num_classes()) {
                throw DataError("sample label " + std::to_string(s.label) +
                                " outside semantic table");
            }
            if (s.has_plants() && (s.plant_active.size() != table.num_attributes() ||
                                   s.plants.size() != table.num_attributes())) {
                throw DataError("plant block does not cover all attributes");
            }
        }
    }
};

}  // namespace rsan
