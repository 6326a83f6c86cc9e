#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "rsan/errors.hpp"

namespace rsan {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

inline std::string shape_str(const Shape& shape) {
    if (shape.empty()) return "scalar";
    std::string s;
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += 'x';
        s += std::to_string(shape[i]);
    }
    return s;
}

// Dense row-major tensor. Storage scalar is a template parameter; double is
// the default used everywhere math happens, float exists for compact on-disk
// and in-memory feature storage. Reductions always accumulate in double.
template <class T>
class BasicTensor {
public:
    BasicTensor() = default;

    explicit BasicTensor(Shape shape, T fill = T(0))
        : shape_(std::move(shape)), data_(checked_numel(shape_), fill) {}

    BasicTensor(Shape shape, std::vector<T> values)
        : shape_(std::move(shape)), data_(std::move(values)) {
        if (data_.size() != checked_numel(shape_)) {
            throw DimensionError("data length " + std::to_string(data_.size()) +
                                 " does not match shape " + shape_str(shape_));
        }
    }

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t extent(std::size_t axis) const { return shape_.at(axis); }
    std::size_t numel() const { return data_.size(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::vector<T>& values() { return data_; }
    const std::vector<T>& values() const { return data_; }

    T& operator[](std::size_t flat) { return data_[flat]; }
    T operator[](std::size_t flat) const { return data_[flat]; }

    // 3-axis accessors cover the shapes this library works with (C x H x W,
    // K x H x W); the 2-axis ones cover matrices (C x K, |Y| x K).
    T& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    T at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
    T& at(std::size_t c, std::size_t i, std::size_t j) {
        return data_[(c * shape_[1] + i) * shape_[2] + j];
    }
    T at(std::size_t c, std::size_t i, std::size_t j) const {
        return data_[(c * shape_[1] + i) * shape_[2] + j];
    }

    bool same_shape(const BasicTensor& other) const { return shape_ == other.shape_; }

    bool all_finite() const {
        for (T v : data_) {
            if (!std::isfinite(static_cast<double>(v))) return false;
        }
        return true;
    }

    // Exported operations call this on their results: NaN/Inf is an error
    // state, never silently propagated.
    void ensure_finite(const char* op_name) const {
        if (!all_finite()) {
            throw DomainError(std::string(op_name) + " produced a non-finite value");
        }
    }

    template <class U>
    BasicTensor<U> cast() const {
        std::vector<U> out(data_.size());
        for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
        return BasicTensor<U>(shape_, std::move(out));
    }

    bool operator==(const BasicTensor& other) const {
        return shape_ == other.shape_ && data_ == other.data_;
    }

private:
    static std::size_t checked_numel(const Shape& shape) {
        for (std::size_t d : shape) {
            if (d == 0) throw DimensionError("zero extent in shape " + shape_str(shape));
        }
        return shape_numel(shape);
    }

    Shape shape_;
    std::vector<T> data_;
};

using Tensor = BasicTensor<double>;
using TensorF = BasicTensor<float>;

// Spatial location inside an H x W grid.
struct GridIndex {
    std::size_t row = 0;
    std::size_t col = 0;
    bool operator==(const GridIndex&) const = default;
};

}  // namespace rsan
