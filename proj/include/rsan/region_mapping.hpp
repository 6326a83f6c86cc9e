#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "rsan/errors.hpp"
#include "rsan/ops.hpp"
#include "rsan/tensor.hpp"

// Fine-grained Recognition branch, part 1: attribute saliency over regions,
// the concentrate penalty, and the predicted semantic representation.

namespace rsan {

// Saliency map with its per-attribute peaks. a_hat[k] always equals
// M[k, peaks[k]] and peaks[k] is the row-major-first argmax of M[k].
struct SaliencyResult {
    Tensor map;                     // K x H x W
    std::vector<GridIndex> peaks;   // one per attribute
    Tensor a_hat;                   // K
};

namespace detail {

inline GridIndex spatial_argmax(const Tensor& map, std::size_t k) {
    const std::size_t H = map.extent(1), W = map.extent(2);
    const double* plane = map.data() + k * H * W;
    std::size_t best = 0;
    double best_v = plane[0];
    for (std::size_t r = 1; r < H * W; ++r) {
        if (plane[r] > best_v) {
            best_v = plane[r];
            best = r;
        }
    }
    return GridIndex{best / W, best % W};
}

}  // namespace detail

// Projects every region through P (C x K) and scans each attribute plane for
// its peak.
inline SaliencyResult saliency(const Tensor& v, const Tensor& projection) {
    SaliencyResult res;
    res.map = ops::region_linear(v, projection);
    const std::size_t K = res.map.extent(0);
    res.peaks.resize(K);
    res.a_hat = Tensor({K});
    for (std::size_t k = 0; k < K; ++k) {
        res.peaks[k] = detail::spatial_argmax(res.map, k);
        res.a_hat[k] = res.map.at(k, res.peaks[k].row, res.peaks[k].col);
    }
    return res;
}

// Spatial spread penalty: sum_k sum_ij M[k,i,j] * ((i - pi)^2 + (j - pj)^2)
// with (pi, pj) the peak of attribute k. Raw sum, no normalization; the
// lambda_1 weight absorbs scale. Peaks are re-derived and checked against the
// caller's, not trusted.
inline double concentrate_loss(const Tensor& map, const std::vector<GridIndex>& peaks) {
    if (map.rank() != 3) {
        throw DimensionError("concentrate_loss expects KxHxW map, got " + shape_str(map.shape()));
    }
    const std::size_t K = map.extent(0), H = map.extent(1), W = map.extent(2);
    if (peaks.size() != K) {
        throw ContractError("concentrate_loss: " + std::to_string(peaks.size()) +
                            " peaks for " + std::to_string(K) + " attributes");
    }
    double loss = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
        const GridIndex actual = detail::spatial_argmax(map, k);
        if (!(actual == peaks[k])) {
            throw ContractError("concentrate_loss: peak for attribute " + std::to_string(k) +
                                " is (" + std::to_string(actual.row) + "," +
                                std::to_string(actual.col) + "), caller passed (" +
                                std::to_string(peaks[k].row) + "," +
                                std::to_string(peaks[k].col) + ")");
        }
        const double pi = static_cast<double>(peaks[k].row);
        const double pj = static_cast<double>(peaks[k].col);
        for (std::size_t i = 0; i < H; ++i) {
            for (std::size_t j = 0; j < W; ++j) {
                const double di = static_cast<double>(i) - pi;
                const double dj = static_cast<double>(j) - pj;
                loss += map.at(k, i, j) * (di * di + dj * dj);
            }
        }
    }
    if (!std::isfinite(loss)) throw DomainError("concentrate_loss produced a non-finite value");
    return loss;
}

// Gradient of the concentrate loss w.r.t. the map values. Peak coordinates
// are integer argmax outputs and are treated as constants.
inline Tensor concentrate_loss_backward(const Shape& map_shape,
                                        const std::vector<GridIndex>& peaks,
                                        double grad_out = 1.0) {
    if (map_shape.size() != 3 || peaks.size() != map_shape[0]) {
        throw UsageError("concentrate_loss adjoint: peaks inconsistent with map shape " +
                         shape_str(map_shape));
    }
    const std::size_t K = map_shape[0], H = map_shape[1], W = map_shape[2];
    Tensor grad(map_shape);
    for (std::size_t k = 0; k < K; ++k) {
        const double pi = static_cast<double>(peaks[k].row);
        const double pj = static_cast<double>(peaks[k].col);
        for (std::size_t i = 0; i < H; ++i) {
            for (std::size_t j = 0; j < W; ++j) {
                const double di = static_cast<double>(i) - pi;
                const double dj = static_cast<double>(j) - pj;
                grad.at(k, i, j) = grad_out * (di * di + dj * dj);
            }
        }
    }
    return grad;
}

// Routes a per-attribute cotangent to each attribute's peak region (the only
// path the max readout exposes).
inline Tensor scatter_peak_grad(const Shape& map_shape, const std::vector<GridIndex>& peaks,
                                const Tensor& grad_a_hat) {
    if (map_shape.size() != 3 || peaks.size() != map_shape[0] ||
        grad_a_hat.numel() != map_shape[0]) {
        throw UsageError("scatter_peak_grad: cotangent/peaks inconsistent with map shape " +
                         shape_str(map_shape));
    }
    Tensor grad(map_shape);
    for (std::size_t k = 0; k < map_shape[0]; ++k) {
        if (peaks[k].row >= map_shape[1] || peaks[k].col >= map_shape[2]) {
            throw UsageError("scatter_peak_grad: peak outside map for attribute " +
                             std::to_string(k));
        }
        grad.at(k, peaks[k].row, peaks[k].col) = grad_a_hat[k];
    }
    return grad;
}

// psi_RM(x): the semantic representation read off the saliency peaks.
inline Tensor predict_semantic(const Tensor& v, const Tensor& projection) {
    return saliency(v, projection).a_hat;
}

// Ablation baseline: global average pooling followed by a linear layer,
// a_hat = g(x)^T V.
inline Tensor baseline_predict(const Tensor& v, const Tensor& pooled_projection) {
    const Tensor g = ops::global_avg_pool(v);
    if (pooled_projection.rank() != 2 || pooled_projection.extent(0) != g.extent(0)) {
        throw DimensionError("baseline_predict: pooled feature " + shape_str(g.shape()) +
                             " incompatible with projection " +
                             shape_str(pooled_projection.shape()));
    }
    const std::size_t C = pooled_projection.extent(0), K = pooled_projection.extent(1);
    Tensor out({K});
    for (std::size_t k = 0; k < K; ++k) {
        double acc = 0.0;
        for (std::size_t c = 0; c < C; ++c) acc += g[c] * pooled_projection.at(c, k);
        out[k] = acc;
    }
    out.ensure_finite("baseline_predict");
    return out;
}

// Adjoint of baseline_predict w.r.t. the projection V.
inline Tensor baseline_predict_backward_projection(const Tensor& v, const Tensor& grad_a_hat) {
    const Tensor g = ops::global_avg_pool(v);
    const std::size_t C = g.extent(0), K = grad_a_hat.numel();
    Tensor grad({C, K});
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t k = 0; k < K; ++k) {
            grad.at(c, k) = g[c] * grad_a_hat[k];
        }
    }
    return grad;
}

}  // namespace rsan
