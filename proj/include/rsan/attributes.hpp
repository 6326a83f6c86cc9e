#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "rsan/errors.hpp"
#include "rsan/ops.hpp"
#include "rsan/rng.hpp"
#include "rsan/tensor.hpp"

// Attribute Constraint branch: semantically initialized attribute kernels,
// depthwise attribute maps, and the max-pooled attribute regression.

namespace rsan {

// Averaged word embedding E^k per attribute, one row each.
struct AttributeEmbeddings {
    Tensor rows;  // K x d

    std::size_t num_attributes() const { return rows.extent(0); }
    std::size_t dim() const { return rows.extent(1); }

    Tensor row(std::size_t k) const {
        Tensor r({dim()});
        for (std::size_t t = 0; t < dim(); ++t) r[t] = rows.at(k, t);
        return r;
    }
};

// E^k = arithmetic mean of the attribute's word vectors.
inline AttributeEmbeddings average_word_embeddings(
    const std::vector<std::vector<Tensor>>& words_per_attribute) {
    const std::size_t K = words_per_attribute.size();
    if (K == 0) throw DataError("no attributes given");
    std::size_t d = 0;
    for (std::size_t k = 0; k < K; ++k) {
        if (words_per_attribute[k].empty()) {
            throw DataError("attribute " + std::to_string(k) + " has no word vectors");
        }
        for (const Tensor& w : words_per_attribute[k]) {
            if (w.rank() != 1) {
                throw DimensionError("word vector of attribute " + std::to_string(k) +
                                     " has shape " + shape_str(w.shape()));
            }
            if (d == 0) d = w.extent(0);
            if (w.extent(0) != d) {
                throw DimensionError("word vector of attribute " + std::to_string(k) + " has " +
                                     std::to_string(w.extent(0)) + " dims, expected " +
                                     std::to_string(d));
            }
        }
    }
    AttributeEmbeddings emb;
    emb.rows = Tensor({K, d});
    for (std::size_t k = 0; k < K; ++k) {
        const double inv_n = 1.0 / static_cast<double>(words_per_attribute[k].size());
        for (std::size_t t = 0; t < d; ++t) {
            double acc = 0.0;
            for (const Tensor& w : words_per_attribute[k]) acc += w[t];
            emb.rows.at(k, t) = acc * inv_n;
        }
    }
    emb.rows.ensure_finite("average_word_embeddings");
    return emb;
}

// How the semantic initializer maps an embedding onto a kernel.
//  kFullKernel: W is d x (C*h*w); the reshape fills the whole C x h x w kernel.
//  kBroadcastSpatial: W is d x (h*w); one spatial block shared by all channels.
enum class KernelInitMode { kFullKernel, kBroadcastSpatial };

// One trainable C x h x w kernel per attribute, plus the initializer weights
// W_init that produced them. W_init takes no further part in optimization
// after initialization.
struct AttributeKernelBank {
    std::vector<Tensor> kernels;  // K tensors, each C x h x w
    Tensor w_init;                // d x (C*h*w) or d x (h*w), empty for random init
    std::size_t kernel_h = 1;
    std::size_t kernel_w = 1;

    std::size_t num_attributes() const { return kernels.size(); }
};

// Semantic initialization: W_init ~ uniform(-s, s) with the Glorot bound
// s = sqrt(6 / (d + fan_out)), then kernels[k] = reshape(E^k W_init).
inline AttributeKernelBank init_kernels(const AttributeEmbeddings& emb, std::size_t channels,
                                        std::size_t h, std::size_t w, Rng& rng,
                                        KernelInitMode mode = KernelInitMode::kFullKernel) {
    if (channels == 0 || h == 0 || w == 0) {
        throw ConfigError("kernel extents must be positive");
    }
    const std::size_t K = emb.num_attributes();
    const std::size_t d = emb.dim();
    const std::size_t fan_out = mode == KernelInitMode::kFullKernel ? channels * h * w : h * w;
    const double s = std::sqrt(6.0 / static_cast<double>(d + fan_out));

    AttributeKernelBank bank;
    bank.kernel_h = h;
    bank.kernel_w = w;
    bank.w_init = Tensor({d, fan_out});
    for (std::size_t i = 0; i < bank.w_init.numel(); ++i) bank.w_init[i] = rng.uniform(-s, s);

    bank.kernels.reserve(K);
    for (std::size_t k = 0; k < K; ++k) {
        std::vector<double> flat(fan_out, 0.0);
        for (std::size_t t = 0; t < d; ++t) {
            const double e = emb.rows.at(k, t);
            for (std::size_t f = 0; f < fan_out; ++f) flat[f] += e * bank.w_init.at(t, f);
        }
        Tensor kernel({channels, h, w});
        if (mode == KernelInitMode::kFullKernel) {
            for (std::size_t f = 0; f < fan_out; ++f) kernel[f] = flat[f];
        } else {
            for (std::size_t c = 0; c < channels; ++c) {
                for (std::size_t f = 0; f < fan_out; ++f) kernel[c * h * w + f] = flat[f];
            }
        }
        kernel.ensure_finite("init_kernels");
        bank.kernels.push_back(std::move(kernel));
    }
    return bank;
}

// Ablation counterpart: kernels drawn directly from uniform(-s, s),
// s = sqrt(6 / (C*h*w + 1)), no semantic prior.
inline AttributeKernelBank random_init_kernels(std::size_t num_attributes, std::size_t channels,
                                               std::size_t h, std::size_t w, Rng& rng) {
    if (channels == 0 || h == 0 || w == 0) {
        throw ConfigError("kernel extents must be positive");
    }
    const double s = std::sqrt(6.0 / static_cast<double>(channels * h * w + 1));
    AttributeKernelBank bank;
    bank.kernel_h = h;
    bank.kernel_w = w;
    bank.kernels.reserve(num_attributes);
    for (std::size_t k = 0; k < num_attributes; ++k) {
        Tensor kernel({channels, h, w});
        for (std::size_t i = 0; i < kernel.numel(); ++i) kernel[i] = rng.uniform(-s, s);
        bank.kernels.push_back(std::move(kernel));
    }
    return bank;
}

// Forward state the regression adjoint needs: where each attribute's global
// max landed and what it was.
struct AttributeRegressionResult {
    Tensor a_reg;                        // K, elementwise >= 0
    std::vector<ops::MaxResult> argmax;  // over A^k = relu(conv) per attribute
    Shape map_shape;                     // C x (H-h+1) x (W-w+1)
};

// a_reg[k] = max over channels and space of relu(depthwise_conv(v, kernel_k)).
inline AttributeRegressionResult attribute_regression(const Tensor& v,
                                                      const AttributeKernelBank& bank) {
    const std::size_t K = bank.num_attributes();
    AttributeRegressionResult res;
    res.a_reg = Tensor({K});
    res.argmax.resize(K);
    for (std::size_t k = 0; k < K; ++k) {
        const Tensor attr_map = ops::relu(ops::depthwise_conv_valid(v, bank.kernels[k]));
        res.argmax[k] = ops::global_max_argmax(attr_map);
        res.a_reg[k] = res.argmax[k].value;
        if (k == 0) res.map_shape = attr_map.shape();
    }
    return res;
}

// Gradient of a function of a_reg w.r.t. each kernel. Only the winning
// location carries gradient, and only when the relu output there is positive.
inline std::vector<Tensor> attribute_regression_backward_kernels(
    const Tensor& v, const AttributeKernelBank& bank, const AttributeRegressionResult& fwd,
    const Tensor& grad_a_reg) {
    const std::size_t K = bank.num_attributes();
    if (fwd.argmax.size() != K || grad_a_reg.numel() != K) {
        throw UsageError("attribute_regression adjoint: cotangent or saved state does not "
                         "match the forward pass");
    }
    const std::size_t h = bank.kernel_h, w = bank.kernel_w;
    const std::size_t W = v.extent(2);
    std::vector<Tensor> grads;
    grads.reserve(K);
    for (std::size_t k = 0; k < K; ++k) {
        Tensor gk(bank.kernels[k].shape());
        if (fwd.argmax[k].value > 0.0 && grad_a_reg[k] != 0.0) {
            const auto& loc = fwd.argmax[k].location;
            if (loc.size() != 3 || loc[0] >= v.extent(0) || loc[1] + h > v.extent(1) ||
                loc[2] + w > W) {
                throw UsageError("attribute_regression adjoint: saved argmax outside the "
                                 "forward feature map");
            }
            const std::size_t c = loc[0];
            const double* v_c = v.data() + c * v.extent(1) * W;
            for (std::size_t p = 0; p < h; ++p) {
                for (std::size_t q = 0; q < w; ++q) {
                    gk.at(c, p, q) = grad_a_reg[k] * v_c[(loc[1] + p) * W + (loc[2] + q)];
                }
            }
        }
        grads.push_back(std::move(gk));
    }
    return grads;
}

// L_Reg = squared L2 distance between estimated and true attributes. Literal
// sum of squares; lambda_2 absorbs scale.
inline double regression_loss(const Tensor& a_reg, const Tensor& a_true,
                              Tensor* grad_a_reg = nullptr) {
    if (!a_reg.same_shape(a_true)) {
        throw DimensionError("regression_loss: " + shape_str(a_reg.shape()) + " vs " +
                             shape_str(a_true.shape()));
    }
    double loss = 0.0;
    if (grad_a_reg) *grad_a_reg = Tensor({a_reg.numel()});
    for (std::size_t k = 0; k < a_reg.numel(); ++k) {
        const double diff = a_reg[k] - a_true[k];
        loss += diff * diff;
        if (grad_a_reg) (*grad_a_reg)[k] = 2.0 * diff;
    }
    if (!std::isfinite(loss)) throw DomainError("regression_loss produced a non-finite value");
    return loss;
}

}  // namespace rsan
