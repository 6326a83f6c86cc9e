#pragma once

#include <cmath>
#include <cstddef>
#include <string>

#include "rsan/errors.hpp"
#include "rsan/tensor.hpp"

// Dense kernels composed by every other module: forward passes plus the
// hand-derived adjoint of each. All reductions run in a fixed index-ascending
// order and accumulate in 64-bit, so results are reproducible bit for bit.

namespace rsan::ops {

namespace detail {

template <class T>
void require_chw(const BasicTensor<T>& t, const char* name) {
    if (t.rank() != 3) {
        throw DimensionError(std::string(name) + " must be rank-3 (CxHxW), got " +
                             shape_str(t.shape()));
    }
}

}  // namespace detail

// Per-region linear map: out[k,i,j] = sum_c v[c,i,j] * P[c,k].
// Equivalent to applying the same C->K linear layer at each of the H*W
// spatial positions.
template <class T>
BasicTensor<T> region_linear(const BasicTensor<T>& v, const BasicTensor<T>& P) {
    detail::require_chw(v, "region_linear input");
    if (P.rank() != 2 || P.extent(0) != v.extent(0)) {
        throw DimensionError("region_linear: input " + shape_str(v.shape()) +
                             " incompatible with projection " + shape_str(P.shape()));
    }
    const std::size_t C = v.extent(0), H = v.extent(1), W = v.extent(2);
    const std::size_t K = P.extent(1);
    const std::size_t hw = H * W;

    std::vector<double> acc(K * hw, 0.0);
    for (std::size_t k = 0; k < K; ++k) {
        double* out_k = acc.data() + k * hw;
        for (std::size_t c = 0; c < C; ++c) {
            const double p = static_cast<double>(P.at(c, k));
            const T* v_c = v.data() + c * hw;
            for (std::size_t r = 0; r < hw; ++r) {
                out_k[r] += p * static_cast<double>(v_c[r]);
            }
        }
    }
    BasicTensor<T> out({K, H, W});
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = static_cast<T>(acc[i]);
    out.ensure_finite("region_linear");
    return out;
}

// Adjoint of region_linear w.r.t. the projection matrix.
template <class T>
BasicTensor<T> region_linear_backward_projection(const BasicTensor<T>& v,
                                                 const BasicTensor<T>& grad_out) {
    detail::require_chw(v, "region_linear adjoint input");
    detail::require_chw(grad_out, "region_linear adjoint cotangent");
    const std::size_t C = v.extent(0), H = v.extent(1), W = v.extent(2);
    const std::size_t K = grad_out.extent(0);
    if (grad_out.extent(1) != H || grad_out.extent(2) != W) {
        throw UsageError("region_linear adjoint: cotangent " + shape_str(grad_out.shape()) +
                         " does not match forward input " + shape_str(v.shape()));
    }
    const std::size_t hw = H * W;
    BasicTensor<T> grad_p({C, K});
    for (std::size_t c = 0; c < C; ++c) {
        const T* v_c = v.data() + c * hw;
        for (std::size_t k = 0; k < K; ++k) {
            const T* g_k = grad_out.data() + k * hw;
            double acc = 0.0;
            for (std::size_t r = 0; r < hw; ++r) {
                acc += static_cast<double>(v_c[r]) * static_cast<double>(g_k[r]);
            }
            grad_p.at(c, k) = static_cast<T>(acc);
        }
    }
    grad_p.ensure_finite("region_linear_backward_projection");
    return grad_p;
}

// Adjoint of region_linear w.r.t. the feature map.
template <class T>
BasicTensor<T> region_linear_backward_input(const BasicTensor<T>& P,
                                            const BasicTensor<T>& grad_out) {
    detail::require_chw(grad_out, "region_linear adjoint cotangent");
    if (P.rank() != 2 || P.extent(1) != grad_out.extent(0)) {
        throw UsageError("region_linear adjoint: projection " + shape_str(P.shape()) +
                         " does not match cotangent " + shape_str(grad_out.shape()));
    }
    const std::size_t C = P.extent(0), K = P.extent(1);
    const std::size_t H = grad_out.extent(1), W = grad_out.extent(2);
    const std::size_t hw = H * W;
    BasicTensor<T> grad_v({C, H, W});
    for (std::size_t c = 0; c < C; ++c) {
        T* gv_c = grad_v.data() + c * hw;
        for (std::size_t r = 0; r < hw; ++r) {
            double acc = 0.0;
            for (std::size_t k = 0; k < K; ++k) {
                acc += static_cast<double>(P.at(c, k)) *
                       static_cast<double>(grad_out[k * hw + r]);
            }
            gv_c[r] = static_cast<T>(acc);
        }
    }
    grad_v.ensure_finite("region_linear_backward_input");
    return grad_v;
}

// g[c] = mean over spatial positions of channel c.
template <class T>
BasicTensor<T> global_avg_pool(const BasicTensor<T>& v) {
    detail::require_chw(v, "global_avg_pool input");
    const std::size_t C = v.extent(0), hw = v.extent(1) * v.extent(2);
    BasicTensor<T> out({C});
    for (std::size_t c = 0; c < C; ++c) {
        const T* v_c = v.data() + c * hw;
        double acc = 0.0;
        for (std::size_t r = 0; r < hw; ++r) acc += static_cast<double>(v_c[r]);
        out[c] = static_cast<T>(acc / static_cast<double>(hw));
    }
    out.ensure_finite("global_avg_pool");
    return out;
}

template <class T>
BasicTensor<T> global_avg_pool_backward(const Shape& input_shape,
                                        const BasicTensor<T>& grad_out) {
    if (input_shape.size() != 3 || grad_out.rank() != 1 ||
        grad_out.extent(0) != input_shape[0]) {
        throw UsageError("global_avg_pool adjoint: cotangent " + shape_str(grad_out.shape()) +
                         " does not match forward input " + shape_str(input_shape));
    }
    const std::size_t C = input_shape[0], hw = input_shape[1] * input_shape[2];
    BasicTensor<T> grad_v(input_shape);
    for (std::size_t c = 0; c < C; ++c) {
        const T g = static_cast<T>(static_cast<double>(grad_out[c]) / static_cast<double>(hw));
        T* gv_c = grad_v.data() + c * hw;
        for (std::size_t r = 0; r < hw; ++r) gv_c[r] = g;
    }
    return grad_v;
}

// Valid depthwise correlation, stride 1, no padding, no kernel flip.
// out[c,i,j] = sum_{p,q} v[c,i+p,j+q] * k[c,p,q].
template <class T>
BasicTensor<T> depthwise_conv_valid(const BasicTensor<T>& v, const BasicTensor<T>& kernel) {
    detail::require_chw(v, "depthwise_conv input");
    detail::require_chw(kernel, "depthwise_conv kernel");
    const std::size_t C = v.extent(0), H = v.extent(1), W = v.extent(2);
    const std::size_t h = kernel.extent(1), w = kernel.extent(2);
    if (kernel.extent(0) != C || h > H || w > W) {
        throw DimensionError("depthwise_conv: kernel " + shape_str(kernel.shape()) +
                             " does not fit input " + shape_str(v.shape()));
    }
    const std::size_t oh = H - h + 1, ow = W - w + 1;
    BasicTensor<T> out({C, oh, ow});
    for (std::size_t c = 0; c < C; ++c) {
        const T* v_c = v.data() + c * H * W;
        const T* k_c = kernel.data() + c * h * w;
        T* out_c = out.data() + c * oh * ow;
        for (std::size_t i = 0; i < oh; ++i) {
            for (std::size_t j = 0; j < ow; ++j) {
                double acc = 0.0;
                for (std::size_t p = 0; p < h; ++p) {
                    const T* row = v_c + (i + p) * W + j;
                    const T* krow = k_c + p * w;
                    for (std::size_t q = 0; q < w; ++q) {
                        acc += static_cast<double>(row[q]) * static_cast<double>(krow[q]);
                    }
                }
                out_c[i * ow + j] = static_cast<T>(acc);
            }
        }
    }
    out.ensure_finite("depthwise_conv_valid");
    return out;
}

template <class T>
BasicTensor<T> depthwise_conv_backward_kernel(const BasicTensor<T>& v, const Shape& kernel_shape,
                                              const BasicTensor<T>& grad_out) {
    detail::require_chw(v, "depthwise_conv adjoint input");
    detail::require_chw(grad_out, "depthwise_conv adjoint cotangent");
    const std::size_t C = v.extent(0), H = v.extent(1), W = v.extent(2);
    if (kernel_shape.size() != 3 || kernel_shape[0] != C) {
        throw UsageError("depthwise_conv adjoint: kernel shape " + shape_str(kernel_shape) +
                         " does not match input " + shape_str(v.shape()));
    }
    const std::size_t h = kernel_shape[1], w = kernel_shape[2];
    const std::size_t oh = H - h + 1, ow = W - w + 1;
    if (grad_out.extent(0) != C || grad_out.extent(1) != oh || grad_out.extent(2) != ow) {
        throw UsageError("depthwise_conv adjoint: cotangent " + shape_str(grad_out.shape()) +
                         " inconsistent with recorded forward shapes");
    }
    BasicTensor<T> grad_k(kernel_shape);
    for (std::size_t c = 0; c < C; ++c) {
        const T* v_c = v.data() + c * H * W;
        const T* g_c = grad_out.data() + c * oh * ow;
        T* gk_c = grad_k.data() + c * h * w;
        for (std::size_t p = 0; p < h; ++p) {
            for (std::size_t q = 0; q < w; ++q) {
                double acc = 0.0;
                for (std::size_t i = 0; i < oh; ++i) {
                    for (std::size_t j = 0; j < ow; ++j) {
                        acc += static_cast<double>(g_c[i * ow + j]) *
                               static_cast<double>(v_c[(i + p) * W + (j + q)]);
                    }
                }
                gk_c[p * w + q] = static_cast<T>(acc);
            }
        }
    }
    grad_k.ensure_finite("depthwise_conv_backward_kernel");
    return grad_k;
}

template <class T>
BasicTensor<T> depthwise_conv_backward_input(const Shape& input_shape,
                                             const BasicTensor<T>& kernel,
                                             const BasicTensor<T>& grad_out) {
    detail::require_chw(kernel, "depthwise_conv adjoint kernel");
    detail::require_chw(grad_out, "depthwise_conv adjoint cotangent");
    if (input_shape.size() != 3 || kernel.extent(0) != input_shape[0]) {
        throw UsageError("depthwise_conv adjoint: kernel " + shape_str(kernel.shape()) +
                         " does not match input shape " + shape_str(input_shape));
    }
    const std::size_t C = input_shape[0], H = input_shape[1], W = input_shape[2];
    const std::size_t h = kernel.extent(1), w = kernel.extent(2);
    const std::size_t oh = H - h + 1, ow = W - w + 1;
    if (grad_out.extent(0) != C || grad_out.extent(1) != oh || grad_out.extent(2) != ow) {
        throw UsageError("depthwise_conv adjoint: cotangent " + shape_str(grad_out.shape()) +
                         " inconsistent with recorded forward shapes");
    }
    BasicTensor<T> grad_v(input_shape);
    for (std::size_t c = 0; c < C; ++c) {
        const T* k_c = kernel.data() + c * h * w;
        const T* g_c = grad_out.data() + c * oh * ow;
        T* gv_c = grad_v.data() + c * H * W;
        for (std::size_t i = 0; i < oh; ++i) {
            for (std::size_t j = 0; j < ow; ++j) {
                const double g = static_cast<double>(g_c[i * ow + j]);
                for (std::size_t p = 0; p < h; ++p) {
                    for (std::size_t q = 0; q < w; ++q) {
                        gv_c[(i + p) * W + (j + q)] +=
                            static_cast<T>(g * static_cast<double>(k_c[p * w + q]));
                    }
                }
            }
        }
    }
    grad_v.ensure_finite("depthwise_conv_backward_input");
    return grad_v;
}

// Result of a global max reduction together with the saved argmax, which the
// adjoint needs.
struct MaxResult {
    double value = 0.0;
    std::size_t flat_index = 0;           // row-major position in the reduced tensor
    std::vector<std::size_t> location;    // multi-index form of flat_index
};

// Maximum over the whole tensor. Ties resolve to the FIRST maximizing
// location in row-major order; this tie rule is fixed for the entire
// artifact so peak coordinates are deterministic.
template <class T>
MaxResult global_max_argmax(const BasicTensor<T>& t) {
    if (t.numel() == 0) throw DomainError("global_max_argmax on empty tensor");
    std::size_t best = 0;
    double best_v = static_cast<double>(t[0]);
    for (std::size_t i = 1; i < t.numel(); ++i) {
        const double v = static_cast<double>(t[i]);
        if (v > best_v) {
            best_v = v;
            best = i;
        }
    }
    if (!std::isfinite(best_v)) throw DomainError("global_max_argmax produced a non-finite value");
    MaxResult res;
    res.value = best_v;
    res.flat_index = best;
    res.location.resize(t.rank());
    std::size_t rem = best;
    for (std::size_t axis = t.rank(); axis-- > 0;) {
        res.location[axis] = rem % t.extent(axis);
        rem /= t.extent(axis);
    }
    return res;
}

// Adjoint of the max: the cotangent flows only to the winning location.
template <class T>
BasicTensor<T> global_max_backward(const Shape& input_shape, const MaxResult& saved,
                                   double grad_out) {
    const std::size_t n = shape_numel(input_shape);
    if (saved.flat_index >= n) {
        throw UsageError("global_max adjoint: saved argmax " +
                         std::to_string(saved.flat_index) + " outside tensor of " +
                         std::to_string(n) + " elements (no matching forward pass)");
    }
    BasicTensor<T> grad(input_shape);
    grad[saved.flat_index] = static_cast<T>(grad_out);
    return grad;
}

// cos(u, w) = dot / (|u| |w|). A zero-norm operand is an error, never a
// silent zero.
template <class T>
double cosine(const BasicTensor<T>& u, const BasicTensor<T>& w) {
    if (!u.same_shape(w)) {
        throw DimensionError("cosine: operands " + shape_str(u.shape()) + " vs " +
                             shape_str(w.shape()));
    }
    double dot = 0.0, nu = 0.0, nw = 0.0;
    for (std::size_t i = 0; i < u.numel(); ++i) {
        const double a = static_cast<double>(u[i]), b = static_cast<double>(w[i]);
        dot += a * b;
        nu += a * a;
        nw += b * b;
    }
    if (nu == 0.0 || nw == 0.0) {
        throw DegenerateVectorError("cosine of a zero-norm vector");
    }
    const double c = dot / (std::sqrt(nu) * std::sqrt(nw));
    if (!std::isfinite(c)) throw DomainError("cosine produced a non-finite value");
    return c;
}

// d cos / du = w/(|u||w|) - cos * u/|u|^2, symmetric in the other operand.
template <class T>
void cosine_backward(const BasicTensor<T>& u, const BasicTensor<T>& w, double grad_out,
                     BasicTensor<T>& grad_u, BasicTensor<T>& grad_w) {
    if (!u.same_shape(w)) {
        throw UsageError("cosine adjoint: operands " + shape_str(u.shape()) + " vs " +
                         shape_str(w.shape()));
    }
    double dot = 0.0, nu2 = 0.0, nw2 = 0.0;
    for (std::size_t i = 0; i < u.numel(); ++i) {
        const double a = static_cast<double>(u[i]), b = static_cast<double>(w[i]);
        dot += a * b;
        nu2 += a * a;
        nw2 += b * b;
    }
    if (nu2 == 0.0 || nw2 == 0.0) {
        throw DegenerateVectorError("cosine adjoint of a zero-norm vector");
    }
    const double nu = std::sqrt(nu2), nw = std::sqrt(nw2);
    const double inv = 1.0 / (nu * nw);
    const double c = dot * inv;
    grad_u = BasicTensor<T>(u.shape());
    grad_w = BasicTensor<T>(w.shape());
    for (std::size_t i = 0; i < u.numel(); ++i) {
        const double a = static_cast<double>(u[i]), b = static_cast<double>(w[i]);
        grad_u[i] = static_cast<T>(grad_out * (b * inv - c * a / nu2));
        grad_w[i] = static_cast<T>(grad_out * (a * inv - c * b / nw2));
    }
}

template <class T>
BasicTensor<T> relu(const BasicTensor<T>& t) {
    BasicTensor<T> out(t.shape());
    for (std::size_t i = 0; i < t.numel(); ++i) out[i] = t[i] > T(0) ? t[i] : T(0);
    out.ensure_finite("relu");
    return out;
}

// Subgradient 0 at the kink.
template <class T>
BasicTensor<T> relu_backward(const BasicTensor<T>& pre_activation, const BasicTensor<T>& grad_out) {
    if (!pre_activation.same_shape(grad_out)) {
        throw UsageError("relu adjoint: cotangent " + shape_str(grad_out.shape()) +
                         " does not match forward input " + shape_str(pre_activation.shape()));
    }
    BasicTensor<T> grad(pre_activation.shape());
    for (std::size_t i = 0; i < grad.numel(); ++i) {
        grad[i] = pre_activation[i] > T(0) ? grad_out[i] : T(0);
    }
    return grad;
}

inline double dot(const Tensor& u, const Tensor& w) {
    if (!u.same_shape(w)) {
        throw DimensionError("dot: operands " + shape_str(u.shape()) + " vs " +
                             shape_str(w.shape()));
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < u.numel(); ++i) acc += u[i] * w[i];
    return acc;
}

}  // namespace rsan::ops
