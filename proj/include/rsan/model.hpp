#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "rsan/attributes.hpp"
#include "rsan/classifier.hpp"
#include "rsan/dataset.hpp"
#include "rsan/errors.hpp"
#include "rsan/region_mapping.hpp"
#include "rsan/rng.hpp"
#include "rsan/tensor.hpp"

// Joint model: the Fine-grained Recognition branch (projection P or the
// pooled baseline V) and the Attribute Constraint branch (kernel bank),
// assembled according to the ablation switches.

namespace rsan {

struct AblationFlags {
    bool use_region_mapping = true;
    bool use_concentrate = true;
    bool use_cosine_embedding = true;
    bool use_regression = true;
    bool use_semantic_init = true;

    void validate() const {
        if (use_concentrate && !use_region_mapping) {
            throw ConfigError("concentrate loss requires region mapping");
        }
        if (use_semantic_init && !use_regression) {
            throw ConfigError("semantic initialization requires the regression branch");
        }
    }
};

class Model {
public:
    AblationFlags flags;
    Tensor projection;         // P, C x K; present when use_region_mapping
    Tensor pooled_projection;  // V, C x K; present otherwise (ablation baseline)
    AttributeKernelBank bank;  // present when use_regression

    static Model create(const AblationFlags& flags, std::size_t channels,
                        std::size_t num_attributes, std::size_t kernel_h, std::size_t kernel_w,
                        const AttributeEmbeddings* embeddings, Rng& rng,
                        KernelInitMode init_mode = KernelInitMode::kFullKernel) {
        flags.validate();
        Model m;
        m.flags = flags;
        const double s = std::sqrt(6.0 / static_cast<double>(channels + num_attributes));
        Rng proj_rng = rng.fork(1);
        Tensor mat({channels, num_attributes});
        for (std::size_t i = 0; i < mat.numel(); ++i) mat[i] = proj_rng.uniform(-s, s);
        if (flags.use_region_mapping) {
            m.projection = std::move(mat);
        } else {
            m.pooled_projection = std::move(mat);
        }
        if (flags.use_regression) {
            Rng kernel_rng = rng.fork(2);
            if (flags.use_semantic_init) {
                if (embeddings == nullptr) {
                    throw ConfigError("semantic initialization requested without embeddings");
                }
                if (embeddings->num_attributes() != num_attributes) {
                    throw ConfigError("embeddings cover " +
                                      std::to_string(embeddings->num_attributes()) +
                                      " attributes, model has " + std::to_string(num_attributes));
                }
                m.bank = init_kernels(*embeddings, channels, kernel_h, kernel_w, kernel_rng,
                                      init_mode);
            } else {
                m.bank = random_init_kernels(num_attributes, channels, kernel_h, kernel_w,
                                             kernel_rng);
            }
        }
        return m;
    }

    std::size_t channels() const {
        const Tensor& p = flags.use_region_mapping ? projection : pooled_projection;
        return p.extent(0);
    }

    std::size_t num_attributes() const {
        const Tensor& p = flags.use_region_mapping ? projection : pooled_projection;
        return p.extent(1);
    }

    // psi(x): region-mapping peaks, or the pooled baseline when region
    // mapping is ablated.
    Tensor predict_attributes(const Tensor& v) const {
        return flags.use_region_mapping ? predict_semantic(v, projection)
                                        : baseline_predict(v, pooled_projection);
    }

    // Trainable parameters in a fixed order; gradients and optimizer state
    // use the same order.
    std::vector<Tensor*> parameters() {
        std::vector<Tensor*> ps;
        ps.push_back(flags.use_region_mapping ? &projection : &pooled_projection);
        for (Tensor& k : bank.kernels) ps.push_back(&k);
        return ps;
    }

    std::vector<const Tensor*> parameters() const {
        std::vector<const Tensor*> ps;
        ps.push_back(flags.use_region_mapping ? &projection : &pooled_projection);
        for (const Tensor& k : bank.kernels) ps.push_back(&k);
        return ps;
    }
};

// Joint objective terms. Each is a batch mean; total folds in the lambda
// weights.
struct LossBreakdown {
    double total = 0.0;
    double l_cls = 0.0;
    double l_con = 0.0;
    double l_reg = 0.0;
};

struct BatchSample {
    const Tensor* features;
    ClassId label;
};

// Evaluates L = L_Cls + lambda1 L_Con + lambda2 L_Reg over a batch, each term
// averaged across samples. Disabled components contribute exactly 0 and
// produce no gradient. When grads is non-null it receives one tensor per
// model parameter (same order as Model::parameters()) holding d total / d
// param.
inline LossBreakdown joint_loss(const Model& model, const std::vector<BatchSample>& batch,
                                const SemanticTable& table, const ClassifierConfig& ccfg,
                                double lambda1, double lambda2,
                                std::vector<Tensor>* grads = nullptr) {
    if (batch.empty()) throw UsageError("joint_loss on an empty batch");
    model.flags.validate();

    if (grads) {
        grads->clear();
        for (const Tensor* p : model.parameters()) grads->emplace_back(p->shape());
    }

    const double inv_b = 1.0 / static_cast<double>(batch.size());
    LossBreakdown out;

    for (const BatchSample& sample : batch) {
        const Tensor& v = *sample.features;
        Tensor grad_a_hat;

        double sample_cls = 0.0;
        double sample_con = 0.0;
        if (model.flags.use_region_mapping) {
            const SaliencyResult sal = saliency(v, model.projection);
            sample_cls =
                model.flags.use_cosine_embedding
                    ? classification_loss(sal.a_hat, sample.label, table, ccfg,
                                          grads ? &grad_a_hat : nullptr)
                    : dot_classification_loss(sal.a_hat, sample.label, table,
                                              grads ? &grad_a_hat : nullptr);
            if (model.flags.use_concentrate) {
                sample_con = concentrate_loss(sal.map, sal.peaks);
            }
            if (grads) {
                Tensor grad_map = scatter_peak_grad(sal.map.shape(), sal.peaks, grad_a_hat);
                if (model.flags.use_concentrate) {
                    const Tensor con_grad =
                        concentrate_loss_backward(sal.map.shape(), sal.peaks, lambda1);
                    for (std::size_t i = 0; i < grad_map.numel(); ++i) {
                        grad_map[i] += con_grad[i];
                    }
                }
                const Tensor grad_p = ops::region_linear_backward_projection(v, grad_map);
                Tensor& acc = (*grads)[0];
                for (std::size_t i = 0; i < acc.numel(); ++i) acc[i] += inv_b * grad_p[i];
            }
        } else {
            const Tensor a_hat = baseline_predict(v, model.pooled_projection);
            sample_cls = model.flags.use_cosine_embedding
                             ? classification_loss(a_hat, sample.label, table, ccfg,
                                                   grads ? &grad_a_hat : nullptr)
                             : dot_classification_loss(a_hat, sample.label, table,
                                                       grads ? &grad_a_hat : nullptr);
            if (grads) {
                const Tensor grad_v = baseline_predict_backward_projection(v, grad_a_hat);
                Tensor& acc = (*grads)[0];
                for (std::size_t i = 0; i < acc.numel(); ++i) acc[i] += inv_b * grad_v[i];
            }
        }

        double sample_reg = 0.0;
        if (model.flags.use_regression) {
            const AttributeRegressionResult reg = attribute_regression(v, model.bank);
            Tensor grad_a_reg;
            sample_reg = regression_loss(reg.a_reg, table.row(sample.label),
                                         grads ? &grad_a_reg : nullptr);
            if (grads) {
                for (std::size_t k = 0; k < grad_a_reg.numel(); ++k) {
                    grad_a_reg[k] *= lambda2 * inv_b;
                }
                const std::vector<Tensor> kernel_grads =
                    attribute_regression_backward_kernels(v, model.bank, reg, grad_a_reg);
                for (std::size_t k = 0; k < kernel_grads.size(); ++k) {
                    Tensor& acc = (*grads)[1 + k];
                    for (std::size_t i = 0; i < acc.numel(); ++i) {
                        acc[i] += kernel_grads[k][i];
                    }
                }
            }
        }

        out.l_cls += sample_cls * inv_b;
        out.l_con += sample_con * inv_b;
        out.l_reg += sample_reg * inv_b;
    }

    if (!std::isfinite(out.l_cls)) throw DomainError("non-finite L_Cls in joint loss");
    if (!std::isfinite(out.l_con)) throw DomainError("non-finite L_Con in joint loss");
    if (!std::isfinite(out.l_reg)) throw DomainError("non-finite L_Reg in joint loss");
    out.total = out.l_cls + lambda1 * out.l_con + lambda2 * out.l_reg;
    return out;
}

}  // namespace rsan
