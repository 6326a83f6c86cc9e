#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rsan/dataset.hpp"
#include "rsan/errors.hpp"
#include "rsan/eval.hpp"
#include "rsan/model.hpp"
#include "rsan/rng.hpp"

// Episodic training loop: M-way / N-shot batches, SGD with momentum and
// decoupled weight decay, stepped learning-rate schedule, validation-based
// model selection.

namespace rsan {

struct TrainConfig {
    double lambda1 = 0.1;
    double lambda2 = 1.0;
    double lr = 1e-3;
    double momentum = 0.9;
    double weight_decay = 1e-5;
    double lr_decay_factor = 0.5;
    std::size_t lr_decay_epochs = 10;
    std::size_t epochs = 20;
    std::size_t batches_per_epoch = 300;
    std::size_t episode_m = 16;
    std::size_t episode_n = 2;
    std::size_t kernel_h = 1;
    std::size_t kernel_w = 1;
    KernelInitMode kernel_init_mode = KernelInitMode::kFullKernel;
    std::uint64_t seed = 0;
    AblationFlags flags;

    void validate() const {
        flags.validate();
        if (lambda1 < 0.0 || lambda2 < 0.0) throw ConfigError("lambda weights must be >= 0");
        if (!(lr > 0.0)) throw ConfigError("lr must be positive");
        if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must be in [0, 1)");
        if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
        if (!(lr_decay_factor > 0.0) || lr_decay_factor > 1.0) {
            throw ConfigError("lr_decay_factor must be in (0, 1]");
        }
        if (lr_decay_epochs == 0 || epochs == 0 || batches_per_epoch == 0) {
            throw ConfigError("schedule extents must be positive");
        }
        if (episode_m == 0 || episode_n == 0) throw ConfigError("episode shape must be positive");
        if (kernel_h == 0 || kernel_w == 0) throw ConfigError("kernel extents must be positive");
    }
};

// Learning rate for a 1-based epoch index: decays by lr_decay_factor after
// every lr_decay_epochs epochs. Repeated multiplication keeps halving exact.
inline double lr_for_epoch(const TrainConfig& cfg, std::size_t epoch) {
    double lr = cfg.lr;
    for (std::size_t k = (epoch - 1) / cfg.lr_decay_epochs; k > 0; --k) {
        lr *= cfg.lr_decay_factor;
    }
    return lr;
}

// Train-split index of the seen classes: which samples may appear in
// episodes.
struct TrainIndex {
    std::vector<ClassId> classes;                    // seen classes with >= 1 train sample
    std::vector<std::vector<std::size_t>> by_class;  // dataset indices per class

    static TrainIndex build(const Dataset& data) {
        TrainIndex idx;
        std::vector<std::vector<std::size_t>> buckets(data.table.num_classes());
        for (std::size_t i = 0; i < data.samples.size(); ++i) {
            const Sample& s = data.samples[i];
            if (s.split == Split::kTrain && data.table.is_seen(s.label)) {
                buckets[s.label].push_back(i);
            }
        }
        for (ClassId y = 0; y < data.table.num_classes(); ++y) {
            if (!buckets[y].empty()) {
                idx.classes.push_back(y);
                idx.by_class.push_back(std::move(buckets[y]));
            }
        }
        return idx;
    }
};

struct EpisodeBatch {
    std::vector<std::size_t> sample_indices;  // M*N entries, grouped by class
    std::vector<ClassId> labels;              // parallel to sample_indices
    std::vector<ClassId> classes;             // the M sampled classes
};

// M distinct classes, N samples each. Within a class, samples are drawn
// without replacement when the class is large enough, with replacement
// otherwise (small-class regimes).
inline EpisodeBatch sample_episode(const TrainIndex& index, std::size_t m, std::size_t n,
                                   Rng& rng) {
    if (index.classes.size() < m) {
        throw ConfigError("episode needs " + std::to_string(m) + " classes but only " +
                          std::to_string(index.classes.size()) + " seen classes have samples");
    }
    EpisodeBatch batch;
    const std::vector<std::size_t> class_picks =
        rng.sample_without_replacement(index.classes.size(), m);
    for (std::size_t pick : class_picks) {
        const ClassId y = index.classes[pick];
        const std::vector<std::size_t>& pool = index.by_class[pick];
        batch.classes.push_back(y);
        if (pool.size() >= n) {
            for (std::size_t j : rng.sample_without_replacement(pool.size(), n)) {
                batch.sample_indices.push_back(pool[j]);
                batch.labels.push_back(y);
            }
        } else {
            for (std::size_t i = 0; i < n; ++i) {
                batch.sample_indices.push_back(pool[rng.uniform_index(pool.size())]);
                batch.labels.push_back(y);
            }
        }
    }
    return batch;
}

// SGD with momentum; weight decay is decoupled from the gradient and applied
// as a separate lr-scaled shrink after the momentum step. Each parameter may
// carry its own step-size multiplier.
class SgdOptimizer {
public:
    SgdOptimizer(double momentum, double weight_decay, const std::vector<Tensor*>& params,
                 std::vector<double> lr_scales = {})
        : momentum_(momentum), weight_decay_(weight_decay), lr_scales_(std::move(lr_scales)) {
        velocity_.reserve(params.size());
        for (const Tensor* p : params) velocity_.emplace_back(p->shape());
        if (lr_scales_.empty()) lr_scales_.assign(params.size(), 1.0);
        if (lr_scales_.size() != params.size()) {
            throw UsageError("lr scale list does not match parameter list");
        }
    }

    void step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads, double lr) {
        if (params.size() != velocity_.size() || grads.size() != velocity_.size()) {
            throw UsageError("optimizer state does not match parameter list");
        }
        for (std::size_t i = 0; i < params.size(); ++i) {
            Tensor& p = *params[i];
            Tensor& vel = velocity_[i];
            const Tensor& g = grads[i];
            const double step_lr = lr * lr_scales_[i];
            for (std::size_t j = 0; j < p.numel(); ++j) {
                vel[j] = momentum_ * vel[j] + g[j];
                p[j] -= step_lr * vel[j];
                p[j] -= step_lr * weight_decay_ * p[j];
            }
            p.ensure_finite("sgd step");
        }
    }

private:
    double momentum_;
    double weight_decay_;
    std::vector<double> lr_scales_;
    std::vector<Tensor> velocity_;
};

struct EpochLog {
    std::size_t epoch = 0;
    double lr = 0.0;
    double l_cls = 0.0;
    double l_con = 0.0;
    double l_reg = 0.0;
    double val_t1 = 0.0;
};

struct TrainResult {
    Model best_model;
    std::size_t best_epoch = 0;
    double best_val_t1 = 0.0;
    Model final_model;
    std::vector<EpochLog> history;
    bool aborted = false;
    std::string abort_reason;
    std::string episode_rng_state;
};

// Full training run. Deterministic given (config, dataset): the init and
// episode RNG streams are forked from the config seed, every reduction is
// fixed-order, and the loop is single-threaded. A non-finite loss aborts the
// run; the model state from before the offending batch is retained.
inline TrainResult train(const TrainConfig& cfg, const Dataset& data,
                         const AttributeEmbeddings* embeddings, const ClassifierConfig& ccfg) {
    cfg.validate();
    ccfg.validate();
    data.validate();

    const TrainIndex index = TrainIndex::build(data);
    if (index.classes.size() < cfg.episode_m) {
        throw ConfigError("episode_m = " + std::to_string(cfg.episode_m) + " exceeds the " +
                          std::to_string(index.classes.size()) + " trainable seen classes");
    }

    Rng root(cfg.seed);
    Rng init_rng = root.fork(0x494e4954);  // "INIT"
    Rng episode_rng = root.fork(0x45505300);  // "EPS"

    TrainResult result;
    Model model = Model::create(cfg.flags, data.channels(), data.num_attributes(), cfg.kernel_h,
                                cfg.kernel_w, embeddings, init_rng, cfg.kernel_init_mode);

    // The pooled baseline's gradients carry the 1/(H*W) averaging factor of
    // its projection input; its step size is compensated by that factor so a
    // shared configuration trains both paths at comparable speed.
    std::vector<double> lr_scales(model.parameters().size(), 1.0);
    if (!cfg.flags.use_region_mapping) {
        lr_scales[0] = static_cast<double>(data.height() * data.width());
    }
    SgdOptimizer opt(cfg.momentum, cfg.weight_decay, model.parameters(), lr_scales);

    result.best_model = model;
    result.best_val_t1 = -1.0;

    std::vector<Tensor> grads;
    std::vector<BatchSample> batch;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const double lr = lr_for_epoch(cfg, epoch);
        EpochLog log;
        log.epoch = epoch;
        log.lr = lr;
        for (std::size_t b = 0; b < cfg.batches_per_epoch; ++b) {
            const EpisodeBatch episode =
                sample_episode(index, cfg.episode_m, cfg.episode_n, episode_rng);
            batch.clear();
            for (std::size_t i = 0; i < episode.sample_indices.size(); ++i) {
                batch.push_back(BatchSample{&data.samples[episode.sample_indices[i]].features,
                                            episode.labels[i]});
            }
            LossBreakdown losses;
            try {
                losses = joint_loss(model, batch, data.table, ccfg, cfg.lambda1, cfg.lambda2,
                                    &grads);
            } catch (const DomainError& e) {
                result.aborted = true;
                result.abort_reason = std::string(e.what()) + " (epoch " +
                                      std::to_string(epoch) + ", batch " + std::to_string(b) +
                                      ")";
                result.final_model = model;
                result.episode_rng_state = episode_rng.serialize();
                if (result.best_val_t1 < 0.0) {
                    result.best_model = model;
                    result.best_val_t1 = 0.0;
                }
                return result;
            }
            opt.step(model.parameters(), grads, lr);
            log.l_cls += losses.l_cls / static_cast<double>(cfg.batches_per_epoch);
            log.l_con += losses.l_con / static_cast<double>(cfg.batches_per_epoch);
            log.l_reg += losses.l_reg / static_cast<double>(cfg.batches_per_epoch);
        }
        log.val_t1 = evaluate_val_t1(model, data);
        result.history.push_back(log);
        if (log.val_t1 > result.best_val_t1) {
            result.best_val_t1 = log.val_t1;
            result.best_epoch = epoch;
            result.best_model = model;
        }
    }
    result.final_model = model;
    result.episode_rng_state = episode_rng.serialize();
    if (result.best_epoch == 0) {
        result.best_model = model;
        result.best_val_t1 = 0.0;
    }
    return result;
}

}  // namespace rsan
