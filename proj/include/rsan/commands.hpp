#pragma once

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "rsan/bench.hpp"
#include "rsan/config.hpp"
#include "rsan/errors.hpp"
#include "rsan/eval.hpp"
#include "rsan/export.hpp"
#include "rsan/io.hpp"
#include "rsan/trainer.hpp"

// Subcommand implementations. The CLI binary only parses argv and dispatches
// here; tests drive these functions directly.

namespace rsan::commands {

struct CommandOptions {
    std::string config_path;
    std::optional<std::uint64_t> seed_override;
    std::optional<std::string> out_override;
    std::ostream* log = &std::cout;
};

namespace detail {

inline KeyValueConfig load_config(const CommandOptions& opts) {
    KeyValueConfig cfg = KeyValueConfig::parse_file(opts.config_path);
    if (opts.seed_override) cfg.set("seed", std::to_string(*opts.seed_override));
    if (opts.out_override) cfg.set("out_dir", *opts.out_override);
    return cfg;
}

inline std::filesystem::path prepare_out_dir(KeyValueConfig& cfg) {
    const std::filesystem::path dir = cfg.get_string("out_dir", ".");
    std::filesystem::create_directories(dir);
    return dir;
}

inline bench::SignatureMode parse_signature_mode(const std::string& text) {
    if (text == "random_orthonormal") return bench::SignatureMode::kRandomOrthonormal;
    if (text == "axis_aligned") return bench::SignatureMode::kAxisAligned;
    if (text == "random_unit") return bench::SignatureMode::kRandomUnit;
    throw ConfigError("unknown signature_mode '" + text + "'");
}

inline bench::BenchSpec read_bench_spec(KeyValueConfig& cfg) {
    bench::BenchSpec spec;
    spec.name = cfg.get_string("name", spec.name);
    spec.channels = cfg.get_size("channels", spec.channels);
    spec.height = cfg.get_size("height", spec.height);
    spec.width = cfg.get_size("width", spec.width);
    spec.num_attributes = cfg.get_size("num_attributes", spec.num_attributes);
    spec.num_seen = cfg.get_size("num_seen", spec.num_seen);
    spec.num_unseen = cfg.get_size("num_unseen", spec.num_unseen);
    spec.samples_per_class = cfg.get_size("samples_per_class", spec.samples_per_class);
    spec.noise_sigma = cfg.get_double("noise_sigma", spec.noise_sigma);
    spec.embedding_dim = cfg.get_size("embedding_dim", spec.embedding_dim);
    spec.seed = cfg.get_u64("seed", spec.seed);
    spec.signature_mode =
        parse_signature_mode(cfg.get_string("signature_mode", "random_orthonormal"));
    spec.min_active = cfg.get_size("min_active", spec.min_active);
    spec.max_active = cfg.get_size("max_active", spec.max_active);
    spec.strength_min = cfg.get_double("strength_min", spec.strength_min);
    spec.strength_max = cfg.get_double("strength_max", spec.strength_max);
    spec.class_scale_min = cfg.get_double("class_scale_min", spec.class_scale_min);
    spec.class_scale_max = cfg.get_double("class_scale_max", spec.class_scale_max);
    spec.embedding_noise = cfg.get_double("embedding_noise", spec.embedding_noise);
    return spec;
}

inline AblationFlags read_flags(KeyValueConfig& cfg) {
    AblationFlags f;
    f.use_region_mapping = cfg.get_bool("use_region_mapping", f.use_region_mapping);
    f.use_concentrate = cfg.get_bool("use_concentrate", f.use_concentrate);
    f.use_cosine_embedding = cfg.get_bool("use_cosine_embedding", f.use_cosine_embedding);
    f.use_regression = cfg.get_bool("use_regression", f.use_regression);
    f.use_semantic_init = cfg.get_bool("use_semantic_init", f.use_semantic_init);
    return f;
}

inline TrainConfig read_train_config(KeyValueConfig& cfg) {
    TrainConfig tc;
    tc.lambda1 = cfg.get_double("lambda1", tc.lambda1);
    tc.lambda2 = cfg.get_double("lambda2", tc.lambda2);
    tc.lr = cfg.get_double("lr", tc.lr);
    tc.momentum = cfg.get_double("momentum", tc.momentum);
    tc.weight_decay = cfg.get_double("weight_decay", tc.weight_decay);
    tc.lr_decay_factor = cfg.get_double("lr_decay_factor", tc.lr_decay_factor);
    tc.lr_decay_epochs = cfg.get_size("lr_decay_epochs", tc.lr_decay_epochs);
    tc.epochs = cfg.get_size("epochs", tc.epochs);
    tc.batches_per_epoch = cfg.get_size("batches_per_epoch", tc.batches_per_epoch);
    tc.episode_m = cfg.get_size("episode_m", tc.episode_m);
    tc.episode_n = cfg.get_size("episode_n", tc.episode_n);
    tc.kernel_h = cfg.get_size("kernel_h", tc.kernel_h);
    tc.kernel_w = cfg.get_size("kernel_w", tc.kernel_w);
    const std::string init_mode = cfg.get_string("kernel_init_mode", "full");
    if (init_mode == "full") {
        tc.kernel_init_mode = KernelInitMode::kFullKernel;
    } else if (init_mode == "broadcast") {
        tc.kernel_init_mode = KernelInitMode::kBroadcastSpatial;
    } else {
        throw ConfigError("kernel_init_mode must be 'full' or 'broadcast'");
    }
    tc.seed = cfg.get_u64("seed", tc.seed);
    tc.flags = read_flags(cfg);
    return tc;
}

inline ClassifierConfig read_classifier_config(KeyValueConfig& cfg) {
    ClassifierConfig cc;
    cc.tau_s = cfg.get_double("tau_s", cc.tau_s);
    cc.sigma_scale = cfg.get_double("sigma_scale", cc.sigma_scale);
    cc.gamma = cfg.get_double("gamma", cc.gamma);
    return cc;
}

// Train + save a checkpoint and its logs under out_dir with a name prefix.
inline io::Checkpoint run_training(const TrainConfig& tc, const ClassifierConfig& cc,
                                   const Dataset& data, const AttributeEmbeddings* emb,
                                   const KeyValueConfig& cfg,
                                   const std::filesystem::path& out_dir,
                                   const std::string& prefix, std::ostream& log) {
    const TrainResult result = train(tc, data, emb, cc);
    io::Checkpoint ckpt;
    ckpt.model = result.best_model;
    ckpt.seed = tc.seed;
    ckpt.config_hash = cfg.hash();
    ckpt.config_echo = cfg.echo();
    ckpt.rng_state = result.episode_rng_state;
    const std::filesystem::path ckpt_path = out_dir / (prefix + "checkpoint.rsanckpt");
    io::save_checkpoint(ckpt_path.string(), ckpt);
    exporter::write_training_log((out_dir / (prefix + "train_log.csv")).string(),
                                 result.history);
    log << "wrote " << ckpt_path.string() << " (best epoch " << result.best_epoch
        << ", val_T1 " << result.best_val_t1 << ")\n";
    if (result.aborted) {
        throw DomainError("training aborted: " + result.abort_reason +
                          "; last-good checkpoint retained at " + ckpt_path.string());
    }
    return ckpt;
}

inline std::vector<std::size_t> parse_id_list(const std::string& csv, const char* what) {
    std::vector<std::size_t> out;
    std::istringstream in(csv);
    std::string item;
    while (std::getline(in, item, ',')) {
        if (item.empty()) continue;
        try {
            out.push_back(static_cast<std::size_t>(std::stoull(item)));
        } catch (const std::exception&) {
            throw ConfigError(std::string(what) + " list entry '" + item +
                              "' is not an integer");
        }
    }
    if (out.empty()) throw ConfigError(std::string(what) + " list is empty");
    return out;
}

}  // namespace detail

// generate: build the planted benchmark and write dataset + embedding files.
inline void cmd_generate(const CommandOptions& opts) {
    KeyValueConfig cfg = detail::load_config(opts);
    const std::filesystem::path out_dir = detail::prepare_out_dir(cfg);
    const bench::BenchSpec spec = detail::read_bench_spec(cfg);
    cfg.reject_unknown_keys();

    const bench::GeneratedBenchmark gen = bench::generate(spec);
    const std::filesystem::path data_path = out_dir / (spec.name + ".rsanfeat");
    const std::filesystem::path emb_path = out_dir / (spec.name + ".embeddings.tsv");
    io::save_dataset(data_path.string(), gen.dataset, cfg.hash());
    io::save_embeddings_text(emb_path.string(), gen.embeddings);
    exporter::write_text_file((out_dir / "config_echo.txt").string(), cfg.echo());

    *opts.log << "wrote " << data_path.string() << " (" << gen.dataset.samples.size()
              << " samples, " << gen.dataset.table.num_classes() << " classes)\n"
              << "wrote " << emb_path.string() << "\n";
}

// train: fit a model on a dataset and save the best-validation checkpoint.
inline void cmd_train(const CommandOptions& opts) {
    KeyValueConfig cfg = detail::load_config(opts);
    const std::filesystem::path out_dir = detail::prepare_out_dir(cfg);
    const std::string data_path = cfg.require_string("dataset");
    const std::string emb_path = cfg.get_string("embeddings", "");
    const TrainConfig tc = detail::read_train_config(cfg);
    const ClassifierConfig cc = detail::read_classifier_config(cfg);
    cfg.reject_unknown_keys();

    const Dataset data = io::load_dataset(data_path).dataset;
    AttributeEmbeddings emb;
    const bool have_emb = !emb_path.empty();
    if (have_emb) emb = io::load_embeddings_text(emb_path);
    if (tc.flags.use_semantic_init && !have_emb) {
        throw ConfigError("use_semantic_init=true requires an 'embeddings' file");
    }

    exporter::write_text_file((out_dir / "config_echo.txt").string(), cfg.echo());
    detail::run_training(tc, cc, data, have_emb ? &emb : nullptr, cfg, out_dir, "",
                         *opts.log);
}

// eval: score a checkpoint on a dataset split and append a metrics record.
inline void cmd_eval(const CommandOptions& opts) {
    KeyValueConfig cfg = detail::load_config(opts);
    const std::filesystem::path out_dir = detail::prepare_out_dir(cfg);
    const std::string ckpt_path = cfg.require_string("checkpoint");
    const std::string data_path = cfg.require_string("dataset");
    const std::string mode = cfg.get_string("mode", "zsl");
    const std::string split_name_str = cfg.get_string("split", "test");
    const std::string results_name = cfg.get_string("results", "metrics.csv");
    const bool write_confusion = cfg.get_bool("write_confusion", true);
    const ClassifierConfig cc = detail::read_classifier_config(cfg);
    cfg.reject_unknown_keys();
    cc.validate();

    Split split = Split::kTest;
    if (split_name_str == "train") split = Split::kTrain;
    else if (split_name_str == "val") split = Split::kVal;
    else if (split_name_str != "test") throw ConfigError("split must be train/val/test");

    const io::Checkpoint ckpt = io::load_checkpoint(ckpt_path);
    const Dataset data = io::load_dataset(data_path).dataset;

    GzslMetrics metrics;
    if (mode == "zsl") {
        metrics = evaluate_zsl(ckpt.model, data, split);
    } else if (mode == "gzsl") {
        metrics = evaluate_gzsl(ckpt.model, data, split, cc);
    } else {
        throw ConfigError("mode must be 'zsl' or 'gzsl'");
    }

    const std::string line =
        exporter::metrics_csv_line(data.name, mode + ":" + split_name_str, metrics, cc.gamma,
                                   cc.tau_s, ckpt.seed, cfg.hash());
    exporter::append_metrics_line((out_dir / results_name).string(), line);
    exporter::write_text_file((out_dir / "config_echo.txt").string(), cfg.echo());
    *opts.log << line << "\n";

    if (mode == "gzsl" && write_confusion) {
        std::vector<ClassId> predictions, truths;
        for (const Sample& s : data.samples) {
            if (s.split != split) continue;
            predictions.push_back(
                gzsl_predict(ckpt.model.predict_attributes(s.features), data.table, cc));
            truths.push_back(s.label);
        }
        std::map<ClassId, std::vector<ClassId>> similar;
        for (ClassId u : data.table.unseen_ids()) {
            similar[u] = bench::similar_seen_classes(data.table, u, 3);
        }
        const auto rows = bench::confusion_breakdown(predictions, truths, data.table, similar);
        std::ostringstream os;
        os.precision(10);
        os << "unseen_class,samples,self,similar_1,similar_1_frac,similar_2,similar_2_frac,"
              "similar_3,similar_3_frac,other\n";
        for (const auto& row : rows) {
            os << row.unseen_class << ',' << row.sample_count << ',' << row.self_fraction;
            for (const auto& [cls, frac] : row.similar_fractions) {
                os << ',' << cls << ',' << frac;
            }
            os << ',' << row.other_fraction << '\n';
        }
        exporter::write_text_file((out_dir / "confusion.csv").string(), os.str());
    }
}

// ablate: cumulative component study, Baseline through the full model. Each
// row's config echo differs from the previous one in exactly one flag.
inline void cmd_ablate(const CommandOptions& opts) {
    KeyValueConfig cfg = detail::load_config(opts);
    const std::filesystem::path out_dir = detail::prepare_out_dir(cfg);
    const std::string data_path = cfg.require_string("dataset");
    const std::string emb_path = cfg.require_string("embeddings");
    TrainConfig base_tc = detail::read_train_config(cfg);
    const ClassifierConfig cc = detail::read_classifier_config(cfg);
    cfg.reject_unknown_keys();

    const Dataset data = io::load_dataset(data_path).dataset;
    const AttributeEmbeddings emb = io::load_embeddings_text(emb_path);

    struct Row {
        const char* label;
        AblationFlags flags;
    };
    const std::vector<Row> rows = {
        {"baseline", {false, false, false, false, false}},
        {"+rm", {true, false, false, false, false}},
        {"+l_con", {true, true, false, false, false}},
        {"+ce", {true, true, true, false, false}},
        {"+l_reg", {true, true, true, true, false}},
        {"+semantic_init", {true, true, true, true, true}},
    };

    std::ostringstream table;
    table.precision(10);
    table << "row,label,use_region_mapping,use_concentrate,use_cosine_embedding,"
             "use_regression,use_semantic_init,zsl_T1,gzsl_S,gzsl_U,gzsl_H,final_l_reg\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
        TrainConfig tc = base_tc;
        tc.flags = rows[i].flags;

        KeyValueConfig row_cfg = cfg;
        row_cfg.set("use_region_mapping", tc.flags.use_region_mapping ? "true" : "false");
        row_cfg.set("use_concentrate", tc.flags.use_concentrate ? "true" : "false");
        row_cfg.set("use_cosine_embedding", tc.flags.use_cosine_embedding ? "true" : "false");
        row_cfg.set("use_regression", tc.flags.use_regression ? "true" : "false");
        row_cfg.set("use_semantic_init", tc.flags.use_semantic_init ? "true" : "false");
        exporter::write_text_file((out_dir / ("row" + std::to_string(i) + "_config.txt")).string(),
                                  row_cfg.echo());

        const TrainResult result = train(tc, data, &emb, cc);
        const GzslMetrics zsl = evaluate_zsl(result.best_model, data, Split::kTest);
        const GzslMetrics gzsl = evaluate_gzsl(result.best_model, data, Split::kTest, cc);
        const double final_l_reg = result.history.empty() ? 0.0 : result.history.back().l_reg;

        table << i << ',' << rows[i].label << ',' << tc.flags.use_region_mapping << ','
              << tc.flags.use_concentrate << ',' << tc.flags.use_cosine_embedding << ','
              << tc.flags.use_regression << ',' << tc.flags.use_semantic_init << ','
              << zsl.top1 << ',' << gzsl.seen_acc << ',' << gzsl.unseen_acc << ','
              << gzsl.harmonic << ',' << final_l_reg << '\n';
        *opts.log << "ablate row " << i << " (" << rows[i].label << "): zsl_T1 = " << zsl.top1
                  << ", gzsl_H = " << gzsl.harmonic << "\n";
    }
    exporter::write_text_file((out_dir / "ablate.csv").string(), table.str());
    exporter::write_text_file((out_dir / "config_echo.txt").string(), cfg.echo());
}

// sweep: metric as a function of one axis (kernel_size, episode_shape or
// gamma).
inline void cmd_sweep(const CommandOptions& opts) {
    KeyValueConfig cfg = detail::load_config(opts);
    const std::filesystem::path out_dir = detail::prepare_out_dir(cfg);
    const std::string axis = cfg.require_string("axis");
    const std::string data_path = cfg.require_string("dataset");
    const std::string emb_path = cfg.get_string("embeddings", "");
    TrainConfig base_tc = detail::read_train_config(cfg);
    const ClassifierConfig base_cc = detail::read_classifier_config(cfg);

    const Dataset data = io::load_dataset(data_path).dataset;
    AttributeEmbeddings emb;
    const bool have_emb = !emb_path.empty();
    if (have_emb) emb = io::load_embeddings_text(emb_path);
    if (base_tc.flags.use_semantic_init && !have_emb) {
        throw ConfigError("use_semantic_init=true requires an 'embeddings' file");
    }
    const AttributeEmbeddings* emb_ptr = have_emb ? &emb : nullptr;

    std::ostringstream table;
    table.precision(10);
    if (axis == "kernel_size") {
        const std::vector<double> sizes = cfg.get_double_list("kernel_sizes", "1,3,5,7");
        cfg.reject_unknown_keys();
        table << "kernel_size,zsl_T1,gzsl_S,gzsl_U,gzsl_H\n";
        for (double sz : sizes) {
            TrainConfig tc = base_tc;
            tc.kernel_h = tc.kernel_w = static_cast<std::size_t>(sz);
            const TrainResult result = train(tc, data, emb_ptr, base_cc);
            const GzslMetrics zsl = evaluate_zsl(result.best_model, data, Split::kTest);
            const GzslMetrics gzsl = evaluate_gzsl(result.best_model, data, Split::kTest, base_cc);
            table << tc.kernel_h << ',' << zsl.top1 << ',' << gzsl.seen_acc << ','
                  << gzsl.unseen_acc << ',' << gzsl.harmonic << '\n';
            *opts.log << "sweep kernel_size " << tc.kernel_h << ": zsl_T1 = " << zsl.top1 << "\n";
        }
    } else if (axis == "episode_shape") {
        const std::vector<double> ms = cfg.get_double_list("m_values", "8,12,16");
        const std::vector<double> ns = cfg.get_double_list("n_values", "2,3,4");
        cfg.reject_unknown_keys();
        table << "episode_m,episode_n,zsl_T1,gzsl_S,gzsl_U,gzsl_H\n";
        for (double m : ms) {
            for (double n : ns) {
                TrainConfig tc = base_tc;
                tc.episode_m = static_cast<std::size_t>(m);
                tc.episode_n = static_cast<std::size_t>(n);
                const TrainResult result = train(tc, data, emb_ptr, base_cc);
                const GzslMetrics zsl = evaluate_zsl(result.best_model, data, Split::kTest);
                const GzslMetrics gzsl =
                    evaluate_gzsl(result.best_model, data, Split::kTest, base_cc);
                table << tc.episode_m << ',' << tc.episode_n << ',' << zsl.top1 << ','
                      << gzsl.seen_acc << ',' << gzsl.unseen_acc << ',' << gzsl.harmonic << '\n';
                *opts.log << "sweep episode " << tc.episode_m << "x" << tc.episode_n
                          << ": zsl_T1 = " << zsl.top1 << "\n";
            }
        }
    } else if (axis == "gamma") {
        const std::vector<double> gammas =
            cfg.get_double_list("gamma_values", "0,0.1,0.2,0.35,0.5,0.7,1.0,1.4");
        cfg.reject_unknown_keys();
        const TrainResult result = train(base_tc, data, emb_ptr, base_cc);
        table << "gamma,gzsl_S,gzsl_U,gzsl_H,seen_prediction_count\n";
        for (double g : gammas) {
            ClassifierConfig cc = base_cc;
            cc.gamma = g;
            const GzslMetrics m = evaluate_gzsl(result.best_model, data, Split::kTest, cc);
            const std::size_t seen_count =
                count_seen_predictions(result.best_model, data, Split::kTest, cc);
            table << g << ',' << m.seen_acc << ',' << m.unseen_acc << ',' << m.harmonic << ','
                  << seen_count << '\n';
            *opts.log << "sweep gamma " << g << ": H = " << m.harmonic << "\n";
        }
    } else {
        throw ConfigError("axis must be kernel_size, episode_shape or gamma");
    }
    exporter::write_text_file((out_dir / ("sweep_" + axis + ".csv")).string(), table.str());
    exporter::write_text_file((out_dir / "config_echo.txt").string(), cfg.echo());
}

// visualize: export per-attribute saliency planes for chosen samples.
inline void cmd_visualize(const CommandOptions& opts) {
    KeyValueConfig cfg = detail::load_config(opts);
    const std::filesystem::path out_dir = detail::prepare_out_dir(cfg);
    const std::string ckpt_path = cfg.require_string("checkpoint");
    const std::string data_path = cfg.require_string("dataset");
    const std::vector<std::size_t> sample_ids =
        detail::parse_id_list(cfg.require_string("sample_ids"), "sample_ids");
    const std::string attr_csv = cfg.get_string("attribute_ids", "");
    cfg.reject_unknown_keys();

    const io::Checkpoint ckpt = io::load_checkpoint(ckpt_path);
    if (!ckpt.model.flags.use_region_mapping) {
        throw UsageError("visualize needs a region-mapping checkpoint (baseline models have "
                         "no saliency map)");
    }
    const Dataset data = io::load_dataset(data_path).dataset;

    std::vector<std::size_t> attr_ids;
    if (attr_csv.empty()) {
        for (std::size_t k = 0; k < data.num_attributes(); ++k) attr_ids.push_back(k);
    } else {
        attr_ids = detail::parse_id_list(attr_csv, "attribute_ids");
    }

    for (std::size_t sid : sample_ids) {
        if (sid >= data.samples.size()) {
            throw UsageError("sample id " + std::to_string(sid) + " outside dataset of " +
                             std::to_string(data.samples.size()) + " samples");
        }
        const SaliencyResult sal = saliency(data.samples[sid].features, ckpt.model.projection);
        for (std::size_t aid : attr_ids) {
            if (aid >= sal.map.extent(0)) {
                throw UsageError("attribute id " + std::to_string(aid) +
                                 " outside saliency map with " +
                                 std::to_string(sal.map.extent(0)) + " attributes");
            }
            const std::string stem =
                "saliency_s" + std::to_string(sid) + "_a" + std::to_string(aid);
            exporter::write_saliency_csv((out_dir / (stem + ".csv")).string(), sal.map, aid);
            exporter::write_saliency_pgm((out_dir / (stem + ".pgm")).string(), sal.map, aid);
        }
        *opts.log << "sample " << sid << ": exported " << attr_ids.size()
                  << " attribute planes\n";
    }
    exporter::write_text_file((out_dir / "config_echo.txt").string(), cfg.echo());
}

}  // namespace rsan::commands
