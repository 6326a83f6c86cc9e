#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "rsan/bench.hpp"
#include "rsan/config.hpp"
#include "rsan/export.hpp"
#include "rsan/io.hpp"
#include "rsan/rng.hpp"
#include "test_support.hpp"

using namespace rsan;

namespace {

std::filesystem::path temp_dir() {
    const auto dir = std::filesystem::temp_directory_path() / "rsan_io_test";
    std::filesystem::create_directories(dir);
    return dir;
}

std::string read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

bench::GeneratedBenchmark small_benchmark(std::uint64_t seed) {
    bench::BenchSpec spec;
    spec.channels = 8;
    spec.height = 5;
    spec.width = 5;
    spec.num_attributes = 6;
    spec.num_seen = 4;
    spec.num_unseen = 2;
    spec.samples_per_class = 6;
    spec.embedding_dim = 5;
    spec.seed = seed;
    return bench::generate(spec);
}

}  // namespace

TEST_CASE("dataset files round-trip through RSANFEAT") {
    const auto dir = temp_dir();
    const bench::GeneratedBenchmark gen = small_benchmark(7);
    const std::string path = (dir / "roundtrip.rsanfeat").string();
    io::save_dataset(path, gen.dataset, 0xABCDEF);

    const io::LoadedDataset loaded = io::load_dataset(path);
    CHECK(loaded.config_hash == 0xABCDEF);
    CHECK(loaded.dataset.seed == gen.dataset.seed);
    CHECK(loaded.dataset.name == gen.dataset.name);
    CHECK(loaded.dataset.table.attributes == gen.dataset.table.attributes);
    CHECK(loaded.dataset.table.seen == gen.dataset.table.seen);
    REQUIRE(loaded.dataset.samples.size() == gen.dataset.samples.size());
    for (std::size_t i = 0; i < gen.dataset.samples.size(); ++i) {
        const Sample& a = gen.dataset.samples[i];
        const Sample& b = loaded.dataset.samples[i];
        CHECK(a.label == b.label);
        CHECK(a.split == b.split);
        CHECK(a.plant_active == b.plant_active);
        for (std::size_t k = 0; k < a.plants.size(); ++k) {
            CHECK(a.plants[k] == b.plants[k]);
        }
        // Feature payloads are 32-bit on disk: loading equals a f32 round trip.
        const TensorF as_f32 = a.features.cast<float>();
        for (std::size_t j = 0; j < a.features.numel(); ++j) {
            CHECK(b.features[j] == static_cast<double>(as_f32[j]));
        }
    }
}

TEST_CASE("dataset writes are byte-identical for the same content") {
    const auto dir = temp_dir();
    const bench::GeneratedBenchmark gen = small_benchmark(8);
    const std::string p1 = (dir / "bytes_a.rsanfeat").string();
    const std::string p2 = (dir / "bytes_b.rsanfeat").string();
    io::save_dataset(p1, gen.dataset, 1);
    io::save_dataset(p2, gen.dataset, 1);
    CHECK(read_bytes(p1) == read_bytes(p2));
}

TEST_CASE("wrong magic is reported with offset and expected value") {
    const auto dir = temp_dir();
    const std::string path = (dir / "bad_magic.rsanfeat").string();
    std::ofstream(path, std::ios::binary) << "NOTMAGIC overwritten content";
    try {
        io::load_dataset(path);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("RSANFEAT") != std::string::npos);
        CHECK(msg.find("byte offset 0") != std::string::npos);
    }
}

TEST_CASE("truncated files report the failing byte offset") {
    const auto dir = temp_dir();
    const bench::GeneratedBenchmark gen = small_benchmark(9);
    const std::string full_path = (dir / "full.rsanfeat").string();
    io::save_dataset(full_path, gen.dataset, 2);
    const std::string bytes = read_bytes(full_path);
    const std::string cut_path = (dir / "cut.rsanfeat").string();
    std::ofstream(cut_path, std::ios::binary) << bytes.substr(0, 64);
    try {
        io::load_dataset(cut_path);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("byte offset") != std::string::npos);
    }
}

TEST_CASE("checkpoints round-trip bit-exactly") {
    const auto dir = temp_dir();
    Rng rng(10);
    AttributeEmbeddings emb;
    emb.rows = test_support::random_tensor({6, 5}, rng);
    Model model = Model::create(AblationFlags{}, 8, 6, 2, 2, &emb, rng);

    io::Checkpoint ckpt;
    ckpt.model = model;
    ckpt.seed = 77;
    ckpt.config_hash = 0x1234;
    ckpt.config_echo = "alpha=1\nbeta=two\n";
    ckpt.rng_state = Rng(5).serialize();
    const std::string path = (dir / "model.rsanckpt").string();
    io::save_checkpoint(path, ckpt);

    const io::Checkpoint loaded = io::load_checkpoint(path);
    CHECK(loaded.seed == 77);
    CHECK(loaded.config_hash == 0x1234);
    CHECK(loaded.config_echo == ckpt.config_echo);
    CHECK(loaded.rng_state == ckpt.rng_state);
    CHECK(loaded.model.flags.use_region_mapping == model.flags.use_region_mapping);
    CHECK(loaded.model.projection == model.projection);
    REQUIRE(loaded.model.bank.kernels.size() == model.bank.kernels.size());
    for (std::size_t k = 0; k < model.bank.kernels.size(); ++k) {
        CHECK(loaded.model.bank.kernels[k] == model.bank.kernels[k]);
    }

    // Baseline checkpoints carry the pooled projection instead.
    AblationFlags baseline;
    baseline.use_region_mapping = false;
    baseline.use_concentrate = false;
    baseline.use_cosine_embedding = false;
    baseline.use_regression = false;
    baseline.use_semantic_init = false;
    io::Checkpoint b;
    b.model = Model::create(baseline, 4, 3, 1, 1, nullptr, rng);
    const std::string bpath = (dir / "baseline.rsanckpt").string();
    io::save_checkpoint(bpath, b);
    const io::Checkpoint loaded_b = io::load_checkpoint(bpath);
    CHECK_FALSE(loaded_b.model.flags.use_region_mapping);
    CHECK(loaded_b.model.pooled_projection == b.model.pooled_projection);
}

TEST_CASE("checkpoint loader rejects the wrong magic") {
    const auto dir = temp_dir();
    const bench::GeneratedBenchmark gen = small_benchmark(11);
    const std::string path = (dir / "dataset_not_ckpt.rsanfeat").string();
    io::save_dataset(path, gen.dataset, 3);
    try {
        io::load_checkpoint(path);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("RSANCKPT") != std::string::npos);
    }
}

TEST_CASE("embedding text files round-trip exactly") {
    const auto dir = temp_dir();
    const bench::GeneratedBenchmark gen = small_benchmark(12);
    const std::string path = (dir / "emb.tsv").string();
    io::save_embeddings_text(path, gen.embeddings);
    const AttributeEmbeddings loaded = io::load_embeddings_text(path);
    CHECK(loaded.rows == gen.embeddings.rows);
}

TEST_CASE("embedding parser reports malformed lines") {
    const auto dir = temp_dir();
    const std::string path = (dir / "bad.tsv").string();

    std::ofstream(path) << "0\t1.0 2.0\n1 3.0 4.0\n";  // missing tab on line 2
    CHECK_THROWS_AS(io::load_embeddings_text(path), DataError);

    std::ofstream(path) << "0\t1.0 2.0\n2\t3.0 4.0\n";  // non-dense ids
    CHECK_THROWS_AS(io::load_embeddings_text(path), DataError);

    std::ofstream(path) << "0\t1.0 2.0\n1\t3.0\n";  // ragged dimensions
    CHECK_THROWS_AS(io::load_embeddings_text(path), DataError);

    std::ofstream(path) << "";
    CHECK_THROWS_AS(io::load_embeddings_text(path), DataError);
}

TEST_CASE("key=value configs parse, echo canonically and reject typos") {
    const std::string text =
        "# a comment\n"
        "zeta = 3\n"
        "alpha=hello   # trailing comment\n"
        "\n"
        "beta_flag = true\n";
    KeyValueConfig cfg = KeyValueConfig::parse_string(text, "<test>");
    CHECK(cfg.get_string("alpha", "") == "hello");
    CHECK(cfg.get_bool("beta_flag", false));
    CHECK(cfg.get_u64("zeta", 0) == 3);
    CHECK_NOTHROW(cfg.reject_unknown_keys());

    // Echo is sorted and stable; the hash keys artifacts.
    CHECK(cfg.echo() == "alpha=hello\nbeta_flag=true\nzeta=3\n");
    CHECK(cfg.hash() == KeyValueConfig::parse_string(cfg.echo(), "<again>").hash());

    KeyValueConfig cfg2 = KeyValueConfig::parse_string("known=1\ntypo_key=2\n", "<test2>");
    cfg2.get_u64("known", 0);
    CHECK_THROWS_AS(cfg2.reject_unknown_keys(), ConfigError);

    CHECK_THROWS_AS(KeyValueConfig::parse_string("a=1\na=2\n", "<dup>"), ConfigError);
    CHECK_THROWS_AS(KeyValueConfig::parse_string("justnoise\n", "<junk>"), ConfigError);

    KeyValueConfig bad_num = KeyValueConfig::parse_string("x=12abc\n", "<num>");
    CHECK_THROWS_AS(bad_num.get_double("x", 0.0), ConfigError);

    KeyValueConfig lists = KeyValueConfig::parse_string("gammas=0,0.5, 1.0\n", "<list>");
    const std::vector<double> gs = lists.get_double_list("gammas", "");
    REQUIRE(gs.size() == 3);
    CHECK(gs[1] == 0.5);
}

TEST_CASE("saliency CSV and PGM exports") {
    const auto dir = temp_dir();
    Tensor map({2, 2, 3}, {0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0});

    const std::string csv_path = (dir / "plane.csv").string();
    exporter::write_saliency_csv(csv_path, map, 0);
    std::ifstream csv(csv_path);
    std::string line1, line2;
    std::getline(csv, line1);
    std::getline(csv, line2);
    CHECK(line1 == "0,1,2");
    CHECK(line2 == "3,4,5");

    // Min-max normalization: 0..5 -> 0..255 with rounding.
    const std::string pgm_path = (dir / "plane.pgm").string();
    exporter::write_saliency_pgm(pgm_path, map, 0);
    const std::string pgm = read_bytes(pgm_path);
    const std::string header = "P5\n3 2\n255\n";
    REQUIRE(pgm.substr(0, header.size()) == header);
    const auto* px = reinterpret_cast<const unsigned char*>(pgm.data() + header.size());
    CHECK(px[0] == 0);
    CHECK(px[1] == 51);
    CHECK(px[5] == 255);

    // A constant plane normalizes to all zeros.
    const std::string flat_path = (dir / "flat.pgm").string();
    exporter::write_saliency_pgm(flat_path, map, 1);
    const std::string flat = read_bytes(flat_path);
    for (std::size_t i = header.size(); i < flat.size(); ++i) CHECK(flat[i] == '\0');
}

TEST_CASE("metrics lines append under a single header") {
    const auto dir = temp_dir();
    const std::string path = (dir / "metrics.csv").string();
    std::filesystem::remove(path);
    GzslMetrics m;
    m.top1 = 0.5;
    m.seen_acc = 0.25;
    m.unseen_acc = 0.75;
    m.harmonic = 0.375;
    const std::string line =
        exporter::metrics_csv_line("planted", "zsl:test", m, 0.7, 0.04, 42, 0xFF);
    exporter::append_metrics_line(path, line);
    exporter::append_metrics_line(path, line);

    std::ifstream in(path);
    std::string l0, l1, l2;
    std::getline(in, l0);
    std::getline(in, l1);
    std::getline(in, l2);
    CHECK(l0 == exporter::kMetricsHeader);
    CHECK(l1 == l2);
    CHECK(l1.find("planted,zsl:test,0.5,0.25,0.75,0.375,0.7,0.04,42,255") == 0);
}

TEST_CASE("rng state serialization round-trips the stream") {
    Rng a(99);
    a.next_u64();
    a.normal();
    const std::string state = a.serialize();
    Rng b(1);
    b.deserialize(state);
    for (int i = 0; i < 16; ++i) CHECK(a.next_u64() == b.next_u64());
    Rng c(2);
    CHECK_THROWS_AS(c.deserialize("not a state"), DataError);
}
