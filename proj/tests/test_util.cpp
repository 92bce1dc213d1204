#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <filesystem>

#include "leaky/config.hpp"
#include "leaky/csv.hpp"
#include "leaky/image.hpp"
#include "leaky/png_io.hpp"
#include "leaky/rng.hpp"
#include "leaky/serialize.hpp"

using namespace leaky;

namespace {
std::string temp_dir() {
    auto dir = std::filesystem::temp_directory_path() / "leaky_util_test";
    std::filesystem::create_directories(dir);
    return dir.string();
}
}  // namespace

TEST_CASE("rng substreams are deterministic and independent") {
    Rng a = substream(42, "stage", 0);
    Rng b = substream(42, "stage", 0);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

    Rng c = substream(42, "stage", 1);
    Rng d = substream(42, "other", 0);
    CHECK(substream(42, "stage", 0).next_u64() != c.next_u64());
    CHECK(substream(42, "stage", 0).next_u64() != d.next_u64());
}

TEST_CASE("rng normal moments") {
    Rng rng(7);
    double sum = 0.0, sq = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double v = rng.normal();
        sum += v;
        sq += v * v;
    }
    CHECK(std::abs(sum / n) < 0.01);
    CHECK(std::abs(sq / n - 1.0) < 0.02);
}

TEST_CASE("uniform_index is unbiased over small ranges") {
    Rng rng(3);
    int counts[5] = {0, 0, 0, 0, 0};
    for (int i = 0; i < 50000; ++i) ++counts[rng.uniform_index(5)];
    for (int c : counts) CHECK(std::abs(c - 10000) < 500);
}

TEST_CASE("image quantize matches png round trip") {
    Image img(8, 8, 3);
    Rng rng(1);
    for (double& v : img.data) v = rng.uniform();
    quantize8(img);
    const std::string path = temp_dir() + "/roundtrip.png";
    write_png(path, img);
    const Image back = read_png(path);
    REQUIRE(back.same_shape(img));
    for (std::size_t i = 0; i < img.data.size(); ++i)
        CHECK(img.data[i] == doctest::Approx(back.data[i]).epsilon(1e-12));
}

TEST_CASE("png encode/decode in memory") {
    Image img(5, 7, 3);
    for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = (i % 17) / 16.0;
    quantize8(img);
    const Image back = decode_png(encode_png(img));
    CHECK(mse(img, back) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("bilinear resize fixed points") {
    Image img(6, 6, 1, 0.25);
    const Image same = resize_bilinear(img, 6, 6);
    CHECK(mse(img, same) == doctest::Approx(0.0));
    const Image up = resize_bilinear(img, 12, 12);
    for (double v : up.data) CHECK(v == doctest::Approx(0.25));
}

TEST_CASE("binary writer/reader round trip") {
    BinaryWriter w;
    w.u32(0xdeadbeef);
    w.u64(1234567890123ull);
    w.f64(-0.5);
    w.str("hello");
    w.doubles({1.0, 2.0, 3.0});
    BinaryReader r(w.bytes());
    CHECK(r.u32() == 0xdeadbeef);
    CHECK(r.u64() == 1234567890123ull);
    CHECK(r.f64() == -0.5);
    CHECK(r.str() == "hello");
    CHECK(r.doubles() == std::vector<double>{1.0, 2.0, 3.0});
    CHECK(r.at_end());
}

TEST_CASE("table csv output is stable and carries the schema comment") {
    Table t;
    t.schema = "test.v1";
    t.header = {"a", "b"};
    t.add_row({"1", fmt_double(0.5)});
    t.add_row({"x,y", "with \"quote\""});
    const std::string csv = t.to_csv();
    CHECK(csv.rfind("# schema=test.v1\n", 0) == 0);
    CHECK(csv.find("\"x,y\"") != std::string::npos);
    CHECK(csv == t.to_csv());

    const std::string path = temp_dir() + "/table.csv";
    t.write(path);
    const Table back = read_table(path);
    CHECK(back.schema == t.schema);
    CHECK(back.header == t.header);
    CHECK(back.rows == t.rows);
}

TEST_CASE("config parsing, precedence, and unknown key rejection") {
    ConfigMap map = ConfigMap::parse_text("seed = 9\ninvert.epochs = 5\n# comment\n");
    map.set("invert.epochs", "7");  // override wins
    const ExperimentConfig cfg = ExperimentConfig::from_map(map);
    CHECK(cfg.seed == 9);
    CHECK(cfg.invert.epochs == 7);

    ConfigMap bad = ConfigMap::parse_text("no.such.key = 1\n");
    CHECK_THROWS_AS((void)ExperimentConfig::from_map(bad), Error);
}

TEST_CASE("effective config serializes every field and hashes stably") {
    const ExperimentConfig a;
    const ExperimentConfig b;
    CHECK(a.to_text() == b.to_text());
    CHECK(a.config_hash() == b.config_hash());
    const auto map = ConfigMap::parse_text(a.to_text());
    const auto back = ExperimentConfig::from_map(map);
    CHECK(back.to_text() == a.to_text());
}
