#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "leaky/align.hpp"
#include "leaky/nn.hpp"
#include "leaky/rng.hpp"

using namespace leaky;
using namespace leaky::align;

namespace {

std::vector<std::vector<double>> random_rows(int n, int d, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::vector<double>> rows(n, std::vector<double>(d));
    for (auto& r : rows)
        for (double& v : r) v = rng.normal();
    return rows;
}

// u_I = u_T * M for a planted matrix
std::vector<std::vector<double>> map_rows(const std::vector<std::vector<double>>& rows,
                                          const std::vector<double>& m, int d) {
    std::vector<std::vector<double>> out(rows.size(), std::vector<double>(d, 0.0));
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) out[r][j] += rows[r][i] * m[i * d + j];
    return out;
}

PairGraph random_graph(int m, int n, std::uint64_t seed) {
    Rng rng(seed);
    PairGraph g;
    g.m = m;
    g.n = n;
    g.w.assign(static_cast<std::size_t>(m) * n, 0.0);
    for (double& v : g.w) v = rng.uniform(0.05, 1.0);  // strictly positive
    return g;
}

}  // namespace

TEST_CASE("identity recovery when image equals text") {
    const auto rows = random_rows(80, 16, 1);
    const auto map = fit_linear_map(rows, rows);
    for (int i = 0; i < 16; ++i)
        for (int j = 0; j < 16; ++j)
            CHECK(std::abs(map.m[i * 16 + j] - (i == j ? 1.0 : 0.0)) < 1e-6);
    CHECK(map.residual_frobenius < 1e-8);
}

TEST_CASE("planted full-rank map is recovered within 1e-6") {
    const int d = 16;
    Rng rng(3);
    std::vector<double> planted(d * d);
    for (double& v : planted) v = rng.normal();
    const auto text = random_rows(4 * d, d, 4);
    const auto image = map_rows(text, planted, d);
    const auto map = fit_linear_map(text, image);
    double err = 0.0;
    for (int i = 0; i < d * d; ++i) {
        const double diff = map.m[i] - planted[i];
        err += diff * diff;
    }
    CHECK(std::sqrt(err) < 1e-6);
    CHECK(!map.rank_deficient);
}

TEST_CASE("all-zero text matrix flags rank deficiency and returns minimum norm") {
    const int d = 8;
    std::vector<std::vector<double>> zeros(20, std::vector<double>(d, 0.0));
    const auto image = random_rows(20, d, 5);
    const auto map = fit_linear_map(zeros, image);
    CHECK(map.rank_deficient);
    for (double v : map.m) CHECK(v == 0.0);  // minimum-norm solution
}

TEST_CASE("count mismatch rejected") {
    CHECK_THROWS_AS((void)fit_linear_map(random_rows(4, 8, 1), random_rows(5, 8, 2)),
                    Error);
}

TEST_CASE("apply_map matches a naive triple-loop oracle") {
    const int d = 12;
    AlignmentMap map;
    map.dim = d;
    Rng rng(9);
    map.m.resize(d * d);
    for (double& v : map.m) v = rng.normal();
    std::vector<double> u(d);
    for (double& v : u) v = rng.normal();

    const auto fast = apply_map(map, u);
    std::vector<double> oracle(d, 0.0);
    for (int j = 0; j < d; ++j)
        for (int i = 0; i < d; ++i) oracle[j] += u[i] * map.m[i * d + j];
    for (int j = 0; j < d; ++j) CHECK(std::abs(fast[j] - oracle[j]) < 1e-10);

    SUBCASE("identity map returns the input") {
        AlignmentMap id;
        id.dim = d;
        id.m.assign(d * d, 0.0);
        for (int i = 0; i < d; ++i) id.m[i * d + i] = 1.0;
        CHECK(apply_map(id, u) == u);
    }
    SUBCASE("zero map gives the degenerate zero vector") {
        AlignmentMap zero;
        zero.dim = d;
        zero.m.assign(d * d, 0.0);
        const auto out = apply_map(zero, u);
        CHECK(nn::norm2(out) == 0.0);
    }
    SUBCASE("dimension mismatch rejected") {
        CHECK_THROWS_AS((void)apply_map(map, std::vector<double>(d + 1, 0.0)), Error);
    }
}

TEST_CASE("first-order optimality of the least-squares fit") {
    const int d = 8;
    const auto text = random_rows(40, d, 21);
    auto image = random_rows(40, d, 22);  // noisy, not exactly linear
    const auto map = fit_linear_map(text, image);

    auto residual_with = [&](const std::vector<double>& m) {
        double total = 0.0;
        const auto mapped = map_rows(text, m, d);
        for (std::size_t r = 0; r < text.size(); ++r)
            for (int j = 0; j < d; ++j) {
                const double diff = mapped[r][j] - image[r][j];
                total += diff * diff;
            }
        return std::sqrt(total);
    };

    const double base = residual_with(map.m);
    CHECK(base == doctest::Approx(map.residual_frobenius).epsilon(1e-9));
    Rng rng(23);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> delta(d * d);
        double norm = 0.0;
        for (double& v : delta) {
            v = rng.normal();
            norm += v * v;
        }
        norm = std::sqrt(norm);
        auto perturbed = map.m;
        for (int i = 0; i < d * d; ++i) perturbed[i] += 1e-3 * delta[i] / norm;
        CHECK(residual_with(perturbed) >= base);
    }
}

TEST_CASE("fit/apply round trip on exactly-linear data is exact") {
    const int d = 8;
    Rng rng(31);
    std::vector<double> planted(d * d);
    for (double& v : planted) v = rng.normal();
    const auto text = random_rows(30, d, 32);
    const auto image = map_rows(text, planted, d);
    const auto map = fit_linear_map(text, image);
    for (std::size_t r = 0; r < text.size(); ++r) {
        const auto mapped = apply_map(map, text[r]);
        for (int j = 0; j < d; ++j) CHECK(std::abs(mapped[j] - image[r][j]) < 1e-8);
    }
}

TEST_CASE("alignment report: perfect data and purity") {
    const int d = 8;
    Rng rng(31);
    std::vector<double> planted(d * d);
    for (double& v : planted) v = rng.normal();
    const auto text = random_rows(30, d, 32);
    const auto image = map_rows(text, planted, d);
    const auto map = fit_linear_map(text, image);

    const auto held_text = random_rows(10, d, 33);
    const auto held_image = map_rows(held_text, planted, d);
    const auto rep = alignment_report(map, held_text, held_image);
    CHECK(rep.mean_cosine == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(rep.mean_l1_per_element < 1e-9);
    CHECK(rep.frobenius_error < 1e-8);

    const auto rep2 = alignment_report(map, held_text, held_image);
    CHECK(rep.mean_cosine == rep2.mean_cosine);  // pure function

    CHECK_THROWS_AS((void)alignment_report(map, {}, {}), Error);
}

TEST_CASE("alignment map file round trip") {
    const int d = 8;
    const auto text = random_rows(30, d, 41);
    const auto image = random_rows(30, d, 42);
    const auto map = fit_linear_map(text, image);
    auto dir = std::filesystem::temp_directory_path() / "leaky_align_test";
    std::filesystem::create_directories(dir);
    const std::string path = (dir / "map.bin").string();
    save_alignment_map(map, path);
    const auto back = load_alignment_map(path);
    CHECK(back.dim == map.dim);
    CHECK(back.fit_size == map.fit_size);
    CHECK(back.m == map.m);
    CHECK(back.residual_frobenius == map.residual_frobenius);
    CHECK(alignment_map_csv(back) == alignment_map_csv(map));
}

TEST_CASE("spectral identity holds on random bipartite graphs") {
    const auto g = random_graph(8, 8, 50);
    CHECK(verify_spectral_relation(g, 4) <= 1e-8);
}

TEST_CASE("spectral identity on the complete unit-weight 3x3 graph") {
    PairGraph g;
    g.m = g.n = 3;
    g.w.assign(9, 1.0);
    CHECK(verify_spectral_relation(g, 2) <= 1e-10);
}

TEST_CASE("spectral identity across sizes and unit-weight pair graphs") {
    Rng rng(60);
    for (int trial = 0; trial < 8; ++trial) {
        const int m = 4 + static_cast<int>(rng.uniform_index(61));  // up to 64
        const int n = 4 + static_cast<int>(rng.uniform_index(61));
        auto g = random_graph(m, n, 100 + trial);
        const int k = 2 + static_cast<int>(rng.uniform_index(
                              static_cast<std::uint64_t>(std::min(m, n) - 2)));
        CHECK(verify_spectral_relation(g, k) <= 1e-8);
    }
    // sparse unit-weight pairing (one image per text, plus a fill edge so no
    // node is isolated)
    PairGraph g;
    g.m = 6;
    g.n = 6;
    g.w.assign(36, 0.0);
    for (int i = 0; i < 6; ++i) g.at(i, i) = 1.0;
    g.at(0, 5) = 1.0;
    CHECK(verify_spectral_relation(g, 3) <= 1e-8);
}

TEST_CASE("isolated nodes are rejected") {
    PairGraph g;
    g.m = 3;
    g.n = 3;
    g.w.assign(9, 1.0);
    g.at(0, 2) = g.at(1, 2) = g.at(2, 2) = 0.0;  // image node 2 isolated
    CHECK_THROWS_AS((void)verify_spectral_relation(g, 2), Error);
}

TEST_CASE("k out of range rejected") {
    const auto g = random_graph(4, 4, 70);
    CHECK_THROWS_AS((void)verify_spectral_relation(g, 5), Error);
}
