#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "leaky/fidelity.hpp"
#include "leaky/rng.hpp"

using namespace leaky;
using namespace leaky::fidelity;

namespace {

Image random_image(int h, int w, std::uint64_t seed) {
    Image img(h, w, 3);
    Rng rng(seed);
    for (double& v : img.data) v = rng.uniform();
    return img;
}

tower::EncoderParams feature_net(std::uint64_t seed) {
    tower::EncoderParams p;
    Rng rng(seed);
    p.init(16, 16, 3, 32, 16, 0.07, rng);
    return p;
}

// Independent SSIM oracle: direct per-window evaluation, no separable
// filtering; kept deliberately different in structure from the library path.
double ssim_oracle(const Image& a, const Image& b, int window, double sigma,
                   double c1, double c2) {
    std::vector<double> k1d(window);
    const double mid = (window - 1) / 2.0;
    double ksum = 0.0;
    for (int i = 0; i < window; ++i) {
        k1d[i] = std::exp(-(i - mid) * (i - mid) / (2 * sigma * sigma));
        ksum += k1d[i];
    }
    for (double& v : k1d) v /= ksum;

    double total = 0.0;
    int count = 0;
    for (int ch = 0; ch < a.c; ++ch) {
        for (int y0 = 0; y0 + window <= a.h; ++y0) {
            for (int x0 = 0; x0 + window <= a.w; ++x0) {
                double mu_a = 0, mu_b = 0;
                for (int dy = 0; dy < window; ++dy)
                    for (int dx = 0; dx < window; ++dx) {
                        const double w = k1d[dy] * k1d[dx];
                        mu_a += w * a.at(ch, y0 + dy, x0 + dx);
                        mu_b += w * b.at(ch, y0 + dy, x0 + dx);
                    }
                double va = 0, vb = 0, cov = 0;
                for (int dy = 0; dy < window; ++dy)
                    for (int dx = 0; dx < window; ++dx) {
                        const double w = k1d[dy] * k1d[dx];
                        const double da = a.at(ch, y0 + dy, x0 + dx) - mu_a;
                        const double db = b.at(ch, y0 + dy, x0 + dx) - mu_b;
                        va += w * da * da;
                        vb += w * db * db;
                        cov += w * da * db;
                    }
                total += (2 * mu_a * mu_b + c1) * (2 * cov + c2) /
                         ((mu_a * mu_a + mu_b * mu_b + c1) * (va + vb + c2));
                ++count;
            }
        }
    }
    return total / count;
}

}  // namespace

TEST_CASE("ssim of an image with itself is one") {
    const Image x = random_image(32, 32, 1);
    CHECK(std::abs(ssim(x, x) - 1.0) < 1e-9);
}

TEST_CASE("ssim matches the independent per-window oracle") {
    SUBCASE("binary image vs its inverse") {
        Image x(16, 16, 1);
        Rng rng(2);
        for (double& v : x.data) v = rng.uniform() < 0.5 ? 0.0 : 1.0;
        Image inv = x;
        for (double& v : inv.data) v = 1.0 - v;
        const double lib = ssim(x, inv, 11, 1.5);
        const double oracle = ssim_oracle(x, inv, 11, 1.5, 0.0001, 0.0009);
        CHECK(std::abs(lib - oracle) < 1e-8);
    }
    SUBCASE("random pairs across window sizes") {
        for (const int window : {5, 7, 11}) {
            const Image a = random_image(20, 24, 3);
            const Image b = random_image(20, 24, 4);
            const double lib = ssim(a, b, window, 1.5);
            const double oracle = ssim_oracle(a, b, window, 1.5, 0.0001, 0.0009);
            CHECK(std::abs(lib - oracle) < 1e-8);
        }
    }
}

TEST_CASE("ssim is symmetric") {
    const Image a = random_image(16, 16, 5);
    const Image b = random_image(16, 16, 6);
    CHECK(std::abs(ssim(a, b) - ssim(b, a)) < 1e-12);
}

TEST_CASE("ssim validates shapes and window") {
    const Image a = random_image(16, 16, 7);
    const Image b = random_image(12, 16, 8);
    CHECK_THROWS_AS((void)ssim(a, b), Error);
    CHECK_THROWS_AS((void)ssim(a, a, 4), Error);   // even window
    CHECK_THROWS_AS((void)ssim(a, a, 17), Error);  // larger than image
}

TEST_CASE("perceptual distance: identity, symmetry, noise monotonicity") {
    const auto net = feature_net(9);
    const Image x = random_image(16, 16, 10);
    CHECK(perceptual_distance(x, x, net) == 0.0);

    const Image y = random_image(16, 16, 11);
    CHECK(perceptual_distance(x, y, net) ==
          doctest::Approx(perceptual_distance(y, x, net)).epsilon(1e-12));
    CHECK(perceptual_distance(x, y, net) > 0.0);

    // mean distance increases with noise scale over 50 samples
    Rng rng(12);
    double means[3] = {0, 0, 0};
    const double scales[3] = {0.05, 0.1, 0.2};
    for (int s = 0; s < 3; ++s) {
        for (int i = 0; i < 50; ++i) {
            const Image base = random_image(16, 16, 1000 + i);
            Image noisy = base;
            Rng noise(2000 + 50 * s + i);
            for (double& v : noisy.data) v += scales[s] * noise.normal();
            clamp01(noisy);
            means[s] += perceptual_distance(base, noisy, net);
        }
        means[s] /= 50.0;
    }
    CHECK(means[0] < means[1]);
    CHECK(means[1] < means[2]);
}

TEST_CASE("clip score identities") {
    const auto net = feature_net(13);
    const Image x = random_image(16, 16, 14);
    CHECK(clip_score(x, x, net) == doctest::Approx(1.0).epsilon(1e-9));
    const Image y = random_image(16, 16, 15);
    const double s = clip_score(x, y, net);
    CHECK(s >= -1.0 - 1e-9);
    CHECK(s <= 1.0 + 1e-9);
}

TEST_CASE("descriptor training yields copy-detection behavior") {
    CorpusConfig ccfg;
    ccfg.height = ccfg.width = 16;
    ccfg.train_size = 20;
    ccfg.test_size = 4;
    ccfg.aux_size = 56;
    ccfg.nonmember_size = 4;
    const auto manifest = corpus::generate_corpus(ccfg, 16);
    FidelityConfig fcfg;
    fcfg.descriptor_steps = 180;
    EncoderConfig ecfg;
    ecfg.batch = 10;
    ecfg.lr = 3e-3;
    const auto desc = train_descriptor(manifest, fcfg, ecfg, ccfg, 17);

    // sscd(x, x) = 1
    const Image& x = manifest.records[0].image;
    CHECK(sscd_score(x, x, desc.params) == doctest::Approx(1.0).epsilon(1e-9));
    // symmetry
    const Image& y = manifest.records[1].image;
    CHECK(sscd_score(x, y, desc.params) ==
          doctest::Approx(sscd_score(y, x, desc.params)).epsilon(1e-12));

    // crop-and-rescale of x scores higher than an unrelated image on >= 90%
    // of 100 sampled triples
    int wins = 0;
    Rng rng(18);
    const auto pool = manifest.split_indices("aux");
    for (int trial = 0; trial < 100; ++trial) {
        const auto& a = manifest.records[pool[rng.uniform_index(pool.size())]].image;
        std::size_t other_idx = rng.uniform_index(pool.size());
        const auto& other = manifest.records[pool[other_idx]].image;
        if (&a == &other) {
            ++wins;  // degenerate draw; a crop of x always beats x vs itself tie
            continue;
        }
        const Image view = augment_view(a, 5000 + trial);
        if (sscd_score(a, view, desc.params) > sscd_score(a, other, desc.params))
            ++wins;
    }
    CHECK(wins >= 90);
}

TEST_CASE("hs conjunction is exact and inclusive at thresholds") {
    const HSThresholds t;
    // all four exactly at their thresholds -> true (inclusive comparisons)
    CHECK(hs_flag(0.7, 0.45, 0.7, 0.5, t));
    // each metric individually just past its threshold -> false
    CHECK(!hs_flag(0.7 - 1e-12, 0.45, 0.7, 0.5, t));
    CHECK(!hs_flag(0.7, 0.45 + 1e-12, 0.7, 0.5, t));
    CHECK(!hs_flag(0.7, 0.45, 0.7 - 1e-12, 0.5, t));
    CHECK(!hs_flag(0.7, 0.45, 0.7, 0.5 - 1e-12, t));
}

TEST_CASE("hs property holds on random metric vectors") {
    Rng rng(19);
    const HSThresholds t;
    for (int i = 0; i < 10000; ++i) {
        const double s = rng.uniform(-1, 1);
        const double l = rng.uniform(0, 1.5);
        const double c = rng.uniform(-1, 1);
        const double d = rng.uniform(-1, 1);
        const bool expected =
            d >= t.sscd_min && l <= t.lpips_max && s >= t.ssim_min && c >= t.cs_min;
        CHECK(hs_flag(s, l, c, d, t) == expected);
    }
}

TEST_CASE("evaluate composes metrics, flags circular scorers") {
    const auto net = feature_net(20);
    const Image x = random_image(16, 16, 21);
    MetricNets nets;
    nets.feature_net = &net;
    nets.scorer = &net;
    nets.descriptor = &net;
    nets.scorer_hash = 1;
    nets.attacked_hash = 2;
    const HSThresholds t;

    const auto self_eval = evaluate(x, x, nets, t);
    CHECK(self_eval.ssim == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(self_eval.lpips == doctest::Approx(0.0));
    CHECK(self_eval.cs == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(self_eval.sscd == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(self_eval.hs);
    CHECK(!self_eval.warn_circular_scorer);

    nets.attacked_hash = nets.scorer_hash;  // same checkpoint: circularity guard
    const auto warned = evaluate(x, x, nets, t);
    CHECK(warned.warn_circular_scorer);
}
