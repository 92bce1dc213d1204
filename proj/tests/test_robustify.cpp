#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "leaky/nn.hpp"
#include "leaky/robustify.hpp"
#include "leaky/rng.hpp"

using namespace leaky;
using namespace leaky::robust;

namespace {

corpus::Manifest tiny_corpus(std::uint64_t seed) {
    CorpusConfig cfg;
    cfg.height = cfg.width = 16;
    cfg.train_size = 24;
    cfg.test_size = 8;
    cfg.aux_size = 40;
    cfg.nonmember_size = 4;
    return corpus::generate_corpus(cfg, seed);
}

tower::Checkpoint tiny_encoder(const corpus::Manifest& manifest, std::uint64_t seed) {
    EncoderConfig cfg;
    cfg.steps = 60;
    cfg.batch = 6;
    CorpusConfig ccfg;
    ccfg.height = ccfg.width = 16;
    return tower::train_contrastive(manifest, cfg, ccfg, seed);
}

Image random_image(std::uint64_t seed) {
    Image img(16, 16, 3);
    Rng rng(seed);
    for (double& v : img.data) v = rng.uniform();
    return img;
}

}  // namespace

TEST_CASE("pgd with zero epsilon returns the input exactly") {
    const auto manifest = tiny_corpus(1);
    const auto ckpt = tiny_encoder(manifest, 1);
    const Image x = random_image(2);
    const auto target = tower::encode_image(ckpt.params, random_image(3));
    PgdConfig cfg;
    cfg.epsilon = 0.0;
    const auto out = pgd_perturb(ckpt.params, x, target, cfg, 4);
    CHECK(out.z.data == x.data);
}

TEST_CASE("pgd satisfies the box constraints exactly") {
    const auto manifest = tiny_corpus(5);
    const auto ckpt = tiny_encoder(manifest, 5);
    PgdConfig cfg;
    cfg.epsilon = 4.0 / 255.0;
    for (std::uint64_t trial = 0; trial < 25; ++trial) {
        const Image x = random_image(100 + trial);
        const auto target = tower::encode_image(ckpt.params, random_image(200 + trial));
        const auto out = pgd_perturb(ckpt.params, x, target, cfg, trial);
        CHECK(linf_distance(out.z, x) <= cfg.epsilon + 1e-9);
        CHECK(in_unit_range(out.z));
    }
}

TEST_CASE("pgd best-so-far objective is monotone along the trajectory") {
    const auto manifest = tiny_corpus(7);
    const auto ckpt = tiny_encoder(manifest, 7);
    const Image x = random_image(8);
    const auto target = tower::encode_image(ckpt.params, random_image(9));
    PgdConfig cfg;
    cfg.epsilon = 8.0 / 255.0;
    cfg.steps = 10;
    const auto out = pgd_perturb(ckpt.params, x, target, cfg, 10);
    REQUIRE(out.trajectory.size() == 10);
    for (std::size_t i = 1; i < out.trajectory.size(); ++i)
        CHECK(out.trajectory[i] >= out.trajectory[i - 1]);
    // 10 steps at least as good as 1 step on the same seed
    PgdConfig one = cfg;
    one.steps = 1;
    const auto short_run = pgd_perturb(ckpt.params, x, target, one, 10);
    CHECK(out.objective >= short_run.objective);
    CHECK(out.objective >= 0.0);
}

TEST_CASE("fare requires an original-role checkpoint") {
    const auto manifest = tiny_corpus(11);
    auto ckpt = tiny_encoder(manifest, 11);
    ckpt.role = "finetuned";
    FareConfig cfg;
    CHECK_THROWS_AS((void)fare_finetune(ckpt, manifest, cfg, 0), Error);
}

TEST_CASE("zero-epoch fare is the identity fine-tune") {
    const auto manifest = tiny_corpus(12);
    const auto ckpt = tiny_encoder(manifest, 12);
    FareConfig cfg;
    cfg.epochs = 0;
    const auto ft = fare_finetune(ckpt, manifest, cfg, 13);
    CHECK(ft.role == "finetuned");
    CHECK(ft.params.value_hash() == ckpt.params.value_hash());
}

TEST_CASE("fare at epsilon zero starts at zero loss and reference stays frozen") {
    const auto manifest = tiny_corpus(14);
    const auto ckpt = tiny_encoder(manifest, 14);
    const auto before_hash = ckpt.params.value_hash();
    FareConfig cfg;
    cfg.pgd.epsilon = 0.0;
    cfg.pgd.random_start = false;
    cfg.epochs = 0;
    FareReport rep;
    (void)fare_finetune(ckpt, manifest, cfg, 15, &rep);
    // f_FT == f_org and z == x, so || f_FT(z) - f_org(x) ||^2 == 0
    CHECK(rep.heldout_loss_initial == doctest::Approx(0.0).epsilon(1e-20));
    CHECK(ckpt.params.value_hash() == before_hash);  // f_org bit-identical
}

TEST_CASE("fare lowers the held-out adversarial loss") {
    const auto manifest = tiny_corpus(16);
    const auto ckpt = tiny_encoder(manifest, 16);
    FareConfig cfg;
    cfg.epochs = 2;
    cfg.batch = 8;
    cfg.sample_limit = 24;
    cfg.pgd.steps = 5;
    cfg.pgd.epsilon = 8.0 / 255.0;
    FareReport rep;
    const auto ft = fare_finetune(ckpt, manifest, cfg, 17, &rep, 2);
    CHECK(ft.role == "finetuned");
    CHECK(rep.heldout_loss_final <= rep.heldout_loss_initial);
    CHECK(rep.clean_drift_mean >= 0.0);  // reported, not asserted further
    CHECK(ckpt.params.value_hash() == tiny_encoder(manifest, 16).params.value_hash());
}

TEST_CASE("fare is deterministic per seed and thread count") {
    const auto manifest = tiny_corpus(18);
    const auto ckpt = tiny_encoder(manifest, 18);
    FareConfig cfg;
    cfg.epochs = 1;
    cfg.batch = 4;
    cfg.sample_limit = 8;
    cfg.pgd.steps = 3;
    const auto a = fare_finetune(ckpt, manifest, cfg, 19, nullptr, 1);
    const auto b = fare_finetune(ckpt, manifest, cfg, 19, nullptr, 2);
    CHECK(a.params.value_hash() == b.params.value_hash());
}

TEST_CASE("smoothness report statistics") {
    const auto manifest = tiny_corpus(20);
    const auto ckpt = tiny_encoder(manifest, 20);

    std::vector<Image> images;
    std::vector<tower::Embedding> targets;
    for (int i = 0; i < 24; ++i) {
        images.push_back(random_image(300 + i));
        targets.push_back(tower::encode_image(ckpt.params, random_image(400 + i)));
    }
    std::vector<std::pair<const Image*, const tower::Embedding*>> probes;
    for (int i = 0; i < 24; ++i) probes.emplace_back(&images[i], &targets[i]);

    SUBCASE("identical params give identical distributions") {
        const auto rep = gradient_smoothness_report(ckpt.params, ckpt.params, probes);
        CHECK(rep.norms_a == rep.norms_b);
        CHECK(rep.mean_a == rep.mean_b);
        CHECK(rep.var_a == rep.var_b);
    }
    SUBCASE("fewer than 20 probes is a statistics error") {
        probes.resize(19);
        CHECK_THROWS_AS(
            (void)gradient_smoothness_report(ckpt.params, ckpt.params, probes), Error);
    }
    SUBCASE("zero images give finite gradients") {
        Image zero(16, 16, 3, 0.0);
        std::vector<std::pair<const Image*, const tower::Embedding*>> zero_probes;
        for (int i = 0; i < 20; ++i) zero_probes.emplace_back(&zero, &targets[i]);
        const auto rep =
            gradient_smoothness_report(ckpt.params, ckpt.params, zero_probes);
        for (double v : rep.norms_a) CHECK(std::isfinite(v));
    }
    SUBCASE("csv has one row per probe per encoder") {
        const auto rep = gradient_smoothness_report(ckpt.params, ckpt.params, probes);
        const std::string csv = smoothness_csv(rep);
        CHECK(std::count(csv.begin(), csv.end(), '\n') == 2 + 48);
    }
}
