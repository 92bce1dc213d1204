#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "leaky/corpus.hpp"
#include "leaky/nn.hpp"
#include "leaky/rng.hpp"
#include "leaky/two_tower.hpp"

using namespace leaky;
using namespace leaky::tower;

namespace {

EncoderParams small_encoder(std::uint64_t seed = 0) {
    EncoderParams p;
    Rng rng(seed);
    p.init(16, 16, 3, 32, 16, 0.07, rng);
    return p;
}

Image random_image(int h, int w, std::uint64_t seed) {
    Image img(h, w, 3);
    Rng rng(seed);
    for (double& v : img.data) v = rng.uniform();
    return img;
}

corpus::Manifest tiny_corpus(int train, int test, std::uint64_t seed) {
    CorpusConfig cfg;
    cfg.height = cfg.width = 16;
    cfg.train_size = train;
    cfg.test_size = test;
    cfg.aux_size = 4;
    cfg.nonmember_size = 4;
    cfg.caption_slots = 0;  // full captions
    return corpus::generate_corpus(cfg, seed);
}

}  // namespace

TEST_CASE("image embeddings are unit norm and deterministic") {
    const auto p = small_encoder();
    const Image x = random_image(16, 16, 1);
    const auto e1 = encode_image(p, x);
    const auto e2 = encode_image(p, x);
    CHECK(std::abs(nn::norm2(e1) - 1.0) < 1e-5);
    CHECK(e1 == e2);
}

TEST_CASE("encode_image validates shapes") {
    const auto p = small_encoder();
    CHECK_THROWS_AS((void)encode_image(p, random_image(8, 8, 1)), Error);
}

TEST_CASE("text embeddings are unit norm; oov and empty rejected") {
    const auto p = small_encoder();
    const auto tokens = corpus::tokenize("color red | shape circle");
    const auto e1 = encode_text(p, tokens);
    const auto e2 = encode_text(p, tokens);
    CHECK(std::abs(nn::norm2(e1) - 1.0) < 1e-5);
    CHECK(e1 == e2);
    CHECK_THROWS_AS((void)encode_text(p, {}), Error);
    try {
        (void)encode_text(p, {0, 99});
        FAIL("expected oov error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("99") != std::string::npos);
    }
}

TEST_CASE("text tower is order sensitive") {
    const auto p = small_encoder();
    const auto a = encode_text(p, corpus::tokenize("red circle | blue square"));
    const auto b = encode_text(p, corpus::tokenize("blue square | red circle"));
    CHECK(nn::dot(a, b) < 1.0 - 1e-6);
}

// Central finite differences against the analytic input gradient of the
// cosine-to-target objective.
TEST_CASE("image encoder input gradient matches finite differences") {
    auto p = small_encoder(5);
    const Image x = random_image(16, 16, 2);
    tower::Embedding target = encode_image(p, random_image(16, 16, 3));

    auto loss_at = [&](const Image& img) {
        const auto e = encode_image(p, img);
        return 1.0 - nn::dot(e, target);
    };

    ImageCache cache;
    const auto emb = encode_image_cached(p, x, cache);
    tower::Embedding g_emb(emb.size());
    for (std::size_t i = 0; i < emb.size(); ++i) g_emb[i] = -target[i];
    Image gx;
    encode_image_backward(p, x, cache, g_emb, &gx, false);

    Rng pick(7);
    const double h = 1e-5;
    int checked = 0;
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t idx = pick.uniform_index(x.data.size());
        Image xp = x, xm = x;
        xp.data[idx] += h;
        xm.data[idx] -= h;
        const double fd = (loss_at(xp) - loss_at(xm)) / (2 * h);
        const double analytic = gx.data[idx];
        const double scale = std::max({std::abs(fd), std::abs(analytic), 1e-8});
        CHECK(std::abs(fd - analytic) / scale < 1e-3);
        ++checked;
    }
    CHECK(checked == 20);
}

TEST_CASE("contrastive loss gradient matches finite differences on a parameter slice") {
    auto p = small_encoder(11);
    std::vector<Image> images;
    std::vector<std::vector<int>> texts;
    for (int i = 0; i < 4; ++i) {
        images.push_back(random_image(16, 16, 20 + i));
        texts.push_back(corpus::tokenize("caption number " + std::string(1, 'a' + i)));
    }
    std::vector<const Image*> iptr;
    std::vector<const std::vector<int>*> tptr;
    for (int i = 0; i < 4; ++i) {
        iptr.push_back(&images[i]);
        tptr.push_back(&texts[i]);
    }

    auto params = p.all_params();
    params.zero_grad();
    (void)contrastive_loss(p, iptr, tptr, true);

    auto loss_at = [&]() { return contrastive_loss(p, iptr, tptr, false); };

    Rng pick(13);
    const double h = 1e-6;
    for (int trial = 0; trial < 20; ++trial) {
        // random parameter slice: random tensor, random coordinate
        const std::size_t ti = pick.uniform_index(params.items.size());
        auto& tensor = *params.items[ti].value;
        const std::size_t ci = pick.uniform_index(tensor.size());
        const double saved = tensor[ci];
        tensor[ci] = saved + h;
        const double lp = loss_at();
        tensor[ci] = saved - h;
        const double lm = loss_at();
        tensor[ci] = saved;
        const double fd = (lp - lm) / (2 * h);
        const double analytic = (*params.items[ti].grad)[ci];
        const double scale = std::max({std::abs(fd), std::abs(analytic), 1e-7});
        INFO("tensor ", params.items[ti].name, " coord ", ci);
        CHECK(std::abs(fd - analytic) / scale < 1e-3);
    }
}

TEST_CASE("contrastive loss is symmetric under role swap") {
    auto p = small_encoder(17);
    std::vector<Image> images;
    std::vector<std::vector<int>> texts;
    for (int i = 0; i < 3; ++i) {
        images.push_back(random_image(16, 16, 40 + i));
        texts.push_back(corpus::tokenize("swap test " + std::string(1, 'a' + i)));
    }
    std::vector<const Image*> iptr;
    std::vector<const std::vector<int>*> tptr;
    for (int i = 0; i < 3; ++i) {
        iptr.push_back(&images[i]);
        tptr.push_back(&texts[i]);
    }
    // loss already averages the image->text and text->image directions; the
    // role swap maps one direction onto the other, leaving the value fixed.
    const double loss = contrastive_loss(p, iptr, tptr, false);
    CHECK(loss == doctest::Approx(contrastive_loss(p, iptr, tptr, false)));
    CHECK(loss > 0.0);
}

TEST_CASE("batch of two duplicated pairs is well-defined") {
    auto p = small_encoder(19);
    const Image x = random_image(16, 16, 50);
    const auto tokens = corpus::tokenize("twin");
    std::vector<const Image*> iptr = {&x, &x};
    std::vector<const std::vector<int>*> tptr = {&tokens, &tokens};
    const double loss = contrastive_loss(p, iptr, tptr, false);
    CHECK(std::isfinite(loss));
}

TEST_CASE("batch size 1 is rejected") {
    auto p = small_encoder(23);
    const Image x = random_image(16, 16, 51);
    const auto tokens = corpus::tokenize("solo");
    std::vector<const Image*> iptr = {&x};
    std::vector<const std::vector<int>*> tptr = {&tokens};
    CHECK_THROWS_AS((void)contrastive_loss(p, iptr, tptr, false), Error);

    const auto manifest = tiny_corpus(8, 2, 1);
    EncoderConfig cfg;
    cfg.batch = 1;
    CorpusConfig ccfg;
    ccfg.height = ccfg.width = 16;
    CHECK_THROWS_AS((void)train_contrastive(manifest, cfg, ccfg, 0), Error);
}

TEST_CASE("training reduces loss, beats chance retrieval, and is seed stable") {
    const auto manifest = tiny_corpus(60, 16, 2);
    EncoderConfig cfg;
    cfg.steps = 260;
    cfg.batch = 8;
    cfg.lr = 3e-3;
    CorpusConfig ccfg;
    ccfg.height = ccfg.width = 16;

    TrainReport r1, r2;
    const auto ckpt1 = train_contrastive(manifest, cfg, ccfg, 0, &r1);
    const auto ckpt2 = train_contrastive(manifest, cfg, ccfg, 0, &r2);
    CHECK(r1.final_loss == r2.final_loss);  // identical seed, identical loss
    CHECK(ckpt1.params.value_hash() == ckpt2.params.value_hash());
    CHECK(r1.final_loss < r1.initial_loss);
    CHECK(ckpt1.role == "original");

    // held-out retrieval on the test split: >= 5x chance
    std::vector<const corpus::PairRecord*> heldout;
    for (auto idx : manifest.split_indices("test"))
        heldout.push_back(&manifest.records[idx]);
    const double acc = retrieval_top1(ckpt1.params, heldout);
    const double chance = 1.0 / static_cast<double>(heldout.size());
    CHECK(acc >= 5.0 * chance);

    // distinct captions embed distinctly after training
    const auto& a = manifest.records[manifest.split_indices("test")[0]];
    const auto& b = manifest.records[manifest.split_indices("test")[1]];
    const auto ea = encode_text(ckpt1.params, a.caption_tokens);
    const auto eb = encode_text(ckpt1.params, b.caption_tokens);
    CHECK(nn::dot(ea, eb) < 1.0 - 1e-9);
}

TEST_CASE("checkpoint round trip and version guard") {
    auto dir = std::filesystem::temp_directory_path() / "leaky_ckpt_test";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    const std::string path = (dir / "enc.ckpt").string();

    Checkpoint ckpt;
    Rng rng(3);
    ckpt.params.init(16, 16, 3, 32, 16, 0.07, rng);
    ckpt.role = "original";
    ckpt.step_count = 123;
    ckpt.config_hash = 777;
    save_checkpoint(ckpt, path);

    const auto back = load_checkpoint(path);
    CHECK(back.role == "original");
    CHECK(back.step_count == 123);
    CHECK(back.config_hash == 777);
    CHECK(back.params.value_hash() == ckpt.params.value_hash());
    CHECK(back.params.param_count() == ckpt.params.param_count());

    // idempotent rewrite of identical bytes is fine; different bytes refuse
    CHECK_NOTHROW(save_checkpoint(ckpt, path));
    Checkpoint other = ckpt;
    other.params.logit_scale[0] += 1.0;
    CHECK_THROWS_AS(save_checkpoint(other, path), Error);

    // a finetuned checkpoint may be overwritten
    const std::string ft_path = (dir / "ft.ckpt").string();
    other.role = "finetuned";
    CHECK_NOTHROW(save_checkpoint(other, ft_path));
    other.params.logit_scale[0] += 1.0;
    CHECK_NOTHROW(save_checkpoint(other, ft_path));
}
