#include "leaky/two_tower.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "leaky/csv.hpp"
#include "leaky/parallel.hpp"
#include "leaky/serialize.hpp"

namespace leaky::tower {

namespace {
constexpr const char* kCkptMagic = "LEAKYCKPT";
constexpr std::uint32_t kCkptVersion = 1;
constexpr double kMaxLogitScale = 4.605170185988091;  // ln(100)
constexpr double kRangeSlack = 1e-3;  // tolerance for [0,1] input validation
}  // namespace

void ImageTower::init(int h_, int w_, int c_, int embed_dim_, Rng& rng) {
    h = h_;
    w = w_;
    c = c_;
    embed_dim = embed_dim_;
    require(h % 8 == 0 && w % 8 == 0, ErrorKind::config,
            "image tower requires H and W divisible by 8");
    conv1.init(c, c1, 3, 2, 1, rng);
    conv2.init(c1, c2, 3, 2, 1, rng);
    conv3.init(c2, c3, 3, 2, 1, rng);
    proj.init(flat_dim(), embed_dim, rng);
}

void ImageTower::register_params(const std::string& prefix, nn::ParamSet& set) {
    conv1.register_params(prefix + ".conv1", set);
    conv2.register_params(prefix + ".conv2", set);
    conv3.register_params(prefix + ".conv3", set);
    proj.register_params(prefix + ".proj", set);
}

void TextTower::init(int char_dim_, int embed_dim_, Rng& rng) {
    char_dim = char_dim_;
    embed_dim = embed_dim_;
    char_emb.resize(static_cast<std::size_t>(charset) * char_dim);
    for (double& v : char_emb) v = 0.5 * rng.normal();
    g_char_emb.assign(char_emb.size(), 0.0);
    pos_mod.resize(static_cast<std::size_t>(max_len) * char_dim);
    for (double& v : pos_mod) v = 0.3 * rng.normal();
    g_pos_mod.assign(pos_mod.size(), 0.0);
    fc1.init(char_dim, embed_dim, rng);
    fc2.init(embed_dim, embed_dim, rng);
}

void TextTower::register_params(const std::string& prefix, nn::ParamSet& set) {
    set.add(prefix + ".char_emb", char_emb, g_char_emb);
    set.add(prefix + ".pos_mod", pos_mod, g_pos_mod);
    fc1.register_params(prefix + ".fc1", set);
    fc2.register_params(prefix + ".fc2", set);
}

void EncoderParams::init(int h, int w, int c, int embed_dim, int char_dim,
                         double temperature, Rng& rng) {
    require(temperature > 0, ErrorKind::config, "temperature must be > 0");
    image.init(h, w, c, embed_dim, rng);
    text.init(char_dim, embed_dim, rng);
    logit_scale[0] = std::log(1.0 / temperature);
    g_logit_scale[0] = 0.0;
}

nn::ParamSet EncoderParams::all_params() {
    nn::ParamSet set;
    image.register_params("image", set);
    text.register_params("text", set);
    set.add("logit_scale", logit_scale, g_logit_scale);
    return set;
}

nn::ParamSet EncoderParams::image_params() {
    nn::ParamSet set;
    image.register_params("image", set);
    return set;
}

std::size_t EncoderParams::param_count() const {
    auto set = const_cast<EncoderParams*>(this)->all_params();
    return set.count();
}

std::uint64_t EncoderParams::value_hash() const {
    auto set = const_cast<EncoderParams*>(this)->all_params();
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& p : set.items)
        h = fnv1a64(p.value->data(), p.value->size() * sizeof(double), h);
    return h;
}

// ---------------------------------------------------------------------------
// Image tower forward / backward
// ---------------------------------------------------------------------------

Embedding encode_image_cached(const EncoderParams& params, const Image& x,
                              ImageCache& cache) {
    const ImageTower& t = params.image;
    require(x.h == t.h && x.w == t.w && x.c == t.c, ErrorKind::validation,
            "encode_image: shape mismatch");
    require(in_unit_range(x, kRangeSlack), ErrorKind::validation,
            "encode_image: pixel values outside [0,1]");

    const int h1 = t.conv1.out_h(t.h), w1 = t.conv1.out_w(t.w);
    const int h2 = t.conv2.out_h(h1), w2 = t.conv2.out_w(w1);
    const int h3 = t.conv3.out_h(h2), w3 = t.conv3.out_w(w2);

    cache.a1.assign(static_cast<std::size_t>(t.c1) * h1 * w1, 0.0);
    t.conv1.forward(x.data.data(), t.h, t.w, cache.a1.data());
    nn::tanh_forward(cache.a1);

    cache.a2.assign(static_cast<std::size_t>(t.c2) * h2 * w2, 0.0);
    t.conv2.forward(cache.a1.data(), h1, w1, cache.a2.data());
    nn::tanh_forward(cache.a2);

    cache.a3.assign(static_cast<std::size_t>(t.c3) * h3 * w3, 0.0);
    t.conv3.forward(cache.a2.data(), h2, w2, cache.a3.data());
    nn::tanh_forward(cache.a3);

    cache.pre.assign(t.embed_dim, 0.0);
    t.proj.forward(cache.a3.data(), cache.pre.data());

    Embedding emb;
    cache.norm = nn::l2_normalize(cache.pre, emb);
    return emb;
}

Embedding encode_image(const EncoderParams& params, const Image& x) {
    ImageCache cache;
    return encode_image_cached(params, x, cache);
}

void encode_image_backward(EncoderParams& params, const Image& x,
                           const ImageCache& cache, const Embedding& g_emb,
                           Image* gx, bool train) {
    ImageTower& t = params.image;
    const int h1 = t.conv1.out_h(t.h), w1 = t.conv1.out_w(t.w);
    const int h2 = t.conv2.out_h(h1), w2 = t.conv2.out_w(w1);

    std::vector<double> g_pre;
    nn::l2_normalize_backward(cache.pre, cache.norm, g_emb, g_pre);

    std::vector<double> g_a3(cache.a3.size(), 0.0);
    t.proj.backward(cache.a3.data(), g_pre.data(), g_a3.data(), train);
    nn::tanh_backward(cache.a3, g_a3);

    std::vector<double> g_a2(cache.a2.size(), 0.0);
    t.conv3.backward(cache.a2.data(), h2, w2, g_a3.data(), g_a2.data(), train);
    nn::tanh_backward(cache.a2, g_a2);

    std::vector<double> g_a1(cache.a1.size(), 0.0);
    t.conv2.backward(cache.a1.data(), h1, w1, g_a2.data(), g_a1.data(), train);
    nn::tanh_backward(cache.a1, g_a1);

    if (gx) {
        *gx = Image(t.h, t.w, t.c);
        t.conv1.backward(x.data.data(), t.h, t.w, g_a1.data(), gx->data.data(), train);
    } else {
        t.conv1.backward(x.data.data(), t.h, t.w, g_a1.data(), nullptr, train);
    }
}

// ---------------------------------------------------------------------------
// Text tower forward / backward
// ---------------------------------------------------------------------------

Embedding encode_text_cached(const EncoderParams& params,
                             const std::vector<int>& tokens, TextCache& cache) {
    const TextTower& t = params.text;
    require(!tokens.empty(), ErrorKind::validation, "encode_text: empty sequence");
    for (int tok : tokens)
        require(tok >= 0 && tok < t.charset, ErrorKind::validation,
                "encode_text: token outside vocabulary: " + fmt_int(tok));

    cache.pooled.assign(t.char_dim, 0.0);
    const double inv_len = 1.0 / static_cast<double>(tokens.size());
    for (std::size_t p = 0; p < tokens.size(); ++p) {
        const int pos = std::min<int>(static_cast<int>(p), t.max_len - 1);
        const double* ce = t.char_emb.data() + static_cast<std::size_t>(tokens[p]) * t.char_dim;
        const double* pm = t.pos_mod.data() + static_cast<std::size_t>(pos) * t.char_dim;
        for (int i = 0; i < t.char_dim; ++i)
            cache.pooled[i] += inv_len * ce[i] * (1.0 + pm[i]);
    }

    cache.h1.assign(t.embed_dim, 0.0);
    t.fc1.forward(cache.pooled.data(), cache.h1.data());
    nn::tanh_forward(cache.h1);

    cache.pre.assign(t.embed_dim, 0.0);
    t.fc2.forward(cache.h1.data(), cache.pre.data());

    Embedding emb;
    cache.norm = nn::l2_normalize(cache.pre, emb);
    return emb;
}

Embedding encode_text(const EncoderParams& params, const std::vector<int>& tokens) {
    TextCache cache;
    return encode_text_cached(params, tokens, cache);
}

void encode_text_backward(EncoderParams& params, const std::vector<int>& tokens,
                          const TextCache& cache, const Embedding& g_emb,
                          bool train) {
    TextTower& t = params.text;
    std::vector<double> g_pre;
    nn::l2_normalize_backward(cache.pre, cache.norm, g_emb, g_pre);

    std::vector<double> g_h1(t.embed_dim, 0.0);
    t.fc2.backward(cache.h1.data(), g_pre.data(), g_h1.data(), train);
    nn::tanh_backward(cache.h1, g_h1);

    std::vector<double> g_pooled(t.char_dim, 0.0);
    t.fc1.backward(cache.pooled.data(), g_h1.data(), g_pooled.data(), train);

    if (!train) return;
    const double inv_len = 1.0 / static_cast<double>(tokens.size());
    for (std::size_t p = 0; p < tokens.size(); ++p) {
        const int pos = std::min<int>(static_cast<int>(p), t.max_len - 1);
        const double* ce = t.char_emb.data() + static_cast<std::size_t>(tokens[p]) * t.char_dim;
        const double* pm = t.pos_mod.data() + static_cast<std::size_t>(pos) * t.char_dim;
        double* gce = t.g_char_emb.data() + static_cast<std::size_t>(tokens[p]) * t.char_dim;
        double* gpm = t.g_pos_mod.data() + static_cast<std::size_t>(pos) * t.char_dim;
        for (int i = 0; i < t.char_dim; ++i) {
            const double g = inv_len * g_pooled[i];
            gce[i] += g * (1.0 + pm[i]);
            gpm[i] += g * ce[i];
        }
    }
}

// ---------------------------------------------------------------------------
// Contrastive loss
// ---------------------------------------------------------------------------

double contrastive_loss(EncoderParams& params, const std::vector<const Image*>& images,
                        const std::vector<const std::vector<int>*>& token_seqs,
                        bool train) {
    const std::size_t n = images.size();
    require(n == token_seqs.size(), ErrorKind::validation,
            "contrastive_loss: image/text count mismatch");
    require(n >= 2, ErrorKind::config,
            "contrastive_loss: batch must contain at least 2 pairs");

    std::vector<ImageCache> icaches(n);
    std::vector<TextCache> tcaches(n);
    std::vector<Embedding> u(n), v(n);
    for (std::size_t i = 0; i < n; ++i) {
        u[i] = encode_image_cached(params, *images[i], icaches[i]);
        v[i] = encode_text_cached(params, *token_seqs[i], tcaches[i]);
    }

    const double scale = std::exp(params.logit_scale[0]);
    std::vector<double> sims(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) sims[i * n + j] = scale * nn::dot(u[i], v[j]);

    // Row-wise (image->text) and column-wise (text->image) cross entropy.
    auto softmax_ce = [&](bool rows, std::vector<double>& g) {
        double loss = 0.0;
        for (std::size_t a = 0; a < n; ++a) {
            double mx = -1e300;
            for (std::size_t b = 0; b < n; ++b)
                mx = std::max(mx, rows ? sims[a * n + b] : sims[b * n + a]);
            double z = 0.0;
            for (std::size_t b = 0; b < n; ++b)
                z += std::exp((rows ? sims[a * n + b] : sims[b * n + a]) - mx);
            const double target = rows ? sims[a * n + a] : sims[a * n + a];
            loss += -(target - mx - std::log(z));
            for (std::size_t b = 0; b < n; ++b) {
                const double p =
                    std::exp((rows ? sims[a * n + b] : sims[b * n + a]) - mx) / z;
                const double grad = p - (a == b ? 1.0 : 0.0);
                if (rows) g[a * n + b] += grad;
                else g[b * n + a] += grad;
            }
        }
        return loss / static_cast<double>(n);
    };

    std::vector<double> g_sims(n * n, 0.0);
    const double loss_i2t = softmax_ce(true, g_sims);
    const double loss_t2i = softmax_ce(false, g_sims);
    const double loss = 0.5 * (loss_i2t + loss_t2i);

    if (!train) return loss;

    const double gscale = 0.5 / static_cast<double>(n);
    for (double& g : g_sims) g *= gscale;

    double g_logit = 0.0;
    std::vector<Embedding> gu(n, Embedding(u[0].size(), 0.0));
    std::vector<Embedding> gv(n, Embedding(v[0].size(), 0.0));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double g = g_sims[i * n + j];
            if (g == 0.0) continue;
            g_logit += g * sims[i * n + j];  // d(scale*cos)/d(logit) = sim
            for (std::size_t k = 0; k < u[i].size(); ++k) {
                gu[i][k] += g * scale * v[j][k];
                gv[j][k] += g * scale * u[i][k];
            }
        }
    params.g_logit_scale[0] += g_logit;

    for (std::size_t i = 0; i < n; ++i) {
        encode_image_backward(params, *images[i], icaches[i], gu[i], nullptr, true);
        encode_text_backward(params, *token_seqs[i], tcaches[i], gv[i], true);
    }
    return loss;
}

double retrieval_top1(const EncoderParams& params,
                      const std::vector<const corpus::PairRecord*>& records) {
    require(!records.empty(), ErrorKind::validation, "retrieval: empty set");
    std::vector<Embedding> u(records.size()), v(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        u[i] = encode_image(params, records[i]->image);
        v[i] = encode_text(params, records[i]->caption_tokens);
    }
    int hits = 0;
    for (std::size_t i = 0; i < records.size(); ++i) {
        std::size_t best = 0;
        double best_sim = -1e300;
        for (std::size_t j = 0; j < records.size(); ++j) {
            const double s = nn::dot(u[i], v[j]);
            if (s > best_sim) {  // strict: ties keep the lowest index
                best_sim = s;
                best = j;
            }
        }
        if (best == i) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(records.size());
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

Checkpoint train_contrastive(const corpus::Manifest& manifest,
                             const EncoderConfig& cfg, const CorpusConfig& corpus_cfg,
                             std::uint64_t seed, TrainReport* report,
                             const std::string& split) {
    require(cfg.batch >= 2, ErrorKind::config,
            "train_contrastive: batch size must be >= 2 (contrastive loss is "
            "degenerate for a single pair)");

    std::vector<std::size_t> pool;
    if (split.empty()) {
        for (std::size_t i = 0; i < manifest.records.size(); ++i)
            if (manifest.records[i].member) pool.push_back(i);
    } else {
        pool = manifest.split_indices(split);
    }
    require(pool.size() >= 2, ErrorKind::config,
            "train_contrastive: need at least 2 training pairs");

    Checkpoint ckpt;
    Rng init_rng = substream(seed, "tower.init");
    ckpt.params.init(corpus_cfg.height, corpus_cfg.width, corpus_cfg.channels,
                     cfg.embed_dim, cfg.char_embed_dim, cfg.temperature_init,
                     init_rng);
    ckpt.role = "original";
    ckpt.step_count = cfg.steps;

    auto params = ckpt.params.all_params();
    nn::AdamW opt;
    opt.lr = cfg.lr;
    opt.weight_decay = cfg.weight_decay;

    Rng batch_rng = substream(seed, "tower.batches");
    TrainReport local;
    const int batch = std::min<int>(cfg.batch, static_cast<int>(pool.size()));
    for (int step = 0; step < cfg.steps; ++step) {
        std::vector<const Image*> images;
        std::vector<const std::vector<int>*> texts;
        std::set<std::size_t> chosen;
        while (static_cast<int>(chosen.size()) < batch)
            chosen.insert(pool[batch_rng.uniform_index(pool.size())]);
        for (std::size_t idx : chosen) {
            images.push_back(&manifest.records[idx].image);
            texts.push_back(&manifest.records[idx].caption_tokens);
        }
        params.zero_grad();
        const double loss = contrastive_loss(ckpt.params, images, texts, true);
        opt.step(params);
        ckpt.params.logit_scale[0] =
            std::min(ckpt.params.logit_scale[0], kMaxLogitScale);
        local.loss_curve.push_back(loss);
        if (step == 0) local.initial_loss = loss;
        local.final_loss = loss;
    }

    if (report) *report = local;
    return ckpt;
}

// ---------------------------------------------------------------------------
// Checkpoint io
// ---------------------------------------------------------------------------

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    BinaryWriter w;
    w.str(kCkptMagic);
    w.u32(kCkptVersion);
    w.str(ckpt.role);
    w.u32(static_cast<std::uint32_t>(ckpt.params.image.h));
    w.u32(static_cast<std::uint32_t>(ckpt.params.image.w));
    w.u32(static_cast<std::uint32_t>(ckpt.params.image.c));
    w.u32(static_cast<std::uint32_t>(ckpt.params.image.embed_dim));
    w.u32(static_cast<std::uint32_t>(ckpt.params.text.char_dim));
    w.u64(static_cast<std::uint64_t>(ckpt.step_count));
    w.u64(ckpt.config_hash);
    w.u64(ckpt.params.param_count());
    auto set = const_cast<Checkpoint&>(ckpt).params.all_params();
    w.u32(static_cast<std::uint32_t>(set.items.size()));
    for (const auto& p : set.items) {
        w.str(p.name);
        w.doubles(*p.value);
    }

    // Original-role checkpoints are immutable once written; identical bytes
    // (idempotent reruns) are allowed.
    namespace fs = std::filesystem;
    if (fs::exists(path)) {
        BinaryReader probe = BinaryReader::from_file(path);
        const std::string magic = probe.str();
        if (magic == kCkptMagic) {
            probe.u32();
            const std::string existing_role = probe.str();
            if (existing_role == "original" && read_file(path) != w.bytes())
                fail(ErrorKind::validation,
                     "refusing to overwrite original checkpoint: " + path);
        }
    }
    w.save(path);
}

Checkpoint load_checkpoint(const std::string& path) {
    BinaryReader r = BinaryReader::from_file(path);
    require(r.str() == kCkptMagic, ErrorKind::ingest,
            "not a checkpoint file: " + path);
    const std::uint32_t version = r.u32();
    require(version == kCkptVersion, ErrorKind::ingest,
            "unsupported checkpoint format version " + fmt_int(version));
    Checkpoint ckpt;
    ckpt.role = r.str();
    const int h = static_cast<int>(r.u32());
    const int w = static_cast<int>(r.u32());
    const int c = static_cast<int>(r.u32());
    const int d = static_cast<int>(r.u32());
    const int e = static_cast<int>(r.u32());
    ckpt.step_count = static_cast<long long>(r.u64());
    ckpt.config_hash = r.u64();
    const std::uint64_t expected_count = r.u64();

    Rng dummy(0);
    ckpt.params.init(h, w, c, d, e, 0.07, dummy);
    auto set = ckpt.params.all_params();
    const std::uint32_t tensors = r.u32();
    require(tensors == set.items.size(), ErrorKind::ingest,
            "checkpoint tensor count mismatch");
    for (std::uint32_t i = 0; i < tensors; ++i) {
        const std::string name = r.str();
        const std::vector<double> values = r.doubles();
        bool found = false;
        for (auto& p : set.items) {
            if (p.name != name) continue;
            require(p.value->size() == values.size(), ErrorKind::ingest,
                    "checkpoint tensor size mismatch for " + name);
            *p.value = values;
            found = true;
            break;
        }
        require(found, ErrorKind::ingest, "unknown checkpoint tensor: " + name);
    }
    require(ckpt.params.param_count() == expected_count, ErrorKind::ingest,
            "checkpoint parameter count mismatch");
    return ckpt;
}

}  // namespace leaky::tower
