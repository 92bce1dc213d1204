#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "leaky/config.hpp"
#include "leaky/corpus.hpp"
#include "leaky/image.hpp"
#include "leaky/nn.hpp"

namespace leaky::tower {

using Embedding = std::vector<double>;

// Image tower: three strided conv+tanh stages and a linear projection to the
// shared embedding space, unit-normalized. Text tower: position-modulated
// character embeddings, mean pooled, then a 2-layer MLP, unit-normalized.
struct ImageTower {
    int h = 32, w = 32, c = 3;
    int c1 = 16, c2 = 32, c3 = 64;
    int embed_dim = 64;
    nn::Conv2d conv1, conv2, conv3;
    nn::Dense proj;

    void init(int h_, int w_, int c_, int embed_dim_, Rng& rng);
    int flat_dim() const { return c3 * (h / 8) * (w / 8); }
    void register_params(const std::string& prefix, nn::ParamSet& set);
};

struct TextTower {
    int charset = corpus::kCharsetSize;
    int char_dim = 32;
    int embed_dim = 64;
    int max_len = 192;
    std::vector<double> char_emb, g_char_emb;  // charset x char_dim
    std::vector<double> pos_mod, g_pos_mod;    // max_len x char_dim
    nn::Dense fc1, fc2;

    void init(int char_dim_, int embed_dim_, Rng& rng);
    void register_params(const std::string& prefix, nn::ParamSet& set);
};

struct EncoderParams {
    ImageTower image;
    TextTower text;
    std::vector<double> logit_scale{0.0}, g_logit_scale{0.0};

    void init(int h, int w, int c, int embed_dim, int char_dim, double temperature,
              Rng& rng);
    nn::ParamSet all_params();
    nn::ParamSet image_params();
    std::size_t param_count() const;
    std::uint64_t value_hash() const;
};

// Activation cache for one image forward pass; also the feature maps the
// perceptual metric consumes.
struct ImageCache {
    std::vector<double> a1, a2, a3;  // post-tanh activations per stage
    std::vector<double> pre;         // pre-normalization projection
    double norm = 0.0;
};

Embedding encode_image(const EncoderParams& params, const Image& x);
Embedding encode_image_cached(const EncoderParams& params, const Image& x,
                              ImageCache& cache);
// gx may be null; param grads accumulate when train is true.
void encode_image_backward(EncoderParams& params, const Image& x,
                           const ImageCache& cache, const Embedding& g_emb,
                           Image* gx, bool train);

struct TextCache {
    std::vector<double> pooled, h1, pre;
    double norm = 0.0;
};

Embedding encode_text(const EncoderParams& params, const std::vector<int>& tokens);
Embedding encode_text_cached(const EncoderParams& params,
                             const std::vector<int>& tokens, TextCache& cache);
void encode_text_backward(EncoderParams& params, const std::vector<int>& tokens,
                          const TextCache& cache, const Embedding& g_emb,
                          bool train);

// Symmetric InfoNCE over a batch; fills parameter gradients when train.
double contrastive_loss(EncoderParams& params, const std::vector<const Image*>& images,
                        const std::vector<const std::vector<int>*>& token_seqs,
                        bool train);

struct Checkpoint {
    EncoderParams params;
    std::string role = "original";  // original | finetuned
    std::uint64_t config_hash = 0;
    long long step_count = 0;
};

struct TrainReport {
    std::vector<double> loss_curve;
    double initial_loss = 0.0;
    double final_loss = 0.0;
    double heldout_top1 = 0.0;
    double chance_top1 = 0.0;
};

Checkpoint train_contrastive(const corpus::Manifest& manifest,
                             const EncoderConfig& cfg, const CorpusConfig& corpus_cfg,
                             std::uint64_t seed, TrainReport* report = nullptr,
                             const std::string& split = "");

// Top-1 image->text retrieval accuracy over the given records; ties resolve
// to the lowest index.
double retrieval_top1(const EncoderParams& params,
                      const std::vector<const corpus::PairRecord*>& records);

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace leaky::tower
