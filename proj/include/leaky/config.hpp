#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "leaky/common.hpp"

namespace leaky {

// Flat dotted-key config text: one "section.key = value" per line, '#'
// comments. Defaults < file < CLI overrides; the merged result is written
// verbatim into every output directory.
class ConfigMap {
  public:
    static ConfigMap parse_text(const std::string& text);
    static ConfigMap parse_file(const std::string& path);

    void set(const std::string& key, const std::string& value);
    bool has(const std::string& key) const;
    const std::map<std::string, std::string>& entries() const { return kv_; }

    std::string get_string(const std::string& key, const std::string& fallback) const;
    long long get_int(const std::string& key, long long fallback) const;
    double get_double(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<double> get_doubles(const std::string& key,
                                    const std::vector<double>& fallback) const;

    // Every key consumed by a getter is recorded; spot typos by comparing.
    void check_unknown_keys() const;
    std::string to_text() const;

  private:
    std::map<std::string, std::string> kv_;
    mutable std::map<std::string, bool> touched_;
};

struct CorpusConfig {
    int height = 32, width = 32, channels = 3;
    int train_size = 452;
    int test_size = 48;
    int aux_size = 600;
    int nonmember_size = 48;
    int caption_slots = -1;     // -1 -> per-record uniform 1..8, 0 -> all, k -> fixed
    double noise_sigma = 0.02;  // per-sample texture noise
};

struct EncoderConfig {
    int embed_dim = 64;
    int char_embed_dim = 32;
    int steps = 1400;
    int batch = 12;
    double lr = 2e-3;
    double weight_decay = 1e-5;
    double temperature_init = 0.07;
};

struct PgdConfig {
    double epsilon = 4.0 / 255.0;
    int steps = 10;
    double step_size = 0.0;  // 0 -> epsilon / 4
    bool random_start = true;
};

struct FareConfig {
    PgdConfig pgd;
    int epochs = 2;
    int batch = 8;
    double lr = 2e-4;
    int sample_limit = 256;  // aux images used per epoch
};

struct AlignConfig {
    int aux_pairs = 2000;
    double sv_cutoff = 1e-10;  // relative singular-value truncation
};

struct InvertConfig {
    double lambda_tv = 1e-4;
    double lr = 0.175;
    double clip_norm = 0.001;
    int epochs = 200;
    std::string init = "gaussian_noise";  // or constant_gray
    std::string clip_mode = "global";     // or per_element
};

struct RefineConfig {
    int base_channels = 8;
    int train_steps = 1000;
    int schedule_steps = 1000;
    int sample_steps = 50;
    double strength = 0.55;
    int batch = 6;
    double lr = 1.5e-3;
    double beta_min = 1e-4;
    double beta_max = 2e-2;
    double cond_drop = 0.1;
    std::string adapter = "internal";  // refiner adapter name
};

struct FidelityConfig {
    int ssim_window = 11;
    double ssim_sigma = 1.5;
    double hs_sscd_min = 0.5;
    double hs_lpips_max = 0.45;
    double hs_ssim_min = 0.7;
    double hs_cs_min = 0.7;
    int descriptor_steps = 700;
    int scorer_steps = 900;
};

struct MiaConfig {
    double filter_sscd_max = 0.10;
    double train_fraction = 0.7;
    std::string tag = "Baseline";  // reconstruction method feeding the MIA
    int rf_trees = 100;
    int rf_max_depth = 8;
    int permutations = 10;
};

struct MemTheoryConfig {
    int dim = 16;
    int n_data = 100000;
    int n_gen = 100000;
    double eta = 2.0;
    double kernel_variance = 1e-3;
    int mixtures = 20;
    int regression_samples_per_level = 10;
};

struct ExperimentConfig {
    CorpusConfig corpus;
    EncoderConfig encoder;
    FareConfig fare;
    AlignConfig align;
    InvertConfig invert;
    RefineConfig refine;
    FidelityConfig fidelity;
    MiaConfig mia;
    MemTheoryConfig memtheory;

    std::uint64_t seed = 0;
    int threads = 0;  // 0 -> hardware concurrency
    std::string out_dir = "out";
    std::vector<double> eps_sweep = {4.0 / 255.0, 8.0 / 255.0, 16.0 / 255.0,
                                     32.0 / 255.0};

    static ExperimentConfig from_map(const ConfigMap& map);
    std::string to_text() const;
    std::uint64_t config_hash() const { return fnv1a64(to_text()); }
};

}  // namespace leaky
