#include "leaky/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <sstream>

#include "leaky/csv.hpp"
#include "leaky/serialize.hpp"

namespace leaky {

namespace {
std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}
}  // namespace

ConfigMap ConfigMap::parse_text(const std::string& text) {
    ConfigMap map;
    std::istringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        const std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        const std::size_t eq = stripped.find('=');
        require(eq != std::string::npos, ErrorKind::config,
                "config line " + fmt_int(lineno) + ": expected key = value");
        const std::string key = trim(stripped.substr(0, eq));
        const std::string value = trim(stripped.substr(eq + 1));
        require(!key.empty(), ErrorKind::config,
                "config line " + fmt_int(lineno) + ": empty key");
        map.set(key, value);
    }
    return map;
}

ConfigMap ConfigMap::parse_file(const std::string& path) {
    return parse_text(read_file(path));
}

void ConfigMap::set(const std::string& key, const std::string& value) {
    kv_[key] = value;
}

bool ConfigMap::has(const std::string& key) const { return kv_.count(key) > 0; }

std::string ConfigMap::get_string(const std::string& key,
                                  const std::string& fallback) const {
    touched_[key] = true;
    auto it = kv_.find(key);
    return it == kv_.end() ? fallback : it->second;
}

long long ConfigMap::get_int(const std::string& key, long long fallback) const {
    touched_[key] = true;
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    char* end = nullptr;
    const long long v = std::strtoll(it->second.c_str(), &end, 10);
    require(end && *end == '\0', ErrorKind::config,
            "config " + key + ": not an integer: " + it->second);
    return v;
}

double ConfigMap::get_double(const std::string& key, double fallback) const {
    touched_[key] = true;
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    char* end = nullptr;
    const double v = std::strtod(it->second.c_str(), &end);
    require(end && *end == '\0', ErrorKind::config,
            "config " + key + ": not a number: " + it->second);
    return v;
}

bool ConfigMap::get_bool(const std::string& key, bool fallback) const {
    touched_[key] = true;
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    fail(ErrorKind::config, "config " + key + ": not a boolean: " + it->second);
}

std::vector<double> ConfigMap::get_doubles(
    const std::string& key, const std::vector<double>& fallback) const {
    touched_[key] = true;
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    std::vector<double> out;
    std::istringstream ss(it->second);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        char* end = nullptr;
        const double v = std::strtod(item.c_str(), &end);
        require(end && *end == '\0', ErrorKind::config,
                "config " + key + ": bad list element: " + item);
        out.push_back(v);
    }
    require(!out.empty(), ErrorKind::config, "config " + key + ": empty list");
    return out;
}

void ConfigMap::check_unknown_keys() const {
    for (const auto& [key, value] : kv_) {
        (void)value;
        require(touched_.count(key) > 0, ErrorKind::config,
                "unknown config key: " + key);
    }
}

std::string ConfigMap::to_text() const {
    std::string out;
    for (const auto& [key, value] : kv_) out += key + " = " + value + "\n";
    return out;
}

ExperimentConfig ExperimentConfig::from_map(const ConfigMap& map) {
    ExperimentConfig c;
    c.corpus.height = static_cast<int>(map.get_int("corpus.height", c.corpus.height));
    c.corpus.width = static_cast<int>(map.get_int("corpus.width", c.corpus.width));
    c.corpus.channels = static_cast<int>(map.get_int("corpus.channels", c.corpus.channels));
    c.corpus.train_size = static_cast<int>(map.get_int("corpus.train_size", c.corpus.train_size));
    c.corpus.test_size = static_cast<int>(map.get_int("corpus.test_size", c.corpus.test_size));
    c.corpus.aux_size = static_cast<int>(map.get_int("corpus.aux_size", c.corpus.aux_size));
    c.corpus.nonmember_size =
        static_cast<int>(map.get_int("corpus.nonmember_size", c.corpus.nonmember_size));
    c.corpus.caption_slots =
        static_cast<int>(map.get_int("corpus.caption_slots", c.corpus.caption_slots));
    c.corpus.noise_sigma = map.get_double("corpus.noise_sigma", c.corpus.noise_sigma);

    c.encoder.embed_dim = static_cast<int>(map.get_int("encoder.embed_dim", c.encoder.embed_dim));
    c.encoder.char_embed_dim =
        static_cast<int>(map.get_int("encoder.char_embed_dim", c.encoder.char_embed_dim));
    c.encoder.steps = static_cast<int>(map.get_int("encoder.steps", c.encoder.steps));
    c.encoder.batch = static_cast<int>(map.get_int("encoder.batch", c.encoder.batch));
    c.encoder.lr = map.get_double("encoder.lr", c.encoder.lr);
    c.encoder.weight_decay = map.get_double("encoder.weight_decay", c.encoder.weight_decay);
    c.encoder.temperature_init =
        map.get_double("encoder.temperature_init", c.encoder.temperature_init);

    c.fare.pgd.epsilon = map.get_double("fare.epsilon", c.fare.pgd.epsilon);
    c.fare.pgd.steps = static_cast<int>(map.get_int("fare.pgd_steps", c.fare.pgd.steps));
    c.fare.pgd.step_size = map.get_double("fare.pgd_step_size", c.fare.pgd.step_size);
    c.fare.pgd.random_start = map.get_bool("fare.random_start", c.fare.pgd.random_start);
    c.fare.epochs = static_cast<int>(map.get_int("fare.epochs", c.fare.epochs));
    c.fare.batch = static_cast<int>(map.get_int("fare.batch", c.fare.batch));
    c.fare.lr = map.get_double("fare.lr", c.fare.lr);
    c.fare.sample_limit = static_cast<int>(map.get_int("fare.sample_limit", c.fare.sample_limit));

    c.align.aux_pairs = static_cast<int>(map.get_int("align.aux_pairs", c.align.aux_pairs));
    c.align.sv_cutoff = map.get_double("align.sv_cutoff", c.align.sv_cutoff);

    c.invert.lambda_tv = map.get_double("invert.lambda_tv", c.invert.lambda_tv);
    c.invert.lr = map.get_double("invert.lr", c.invert.lr);
    c.invert.clip_norm = map.get_double("invert.clip_norm", c.invert.clip_norm);
    c.invert.epochs = static_cast<int>(map.get_int("invert.epochs", c.invert.epochs));
    c.invert.init = map.get_string("invert.init", c.invert.init);
    c.invert.clip_mode = map.get_string("invert.clip_mode", c.invert.clip_mode);

    c.refine.base_channels =
        static_cast<int>(map.get_int("refine.base_channels", c.refine.base_channels));
    c.refine.train_steps = static_cast<int>(map.get_int("refine.train_steps", c.refine.train_steps));
    c.refine.schedule_steps =
        static_cast<int>(map.get_int("refine.schedule_steps", c.refine.schedule_steps));
    c.refine.sample_steps =
        static_cast<int>(map.get_int("refine.sample_steps", c.refine.sample_steps));
    c.refine.strength = map.get_double("refine.strength", c.refine.strength);
    c.refine.batch = static_cast<int>(map.get_int("refine.batch", c.refine.batch));
    c.refine.lr = map.get_double("refine.lr", c.refine.lr);
    c.refine.beta_min = map.get_double("refine.beta_min", c.refine.beta_min);
    c.refine.beta_max = map.get_double("refine.beta_max", c.refine.beta_max);
    c.refine.cond_drop = map.get_double("refine.cond_drop", c.refine.cond_drop);
    c.refine.adapter = map.get_string("refine.adapter", c.refine.adapter);

    c.fidelity.ssim_window =
        static_cast<int>(map.get_int("fidelity.ssim_window", c.fidelity.ssim_window));
    c.fidelity.ssim_sigma = map.get_double("fidelity.ssim_sigma", c.fidelity.ssim_sigma);
    c.fidelity.hs_sscd_min = map.get_double("fidelity.hs_sscd_min", c.fidelity.hs_sscd_min);
    c.fidelity.hs_lpips_max = map.get_double("fidelity.hs_lpips_max", c.fidelity.hs_lpips_max);
    c.fidelity.hs_ssim_min = map.get_double("fidelity.hs_ssim_min", c.fidelity.hs_ssim_min);
    c.fidelity.hs_cs_min = map.get_double("fidelity.hs_cs_min", c.fidelity.hs_cs_min);
    c.fidelity.descriptor_steps =
        static_cast<int>(map.get_int("fidelity.descriptor_steps", c.fidelity.descriptor_steps));
    c.fidelity.scorer_steps =
        static_cast<int>(map.get_int("fidelity.scorer_steps", c.fidelity.scorer_steps));

    c.mia.filter_sscd_max = map.get_double("mia.filter_sscd_max", c.mia.filter_sscd_max);
    c.mia.train_fraction = map.get_double("mia.train_fraction", c.mia.train_fraction);
    c.mia.tag = map.get_string("mia.tag", c.mia.tag);
    c.mia.rf_trees = static_cast<int>(map.get_int("mia.rf_trees", c.mia.rf_trees));
    c.mia.rf_max_depth = static_cast<int>(map.get_int("mia.rf_max_depth", c.mia.rf_max_depth));
    c.mia.permutations = static_cast<int>(map.get_int("mia.permutations", c.mia.permutations));

    c.memtheory.dim = static_cast<int>(map.get_int("memtheory.dim", c.memtheory.dim));
    c.memtheory.n_data = static_cast<int>(map.get_int("memtheory.n_data", c.memtheory.n_data));
    c.memtheory.n_gen = static_cast<int>(map.get_int("memtheory.n_gen", c.memtheory.n_gen));
    c.memtheory.eta = map.get_double("memtheory.eta", c.memtheory.eta);
    c.memtheory.kernel_variance =
        map.get_double("memtheory.kernel_variance", c.memtheory.kernel_variance);
    c.memtheory.mixtures = static_cast<int>(map.get_int("memtheory.mixtures", c.memtheory.mixtures));
    c.memtheory.regression_samples_per_level = static_cast<int>(map.get_int(
        "memtheory.regression_samples_per_level", c.memtheory.regression_samples_per_level));

    c.seed = static_cast<std::uint64_t>(map.get_int("seed", static_cast<long long>(c.seed)));
    c.threads = static_cast<int>(map.get_int("threads", c.threads));
    c.out_dir = map.get_string("out_dir", c.out_dir);
    c.eps_sweep = map.get_doubles("eps_sweep", c.eps_sweep);

    map.check_unknown_keys();

    require(c.corpus.height >= 2 && c.corpus.width >= 2, ErrorKind::config,
            "corpus image must be at least 2x2");
    require(c.corpus.channels == 3, ErrorKind::config, "corpus.channels must be 3");
    require(c.encoder.temperature_init > 0, ErrorKind::config,
            "encoder.temperature_init must be > 0");
    require(c.invert.lambda_tv >= 0 && c.invert.lr > 0 && c.invert.epochs >= 1,
            ErrorKind::config, "invalid inversion config");
    require(c.refine.strength > 0 && c.refine.strength <= 1, ErrorKind::config,
            "refine.strength must be in (0,1]");
    require(c.refine.sample_steps >= 1, ErrorKind::config,
            "refine.sample_steps must be >= 1");
    require(c.fare.pgd.epsilon >= 0 && c.fare.pgd.steps >= 1, ErrorKind::config,
            "invalid fare config");
    return c;
}

std::string ExperimentConfig::to_text() const {
    std::ostringstream out;
    auto kv = [&out](const std::string& key, const std::string& value) {
        out << key << " = " << value << "\n";
    };
    kv("corpus.height", fmt_int(corpus.height));
    kv("corpus.width", fmt_int(corpus.width));
    kv("corpus.channels", fmt_int(corpus.channels));
    kv("corpus.train_size", fmt_int(corpus.train_size));
    kv("corpus.test_size", fmt_int(corpus.test_size));
    kv("corpus.aux_size", fmt_int(corpus.aux_size));
    kv("corpus.nonmember_size", fmt_int(corpus.nonmember_size));
    kv("corpus.caption_slots", fmt_int(corpus.caption_slots));
    kv("corpus.noise_sigma", fmt_double(corpus.noise_sigma));
    kv("encoder.embed_dim", fmt_int(encoder.embed_dim));
    kv("encoder.char_embed_dim", fmt_int(encoder.char_embed_dim));
    kv("encoder.steps", fmt_int(encoder.steps));
    kv("encoder.batch", fmt_int(encoder.batch));
    kv("encoder.lr", fmt_double(encoder.lr));
    kv("encoder.weight_decay", fmt_double(encoder.weight_decay));
    kv("encoder.temperature_init", fmt_double(encoder.temperature_init));
    kv("fare.epsilon", fmt_double(fare.pgd.epsilon));
    kv("fare.pgd_steps", fmt_int(fare.pgd.steps));
    kv("fare.pgd_step_size", fmt_double(fare.pgd.step_size));
    kv("fare.random_start", fare.pgd.random_start ? "true" : "false");
    kv("fare.epochs", fmt_int(fare.epochs));
    kv("fare.batch", fmt_int(fare.batch));
    kv("fare.lr", fmt_double(fare.lr));
    kv("fare.sample_limit", fmt_int(fare.sample_limit));
    kv("align.aux_pairs", fmt_int(align.aux_pairs));
    kv("align.sv_cutoff", fmt_double(align.sv_cutoff));
    kv("invert.lambda_tv", fmt_double(invert.lambda_tv));
    kv("invert.lr", fmt_double(invert.lr));
    kv("invert.clip_norm", fmt_double(invert.clip_norm));
    kv("invert.epochs", fmt_int(invert.epochs));
    kv("invert.init", invert.init);
    kv("invert.clip_mode", invert.clip_mode);
    kv("refine.base_channels", fmt_int(refine.base_channels));
    kv("refine.train_steps", fmt_int(refine.train_steps));
    kv("refine.schedule_steps", fmt_int(refine.schedule_steps));
    kv("refine.sample_steps", fmt_int(refine.sample_steps));
    kv("refine.strength", fmt_double(refine.strength));
    kv("refine.batch", fmt_int(refine.batch));
    kv("refine.lr", fmt_double(refine.lr));
    kv("refine.beta_min", fmt_double(refine.beta_min));
    kv("refine.beta_max", fmt_double(refine.beta_max));
    kv("refine.cond_drop", fmt_double(refine.cond_drop));
    kv("refine.adapter", refine.adapter);
    kv("fidelity.ssim_window", fmt_int(fidelity.ssim_window));
    kv("fidelity.ssim_sigma", fmt_double(fidelity.ssim_sigma));
    kv("fidelity.hs_sscd_min", fmt_double(fidelity.hs_sscd_min));
    kv("fidelity.hs_lpips_max", fmt_double(fidelity.hs_lpips_max));
    kv("fidelity.hs_ssim_min", fmt_double(fidelity.hs_ssim_min));
    kv("fidelity.hs_cs_min", fmt_double(fidelity.hs_cs_min));
    kv("fidelity.descriptor_steps", fmt_int(fidelity.descriptor_steps));
    kv("fidelity.scorer_steps", fmt_int(fidelity.scorer_steps));
    kv("mia.filter_sscd_max", fmt_double(mia.filter_sscd_max));
    kv("mia.train_fraction", fmt_double(mia.train_fraction));
    kv("mia.tag", mia.tag);
    kv("mia.rf_trees", fmt_int(mia.rf_trees));
    kv("mia.rf_max_depth", fmt_int(mia.rf_max_depth));
    kv("mia.permutations", fmt_int(mia.permutations));
    kv("memtheory.dim", fmt_int(memtheory.dim));
    kv("memtheory.n_data", fmt_int(memtheory.n_data));
    kv("memtheory.n_gen", fmt_int(memtheory.n_gen));
    kv("memtheory.eta", fmt_double(memtheory.eta));
    kv("memtheory.kernel_variance", fmt_double(memtheory.kernel_variance));
    kv("memtheory.mixtures", fmt_int(memtheory.mixtures));
    kv("memtheory.regression_samples_per_level", fmt_int(memtheory.regression_samples_per_level));
    kv("seed", fmt_int(static_cast<long long>(seed)));
    kv("threads", fmt_int(threads));
    kv("out_dir", out_dir);
    std::string sweep;
    for (std::size_t i = 0; i < eps_sweep.size(); ++i) {
        if (i) sweep += ",";
        sweep += fmt_double(eps_sweep[i]);
    }
    kv("eps_sweep", sweep);
    return out.str();
}

}  // namespace leaky
