#pragma once

#include <cstdint>
#include <vector>

#include "leaky/config.hpp"
#include "leaky/corpus.hpp"
#include "leaky/image.hpp"
#include "leaky/two_tower.hpp"

namespace leaky::robust {

struct PgdResult {
    Image z;                         // best-so-far iterate
    double objective = 0.0;          // || f(z) - target ||^2 at z
    std::vector<double> trajectory;  // best-so-far objective after each step
};

// L-inf PGD ascent on || f_I(z) - target ||^2 with sign-gradient steps.
// Every iterate is projected into the eps box around x intersected with
// [0,1]; the returned iterate is the best objective seen.
PgdResult pgd_perturb(const tower::EncoderParams& params, const Image& x,
                      const tower::Embedding& target, const PgdConfig& cfg,
                      std::uint64_t seed);

struct FareReport {
    double heldout_loss_initial = 0.0;
    double heldout_loss_final = 0.0;
    double clean_drift_mean = 0.0;  // || f_FT(x) - f_org(x) || on clean held-out x
};

// FARE outer loop: adversarial examples against the frozen original encoder,
// image tower fine-tuned to pin them back to f_org's clean embeddings.
tower::Checkpoint fare_finetune(const tower::Checkpoint& start,
                                const corpus::Manifest& manifest,
                                const FareConfig& cfg, std::uint64_t seed,
                                FareReport* report = nullptr, int threads = 1);

struct SmoothnessReport {
    std::vector<double> norms_a, norms_b;
    double mean_a = 0.0, var_a = 0.0;
    double mean_b = 0.0, var_b = 0.0;
};

// Distribution of || grad_x (1 - cos(f(x), u)) || over probe pairs, for two
// parameter sets (before/after fine-tuning).
SmoothnessReport gradient_smoothness_report(
    const tower::EncoderParams& params_a, const tower::EncoderParams& params_b,
    const std::vector<std::pair<const Image*, const tower::Embedding*>>& probes);

std::string smoothness_csv(const SmoothnessReport& report);

}  // namespace leaky::robust
