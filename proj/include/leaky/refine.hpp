#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "leaky/config.hpp"
#include "leaky/corpus.hpp"
#include "leaky/image.hpp"
#include "leaky/nn.hpp"
#include "leaky/two_tower.hpp"

namespace leaky::diffusion {

struct DiffusionSchedule {
    int n_steps = 1000;
    std::vector<double> beta;       // beta[0] = 0 sentinel, beta[1..n]
    std::vector<double> alpha;      // 1 - beta
    std::vector<double> alpha_bar;  // cumulative product, alpha_bar[0] = 1

    static DiffusionSchedule linear(int n, double beta_min, double beta_max);
    void validate() const;  // betas in (0,1), alpha_bar strictly decreasing
};

// q(x_t | x_0): sqrt(abar_t) x + sqrt(1 - abar_t) eps. t = 0 returns x
// exactly. eps_out receives the drawn noise when non-null.
Image add_noise(const Image& x, int t, const DiffusionSchedule& schedule,
                std::uint64_t seed, Image* eps_out = nullptr);

// One ancestral reverse step given a noise estimate.
Image reverse_step(const Image& x_t, const Image& eps_hat, double alpha_t,
                   double beta_t, double alpha_bar_t);

// Small U-shaped epsilon-prediction network, FiLM-conditioned on a sinusoidal
// time embedding plus an optional conditioning vector.
struct DenoiserParams {
    int h = 32, w = 32, c = 3;
    int base = 10;       // channel width
    int cond_dim = 64;   // conditioning vector size
    int time_dim = 16;
    bool trained = false;
    DiffusionSchedule schedule;

    nn::Conv2d enc, down, mid, up, out;
    nn::Dense film;  // (time_dim + cond_dim) -> 4 * base

    void init(int h_, int w_, int c_, int base_, int cond_dim_,
              const DiffusionSchedule& schedule_, Rng& rng);
    nn::ParamSet all_params();
};

struct DenoiserCache;

Image denoise_eps(const DenoiserParams& params, const Image& x_t, int t,
                  const std::vector<double>& cond);

// Mean squared epsilon-prediction error of one sample; accumulates parameter
// gradients. Exposed for gradient checks.
double denoiser_loss_grad(DenoiserParams& params, const Image& x_t, int t,
                          const std::vector<double>& cond, const Image& eps_target);

struct DenoiserReport {
    std::vector<double> loss_curve;
    double initial_loss = 0.0;
    double final_loss = 0.0;
};

DenoiserParams train_denoiser(const corpus::Manifest& manifest,
                              const DiffusionSchedule& schedule,
                              const RefineConfig& cfg,
                              const tower::EncoderParams* cond_encoder,
                              std::uint64_t seed, DenoiserReport* report = nullptr);

// SDEdit: noise the reconstruction to round(strength * sample_steps) of a
// respaced schedule, then run ancestral reverse steps down to t = 0.
Image refine(const Image& x_hat, const DenoiserParams& denoiser,
             const std::vector<double>& cond, const RefineConfig& cfg,
             std::uint64_t seed);

// Unconditional / conditioned sampling from pure noise (the "is it just
// sampling?" comparison row).
Image sample(const DenoiserParams& denoiser, const std::vector<double>& cond,
             int sample_steps, std::uint64_t seed);

void save_denoiser(const DenoiserParams& params, const std::string& path);
DenoiserParams load_denoiser(const std::string& path);

// Narrow out-of-process-friendly refiner contract: PNG bytes in/out plus a
// JSON parameter block.
class RefinerAdapter {
  public:
    virtual ~RefinerAdapter() = default;
    virtual std::string name() const = 0;
    virtual Image run(const Image& input, const std::vector<double>& cond,
                      double strength, int steps, std::uint64_t seed) = 0;
};

void register_refiner(std::shared_ptr<RefinerAdapter> adapter);
void unregister_refiner(const std::string& name);
// Throws a capability error when the adapter is not registered.
std::shared_ptr<RefinerAdapter> get_refiner(const std::string& name);

Image external_refiner(const std::string& adapter_name, const Image& x_hat,
                       const std::vector<double>& cond, double strength, int steps,
                       std::uint64_t seed);

// Serialization helpers for the adapter contract (PNG + JSON block).
std::string refine_request_json(const std::vector<double>& cond, double strength,
                                int steps, std::uint64_t seed);

}  // namespace leaky::diffusion
