#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "leaky/align.hpp"
#include "leaky/config.hpp"
#include "leaky/image.hpp"
#include "leaky/two_tower.hpp"

namespace leaky::inversion {

// Anisotropic L1 total variation; returns 0 and sets *degenerate for 1x1
// images. Subgradient at ties is 0.
double tv_loss(const Image& x, Image* grad = nullptr, bool* degenerate = nullptr);

struct Objective {
    double loss = 0.0;
    double cos_term = 0.0;
    double tv_term = 0.0;
};

// loss = 1 - cos(f(x), target) + lambda * TV(x). Gradient w.r.t. x is written
// into *grad when non-null. Near-zero targets are rejected (the apply_map
// M = 0 case surfaces here).
Objective inversion_objective(const tower::EncoderParams& params, const Image& x,
                              const std::vector<double>& target, double lambda,
                              Image* grad = nullptr);

enum class TargetMode { baseline, aligned };

std::vector<double> make_target(TargetMode mode, const std::vector<double>& u_t,
                                const align::AlignmentMap* map = nullptr);

struct TraceRow {
    double loss = 0.0, cos_term = 0.0, tv_term = 0.0, grad_norm = 0.0;
};

struct InversionTrace {
    std::vector<TraceRow> rows;
    Image final_image;
    Image best_image;
    double best_loss = 0.0;
    bool aborted = false;  // NaN encountered; rows hold the diagnostic prefix
};

// Gradient descent in an unconstrained logit space squashed into [0,1] by a
// sigmoid, AdamW steps, global-norm gradient clipping. Deterministic per
// (params, target, cfg, seed).
InversionTrace invert(const tower::EncoderParams& params,
                      const std::vector<double>& target, const InvertConfig& cfg,
                      std::uint64_t seed);

std::string trace_csv(const InversionTrace& trace);

}  // namespace leaky::inversion
