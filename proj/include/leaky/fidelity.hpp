#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "leaky/config.hpp"
#include "leaky/corpus.hpp"
#include "leaky/image.hpp"
#include "leaky/two_tower.hpp"

namespace leaky::fidelity {

struct HSThresholds {
    double sscd_min = 0.5;
    double lpips_max = 0.45;
    double ssim_min = 0.7;
    double cs_min = 0.7;
};

struct MetricVector {
    double ssim = 0.0;
    double lpips = 0.0;
    double cs = 0.0;
    double sscd = 0.0;
    bool hs = false;
    bool warn_circular_scorer = false;
};

bool hs_flag(double ssim, double lpips, double cs, double sscd,
             const HSThresholds& t);

// Mean local SSIM with a Gaussian window (Wang et al.), computed over valid
// window positions per channel and averaged.
double ssim(const Image& a, const Image& b, int window = 11, double sigma = 1.5,
            double c1 = 0.0001, double c2 = 0.0009);

// Deep-feature distance in the LPIPS construction: channel-unit-normalized
// encoder feature maps, squared differences averaged per layer, summed over
// layers with uniform weights.
double perceptual_distance(const Image& a, const Image& b,
                           const tower::EncoderParams& feature_net);

double clip_score(const Image& a, const Image& b, const tower::EncoderParams& scorer);

double sscd_score(const Image& a, const Image& b,
                  const tower::EncoderParams& descriptor_net);

struct MetricNets {
    const tower::EncoderParams* feature_net = nullptr;   // perceptual distance
    const tower::EncoderParams* scorer = nullptr;        // CLIP score
    const tower::EncoderParams* descriptor = nullptr;    // copy-detection score
    std::uint64_t scorer_hash = 0;
    std::uint64_t attacked_hash = 1;  // differing defaults: no spurious warning
};

MetricVector evaluate(const Image& reconstruction, const Image& original,
                      const MetricNets& nets, const HSThresholds& thresholds);

// Augmentation-invariant descriptor (toy SSCD stand-in): the image tower
// trained with a two-view InfoNCE over random crop/flip/jitter views.
tower::Checkpoint train_descriptor(const corpus::Manifest& manifest,
                                   const FidelityConfig& cfg,
                                   const EncoderConfig& enc_cfg,
                                   const CorpusConfig& corpus_cfg,
                                   std::uint64_t seed);

// The crop-and-rescale view used both in training and in tests.
Image augment_view(const Image& x, std::uint64_t seed);

}  // namespace leaky::fidelity
