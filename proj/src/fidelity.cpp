#include "leaky/fidelity.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "leaky/nn.hpp"
#include "leaky/rng.hpp"

namespace leaky::fidelity {

bool hs_flag(double ssim_v, double lpips_v, double cs_v, double sscd_v,
             const HSThresholds& t) {
    return sscd_v >= t.sscd_min && lpips_v <= t.lpips_max && ssim_v >= t.ssim_min &&
           cs_v >= t.cs_min;
}

// ---------------------------------------------------------------------------
// SSIM
// ---------------------------------------------------------------------------

namespace {

std::vector<double> gaussian_kernel(int window, double sigma) {
    std::vector<double> k(window);
    const double mid = (window - 1) / 2.0;
    double sum = 0.0;
    for (int i = 0; i < window; ++i) {
        const double d = i - mid;
        k[i] = std::exp(-d * d / (2.0 * sigma * sigma));
        sum += k[i];
    }
    for (double& v : k) v /= sum;
    return k;
}

// Separable valid-mode filtering of one channel plane.
std::vector<double> filter_valid(const std::vector<double>& plane, int h, int w,
                                 const std::vector<double>& k) {
    const int window = static_cast<int>(k.size());
    const int oh = h - window + 1, ow = w - window + 1;
    std::vector<double> rows(static_cast<std::size_t>(h) * ow);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < ow; ++x) {
            double s = 0.0;
            for (int i = 0; i < window; ++i) s += k[i] * plane[y * w + x + i];
            rows[y * ow + x] = s;
        }
    std::vector<double> out(static_cast<std::size_t>(oh) * ow);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            double s = 0.0;
            for (int i = 0; i < window; ++i) s += k[i] * rows[(y + i) * ow + x];
            out[y * ow + x] = s;
        }
    return out;
}

}  // namespace

double ssim(const Image& a, const Image& b, int window, double sigma, double c1,
            double c2) {
    require(a.same_shape(b), ErrorKind::validation, "ssim: shape mismatch");
    require(window % 2 == 1, ErrorKind::validation, "ssim: window must be odd");
    require(window <= std::min(a.h, a.w), ErrorKind::validation,
            "ssim: window larger than image");
    const auto k = gaussian_kernel(window, sigma);
    const int oh = a.h - window + 1, ow = a.w - window + 1;

    double total = 0.0;
    for (int ch = 0; ch < a.c; ++ch) {
        const std::size_t off = static_cast<std::size_t>(ch) * a.h * a.w;
        std::vector<double> pa(a.data.begin() + off, a.data.begin() + off + a.h * a.w);
        std::vector<double> pb(b.data.begin() + off, b.data.begin() + off + a.h * a.w);
        std::vector<double> paa(pa.size()), pbb(pb.size()), pab(pa.size());
        for (std::size_t i = 0; i < pa.size(); ++i) {
            paa[i] = pa[i] * pa[i];
            pbb[i] = pb[i] * pb[i];
            pab[i] = pa[i] * pb[i];
        }
        const auto mu_a = filter_valid(pa, a.h, a.w, k);
        const auto mu_b = filter_valid(pb, a.h, a.w, k);
        const auto m_aa = filter_valid(paa, a.h, a.w, k);
        const auto m_bb = filter_valid(pbb, a.h, a.w, k);
        const auto m_ab = filter_valid(pab, a.h, a.w, k);
        for (int i = 0; i < oh * ow; ++i) {
            const double va = m_aa[i] - mu_a[i] * mu_a[i];
            const double vb = m_bb[i] - mu_b[i] * mu_b[i];
            const double cov = m_ab[i] - mu_a[i] * mu_b[i];
            const double num = (2 * mu_a[i] * mu_b[i] + c1) * (2 * cov + c2);
            const double den =
                (mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (va + vb + c2);
            total += num / den;
        }
    }
    return total / static_cast<double>(a.c * oh * ow);
}

// ---------------------------------------------------------------------------
// Deep-feature metrics
// ---------------------------------------------------------------------------

namespace {

// Channel-unit-normalized squared difference averaged over positions.
double layer_distance(const std::vector<double>& fa, const std::vector<double>& fb,
                      int channels) {
    const std::size_t hw = fa.size() / channels;
    double total = 0.0;
    for (std::size_t p = 0; p < hw; ++p) {
        double na = 1e-10, nb = 1e-10;
        for (int ch = 0; ch < channels; ++ch) {
            na += fa[ch * hw + p] * fa[ch * hw + p];
            nb += fb[ch * hw + p] * fb[ch * hw + p];
        }
        na = std::sqrt(na);
        nb = std::sqrt(nb);
        for (int ch = 0; ch < channels; ++ch) {
            const double d = fa[ch * hw + p] / na - fb[ch * hw + p] / nb;
            total += d * d;
        }
    }
    return total / static_cast<double>(hw);
}

}  // namespace

double perceptual_distance(const Image& a, const Image& b,
                           const tower::EncoderParams& feature_net) {
    require(a.same_shape(b), ErrorKind::validation,
            "perceptual_distance: shape mismatch");
    tower::ImageCache ca, cb;
    tower::encode_image_cached(feature_net, a, ca);
    tower::encode_image_cached(feature_net, b, cb);
    const auto& t = feature_net.image;
    double d = layer_distance(ca.a1, cb.a1, t.c1);
    d += layer_distance(ca.a2, cb.a2, t.c2);
    d += layer_distance(ca.a3, cb.a3, t.c3);
    return d;
}

double clip_score(const Image& a, const Image& b, const tower::EncoderParams& scorer) {
    require(a.same_shape(b), ErrorKind::validation, "clip_score: shape mismatch");
    const auto ea = tower::encode_image(scorer, a);
    const auto eb = tower::encode_image(scorer, b);
    return nn::dot(ea, eb);  // embeddings are unit-norm
}

double sscd_score(const Image& a, const Image& b,
                  const tower::EncoderParams& descriptor_net) {
    require(a.same_shape(b), ErrorKind::validation, "sscd_score: shape mismatch");
    const auto ea = tower::encode_image(descriptor_net, a);
    const auto eb = tower::encode_image(descriptor_net, b);
    return nn::dot(ea, eb);
}

MetricVector evaluate(const Image& reconstruction, const Image& original,
                      const MetricNets& nets, const HSThresholds& thresholds) {
    require(nets.feature_net && nets.scorer && nets.descriptor,
            ErrorKind::dependency, "evaluate: metric networks missing");
    MetricVector m;
    m.ssim = ssim(reconstruction, original);
    m.lpips = perceptual_distance(reconstruction, original, *nets.feature_net);
    m.cs = clip_score(reconstruction, original, *nets.scorer);
    m.sscd = sscd_score(reconstruction, original, *nets.descriptor);
    m.warn_circular_scorer = nets.scorer_hash == nets.attacked_hash;

    require(m.ssim >= -1.0 - 1e-9 && m.ssim <= 1.0 + 1e-9, ErrorKind::numerical,
            "ssim out of range");
    require(m.cs >= -1.0 - 1e-9 && m.cs <= 1.0 + 1e-9, ErrorKind::numerical,
            "clip score out of range");
    require(m.sscd >= -1.0 - 1e-9 && m.sscd <= 1.0 + 1e-9, ErrorKind::numerical,
            "sscd out of range");
    require(m.lpips >= 0.0, ErrorKind::numerical, "lpips negative");

    m.hs = hs_flag(m.ssim, m.lpips, m.cs, m.sscd, thresholds);
    return m;
}

// ---------------------------------------------------------------------------
// Descriptor training (two-view InfoNCE)
// ---------------------------------------------------------------------------

Image augment_view(const Image& x, std::uint64_t seed) {
    Rng rng(derive_seed(seed, "aug"));
    // crop scale in [0.6, 1.0], random corner, resized back
    const double scale = rng.uniform(0.6, 1.0);
    const int ch = std::max(2, static_cast<int>(std::lround(x.h * scale)));
    const int cw = std::max(2, static_cast<int>(std::lround(x.w * scale)));
    const int y0 = static_cast<int>(rng.uniform_index(x.h - ch + 1));
    const int x0 = static_cast<int>(rng.uniform_index(x.w - cw + 1));
    Image view = resize_bilinear(crop(x, y0, x0, ch, cw), x.h, x.w);
    if (rng.uniform() < 0.5) view = hflip(view);
    const double bright = rng.uniform(-0.08, 0.08);
    const double noise = 0.01;
    for (double& v : view.data) v += bright + noise * rng.normal();
    clamp01(view);
    return view;
}

tower::Checkpoint train_descriptor(const corpus::Manifest& manifest,
                                   const FidelityConfig& cfg,
                                   const EncoderConfig& enc_cfg,
                                   const CorpusConfig& corpus_cfg,
                                   std::uint64_t seed) {
    auto pool = manifest.split_indices("aux");
    if (pool.empty()) pool = manifest.split_indices("train");
    if (pool.empty())
        for (std::size_t i = 0; i < manifest.records.size(); ++i) pool.push_back(i);
    require(pool.size() >= 2, ErrorKind::config, "train_descriptor: need >= 2 images");

    tower::Checkpoint ckpt;
    Rng init_rng = substream(seed, "descriptor.init");
    ckpt.params.init(corpus_cfg.height, corpus_cfg.width, corpus_cfg.channels,
                     enc_cfg.embed_dim, enc_cfg.char_embed_dim,
                     enc_cfg.temperature_init, init_rng);
    ckpt.role = "original";
    ckpt.step_count = cfg.descriptor_steps;

    // Only the image tower trains; the text tower stays at init.
    auto params = ckpt.params.image_params();
    params.add("logit_scale", ckpt.params.logit_scale, ckpt.params.g_logit_scale);
    nn::AdamW opt;
    opt.lr = enc_cfg.lr;

    Rng rng = substream(seed, "descriptor.train");
    const int batch = std::min<int>(enc_cfg.batch, static_cast<int>(pool.size()));
    for (int step = 0; step < cfg.descriptor_steps; ++step) {
        std::set<std::size_t> chosen;
        while (static_cast<int>(chosen.size()) < batch)
            chosen.insert(pool[rng.uniform_index(pool.size())]);

        std::vector<Image> va, vb;
        for (std::size_t idx : chosen) {
            va.push_back(augment_view(manifest.records[idx].image, rng.next_u64()));
            vb.push_back(augment_view(manifest.records[idx].image, rng.next_u64()));
        }

        const std::size_t n = va.size();
        std::vector<tower::ImageCache> cas(n), cbs(n);
        std::vector<tower::Embedding> u(n), v(n);
        for (std::size_t i = 0; i < n; ++i) {
            u[i] = tower::encode_image_cached(ckpt.params, va[i], cas[i]);
            v[i] = tower::encode_image_cached(ckpt.params, vb[i], cbs[i]);
        }
        const double scale = std::exp(ckpt.params.logit_scale[0]);
        std::vector<double> sims(n * n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                sims[i * n + j] = scale * nn::dot(u[i], v[j]);

        params.zero_grad();
        std::vector<double> g_sims(n * n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            double mx = -1e300;
            for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, sims[i * n + j]);
            double z = 0.0;
            for (std::size_t j = 0; j < n; ++j) z += std::exp(sims[i * n + j] - mx);
            for (std::size_t j = 0; j < n; ++j) {
                const double p = std::exp(sims[i * n + j] - mx) / z;
                g_sims[i * n + j] = (p - (i == j ? 1.0 : 0.0)) / static_cast<double>(n);
            }
        }
        double g_logit = 0.0;
        std::vector<tower::Embedding> gu(n, tower::Embedding(u[0].size(), 0.0));
        std::vector<tower::Embedding> gv(n, tower::Embedding(v[0].size(), 0.0));
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                const double g = g_sims[i * n + j];
                if (g == 0.0) continue;
                g_logit += g * sims[i * n + j];
                for (std::size_t kk = 0; kk < u[i].size(); ++kk) {
                    gu[i][kk] += g * scale * v[j][kk];
                    gv[j][kk] += g * scale * u[i][kk];
                }
            }
        ckpt.params.g_logit_scale[0] += g_logit;
        for (std::size_t i = 0; i < n; ++i) {
            tower::encode_image_backward(ckpt.params, va[i], cas[i], gu[i], nullptr, true);
            tower::encode_image_backward(ckpt.params, vb[i], cbs[i], gv[i], nullptr, true);
        }
        opt.step(params);
        ckpt.params.logit_scale[0] = std::min(ckpt.params.logit_scale[0], 4.605170185988091);
    }
    return ckpt;
}

}  // namespace leaky::fidelity
