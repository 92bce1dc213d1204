#include "leaky/robustify.hpp"

#include <algorithm>
#include <cmath>

#include "leaky/csv.hpp"
#include "leaky/nn.hpp"
#include "leaky/parallel.hpp"
#include "leaky/rng.hpp"

namespace leaky::robust {

namespace {

double embedding_sqdist(const tower::Embedding& a, const tower::Embedding& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

// objective and its input gradient for || f(z) - target ||^2
double fare_point_loss(const tower::EncoderParams& params, const Image& z,
                       const tower::Embedding& target, Image* gz) {
    tower::ImageCache cache;
    const auto emb = tower::encode_image_cached(params, z, cache);
    const double obj = embedding_sqdist(emb, target);
    if (gz) {
        tower::Embedding g_emb(emb.size());
        for (std::size_t i = 0; i < emb.size(); ++i) g_emb[i] = 2.0 * (emb[i] - target[i]);
        tower::encode_image_backward(const_cast<tower::EncoderParams&>(params), z,
                                     cache, g_emb, gz, false);
    }
    return obj;
}

}  // namespace

PgdResult pgd_perturb(const tower::EncoderParams& params, const Image& x,
                      const tower::Embedding& target, const PgdConfig& cfg,
                      std::uint64_t seed) {
    require(cfg.epsilon >= 0, ErrorKind::config, "pgd: epsilon must be >= 0");
    require(cfg.steps >= 1, ErrorKind::config, "pgd: steps must be >= 1");
    require(in_unit_range(x), ErrorKind::validation, "pgd: input outside [0,1]");
    const double eps = cfg.epsilon;
    const double step =
        cfg.step_size > 0 ? cfg.step_size : std::max(eps / 4.0, 0.0);

    auto project = [&](Image& z) {
        for (std::size_t i = 0; i < z.data.size(); ++i) {
            const double lo = std::max(0.0, x.data[i] - eps);
            const double hi = std::min(1.0, x.data[i] + eps);
            z.data[i] = std::clamp(z.data[i], lo, hi);
        }
    };

    Image z = x;
    if (cfg.random_start && eps > 0) {
        Rng rng = substream(seed, "pgd.start");
        for (double& v : z.data) v += rng.uniform(-eps, eps);
        project(z);
    }

    PgdResult best;
    best.z = z;
    best.objective = fare_point_loss(params, z, target, nullptr);
    best.trajectory.reserve(cfg.steps);

    for (int s = 0; s < cfg.steps; ++s) {
        Image gz;
        fare_point_loss(params, z, target, &gz);
        // Sign-gradient ascent; a zero-gradient plateau leaves the iterate
        // unchanged.
        for (std::size_t i = 0; i < z.data.size(); ++i) {
            const double g = gz.data[i];
            if (g > 0) z.data[i] += step;
            else if (g < 0) z.data[i] -= step;
        }
        project(z);
        const double obj = fare_point_loss(params, z, target, nullptr);
        if (obj > best.objective) {
            best.objective = obj;
            best.z = z;
        }
        best.trajectory.push_back(best.objective);
    }
    return best;
}

tower::Checkpoint fare_finetune(const tower::Checkpoint& start,
                                const corpus::Manifest& manifest,
                                const FareConfig& cfg, std::uint64_t seed,
                                FareReport* report, int threads) {
    require(start.role == "original", ErrorKind::config,
            "fare_finetune: reference checkpoint must have role 'original'");

    auto pool = manifest.split_indices("aux");
    if (pool.empty()) pool = manifest.split_indices("train");
    require(!pool.empty(), ErrorKind::config, "fare_finetune: no aux/train images");

    // Held-out probes come from the tail of the pool; training uses the head.
    const int heldout_n = std::min<int>(32, static_cast<int>(pool.size()) / 4 + 1);
    std::vector<std::size_t> heldout(pool.end() - heldout_n, pool.end());
    pool.resize(pool.size() - heldout_n);
    if (cfg.sample_limit > 0 && static_cast<int>(pool.size()) > cfg.sample_limit)
        pool.resize(cfg.sample_limit);
    require(!pool.empty(), ErrorKind::config, "fare_finetune: empty training pool");

    tower::Checkpoint out;
    out.params = start.params;  // f_FT starts from f_org
    out.role = "finetuned";
    out.config_hash = start.config_hash;
    const tower::EncoderParams& f_org = start.params;  // frozen reference

    // Clean reference embeddings are fixed, compute them once.
    std::vector<tower::Embedding> org_emb(manifest.records.size());
    auto embed_of = [&](std::size_t idx) -> const tower::Embedding& {
        if (org_emb[idx].empty())
            org_emb[idx] = tower::encode_image(f_org, manifest.records[idx].image);
        return org_emb[idx];
    };
    for (std::size_t idx : pool) embed_of(idx);
    for (std::size_t idx : heldout) embed_of(idx);

    auto heldout_loss = [&](const tower::EncoderParams& params,
                            std::uint64_t eval_seed) {
        std::vector<double> losses(heldout.size());
        parallel_for(
            heldout.size(),
            [&](std::size_t i) {
                const std::size_t idx = heldout[i];
                const auto adv =
                    pgd_perturb(params, manifest.records[idx].image, org_emb[idx],
                                cfg.pgd, derive_seed(eval_seed, "fare.eval", idx));
                losses[i] = adv.objective;
            },
            threads);
        double s = 0.0;
        for (double v : losses) s += v;
        return s / static_cast<double>(losses.size());
    };

    FareReport rep;
    rep.heldout_loss_initial = heldout_loss(out.params, derive_seed(seed, "fare.h0"));

    auto params = out.params.image_params();
    nn::AdamW opt;
    opt.lr = cfg.lr;

    Rng order_rng = substream(seed, "fare.order");
    long long steps = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<std::size_t> order = pool;
        order_rng.shuffle(order);
        for (std::size_t b = 0; b < order.size(); b += cfg.batch) {
            const std::size_t e = std::min(order.size(), b + cfg.batch);
            std::vector<Image> adv(e - b);
            // Inner maximization is independent per sample.
            parallel_for(
                e - b,
                [&](std::size_t i) {
                    const std::size_t idx = order[b + i];
                    adv[i] = pgd_perturb(out.params, manifest.records[idx].image,
                                         org_emb[idx], cfg.pgd,
                                         derive_seed(seed, "fare.pgd",
                                                     (static_cast<std::uint64_t>(epoch) << 32) ^ idx))
                                 .z;
                },
                threads);
            params.zero_grad();
            for (std::size_t i = 0; i < adv.size(); ++i) {
                const std::size_t idx = order[b + i];
                tower::ImageCache cache;
                const auto emb = tower::encode_image_cached(out.params, adv[i], cache);
                tower::Embedding g_emb(emb.size());
                const double inv_n = 1.0 / static_cast<double>(adv.size());
                for (std::size_t k = 0; k < emb.size(); ++k)
                    g_emb[k] = 2.0 * (emb[k] - org_emb[idx][k]) * inv_n;
                tower::encode_image_backward(out.params, adv[i], cache, g_emb,
                                             nullptr, true);
            }
            opt.step(params);
            ++steps;
        }
    }
    out.step_count = steps;

    rep.heldout_loss_final = heldout_loss(out.params, derive_seed(seed, "fare.h1"));
    double drift = 0.0;
    for (std::size_t idx : heldout) {
        const auto ft = tower::encode_image(out.params, manifest.records[idx].image);
        drift += std::sqrt(embedding_sqdist(ft, org_emb[idx]));
    }
    rep.clean_drift_mean = drift / static_cast<double>(heldout.size());
    if (report) *report = rep;
    return out;
}

SmoothnessReport gradient_smoothness_report(
    const tower::EncoderParams& params_a, const tower::EncoderParams& params_b,
    const std::vector<std::pair<const Image*, const tower::Embedding*>>& probes) {
    require(probes.size() >= 20, ErrorKind::statistics,
            "gradient_smoothness_report: need at least 20 probes");

    auto grad_norm = [](const tower::EncoderParams& params, const Image& x,
                        const tower::Embedding& u) {
        tower::ImageCache cache;
        const auto emb = tower::encode_image_cached(params, x, cache);
        const double un = nn::norm2(u);
        require(un > 1e-12, ErrorKind::validation, "smoothness probe target is zero");
        tower::Embedding g_emb(emb.size());
        for (std::size_t i = 0; i < emb.size(); ++i) g_emb[i] = -u[i] / un;
        Image gx;
        tower::encode_image_backward(const_cast<tower::EncoderParams&>(params), x,
                                     cache, g_emb, &gx, false);
        double s = 0.0;
        for (double v : gx.data) s += v * v;
        return std::sqrt(s);
    };

    SmoothnessReport rep;
    for (const auto& [x, u] : probes) {
        rep.norms_a.push_back(grad_norm(params_a, *x, *u));
        rep.norms_b.push_back(grad_norm(params_b, *x, *u));
    }
    auto stats = [](const std::vector<double>& v, double& mean, double& var) {
        mean = 0.0;
        for (double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        var = 0.0;
        for (double x : v) var += (x - mean) * (x - mean);
        var /= static_cast<double>(v.size() - 1);
    };
    stats(rep.norms_a, rep.mean_a, rep.var_a);
    stats(rep.norms_b, rep.mean_b, rep.var_b);
    return rep;
}

std::string smoothness_csv(const SmoothnessReport& report) {
    Table t;
    t.schema = "leakyclip.smoothness.v1";
    t.header = {"probe_id", "grad_norm", "encoder_tag"};
    for (std::size_t i = 0; i < report.norms_a.size(); ++i)
        t.add_row({fmt_int(static_cast<long long>(i)), fmt_double(report.norms_a[i]), "a"});
    for (std::size_t i = 0; i < report.norms_b.size(); ++i)
        t.add_row({fmt_int(static_cast<long long>(i)), fmt_double(report.norms_b[i]), "b"});
    return t.to_csv();
}

}  // namespace leaky::robust
