#include "leaky/memtheory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <boost/math/distributions/students_t.hpp>

#include "leaky/csv.hpp"
#include "leaky/rng.hpp"

namespace leaky::memtheory {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

std::vector<double> sample_on_sphere(const std::vector<double>& center, Rng& rng) {
    std::vector<double> z(center.size());
    double norm_sq = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        z[i] = center[i] + rng.normal();
        norm_sq += z[i] * z[i];
    }
    const double inv = 1.0 / std::sqrt(std::max(norm_sq, 1e-300));
    for (double& v : z) v *= inv;
    return z;
}

double norm_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

struct DistStat {
    double mean = 0.0;
    double se = 0.0;
};

// mean_i mean_z || z - x_i ||^2 in O((n_gen + n_data) m) via the expansion
// mean||z||^2 - 2 zbar . xbar + mean||x||^2, with standard errors from both
// sample directions.
DistStat mean_sq_dist(const std::vector<std::vector<double>>& gen,
                      const std::vector<std::vector<double>>& data) {
    require(!gen.empty() && !data.empty(), ErrorKind::validation,
            "mean_sq_dist: empty sample set");
    const std::size_t m = gen[0].size();
    std::vector<double> zbar(m, 0.0), xbar(m, 0.0);
    double z_sq = 0.0, x_sq = 0.0;
    for (const auto& z : gen) {
        for (std::size_t i = 0; i < m; ++i) {
            zbar[i] += z[i];
            z_sq += z[i] * z[i];
        }
    }
    for (const auto& x : data) {
        for (std::size_t i = 0; i < m; ++i) {
            xbar[i] += x[i];
            x_sq += x[i] * x[i];
        }
    }
    const double ng = static_cast<double>(gen.size());
    const double nd = static_cast<double>(data.size());
    for (double& v : zbar) v /= ng;
    for (double& v : xbar) v /= nd;
    z_sq /= ng;
    x_sq /= nd;

    double dot_zx = 0.0;
    for (std::size_t i = 0; i < m; ++i) dot_zx += zbar[i] * xbar[i];

    DistStat out;
    out.mean = z_sq - 2.0 * dot_zx + x_sq;

    // per-generated-sample statistic a_z = ||z||^2 - 2 z.xbar + mean||x||^2
    double var_gen = 0.0;
    for (const auto& z : gen) {
        double zz = 0.0, zx = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            zz += z[i] * z[i];
            zx += z[i] * xbar[i];
        }
        const double a = zz - 2.0 * zx + x_sq;
        var_gen += (a - out.mean) * (a - out.mean);
    }
    var_gen /= std::max(1.0, ng - 1.0) * ng;

    double var_data = 0.0;
    for (const auto& x : data) {
        double xx = 0.0, zx = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            xx += x[i] * x[i];
            zx += zbar[i] * x[i];
        }
        const double c = z_sq - 2.0 * zx + xx;
        var_data += (c - out.mean) * (c - out.mean);
    }
    var_data /= std::max(1.0, nd - 1.0) * nd;

    out.se = std::sqrt(var_gen + var_data);
    return out;
}

MomentSummary moments_from_samples(const std::vector<std::vector<double>>& mix,
                                   const std::vector<std::vector<double>>& comp) {
    const std::size_t m = mix[0].size();
    MomentSummary ms;
    ms.mu.assign(m, 0.0);
    ms.mu_k.assign(m, 0.0);
    double mix_sq = 0.0, comp_sq = 0.0;
    for (const auto& z : mix) {
        for (std::size_t i = 0; i < m; ++i) ms.mu[i] += z[i];
        for (double v : z) mix_sq += v * v;
    }
    for (const auto& z : comp) {
        for (std::size_t i = 0; i < m; ++i) ms.mu_k[i] += z[i];
        for (double v : z) comp_sq += v * v;
    }
    for (double& v : ms.mu) v /= static_cast<double>(mix.size());
    for (double& v : ms.mu_k) v /= static_cast<double>(comp.size());
    mix_sq /= static_cast<double>(mix.size());
    comp_sq /= static_cast<double>(comp.size());
    const double mu_norm = norm_of(ms.mu), mu_k_norm = norm_of(ms.mu_k);
    ms.tr_sigma = mix_sq - mu_norm * mu_norm;
    ms.tr_sigma_k = comp_sq - mu_k_norm * mu_k_norm;
    ms.mu_dist_sq = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const double d = ms.mu[i] - ms.mu_k[i];
        ms.mu_dist_sq += d * d;
    }
    return ms;
}

}  // namespace

void MixtureSpec::validate() const {
    require(dim >= 2, ErrorKind::validation, "mixture: dim must be >= 2");
    require(!components.empty(), ErrorKind::validation, "mixture: no components");
    double total = 0.0;
    bool any_positive = false;
    for (const auto& c : components) {
        // zero weights are tolerated as degenerate components so a
        // two-component spec with weights (1, 0) behaves as single-component
        require(c.weight >= 0.0 && c.weight <= 1.0, ErrorKind::validation,
                "mixture: weight outside [0,1]");
        if (c.weight > 0.0) any_positive = true;
        require(static_cast<int>(c.center.size()) == dim, ErrorKind::validation,
                "mixture: center dimension mismatch");
        total += c.weight;
    }
    require(any_positive, ErrorKind::validation, "mixture: all weights zero");
    require(std::abs(total - 1.0) <= 1e-12, ErrorKind::validation,
            "mixture: weights must sum to 1");
}

std::vector<std::vector<double>> sample_component(const MixtureSpec& spec, int k,
                                                  int n, std::uint64_t seed) {
    spec.validate();
    require(k >= 0 && k < static_cast<int>(spec.components.size()),
            ErrorKind::validation, "sample_component: bad index");
    require(n >= 1, ErrorKind::validation, "sample_component: n must be >= 1");
    Rng rng(derive_seed(seed, "mixture.component", static_cast<std::uint64_t>(k)));
    std::vector<std::vector<double>> out;
    out.reserve(n);
    for (int i = 0; i < n; ++i)
        out.push_back(sample_on_sphere(spec.components[k].center, rng));
    return out;
}

std::vector<std::vector<double>> sample_mixture(const MixtureSpec& spec, int n,
                                                std::uint64_t seed) {
    spec.validate();
    require(n >= 1, ErrorKind::validation, "sample_mixture: n must be >= 1");
    Rng rng(derive_seed(seed, "mixture.full"));
    std::vector<std::vector<double>> out;
    out.reserve(n);
    for (int i = 0; i < n; ++i) {
        double u = rng.uniform();
        std::size_t pick = 0;
        for (; pick + 1 < spec.components.size(); ++pick) {
            if (u < spec.components[pick].weight) break;
            u -= spec.components[pick].weight;
        }
        // numeric fallthrough: never land on a zero-weight tail component
        while (pick > 0 && spec.components[pick].weight <= 0.0) --pick;
        out.push_back(sample_on_sphere(spec.components[pick].center, rng));
    }
    return out;
}

MomentSummary estimate_moments(const MixtureSpec& spec, int k, int n,
                               std::uint64_t seed) {
    const auto mix = sample_mixture(spec, n, derive_seed(seed, "moments.mix"));
    const auto comp = sample_component(spec, k, n, derive_seed(seed, "moments.comp"));
    return moments_from_samples(mix, comp);
}

MemorizationEstimate pointwise_memorization_mc(
    const std::vector<std::vector<double>>& gen_samples,
    const std::vector<std::vector<double>>& dataset, double kernel_variance,
    int mc_n) {
    require(kernel_variance > 0.0, ErrorKind::validation,
            "pointwise_memorization_mc: kernel variance must be > 0");
    require(!gen_samples.empty() && !dataset.empty(), ErrorKind::validation,
            "pointwise_memorization_mc: empty sample set");

    std::vector<std::vector<double>> gen_view = gen_samples;
    if (mc_n > 0 && mc_n < static_cast<int>(gen_view.size())) gen_view.resize(mc_n);

    const int m = static_cast<int>(gen_view[0].size());
    const DistStat dist = mean_sq_dist(gen_view, dataset);

    MemorizationEstimate est;
    est.kernel_variance = kernel_variance;
    est.n_gen = static_cast<int>(gen_view.size());
    est.n_data = static_cast<int>(dataset.size());
    est.distance_term = dist.mean;
    est.distance_se = dist.se;
    est.value = 0.5 * m * std::log(kTwoPi * kernel_variance) +
                dist.mean / (2.0 * kernel_variance);
    est.std_error = dist.se / (2.0 * kernel_variance);
    return est;
}

double closed_form_ratio(const MomentSummary& moments) {
    const double den = moments.tr_sigma_k + moments.tr_sigma + moments.mu_dist_sq;
    require(den > 0.0, ErrorKind::numerical,
            "closed_form_ratio: degenerate distribution (zero denominator)");
    return 2.0 * moments.tr_sigma_k / den;
}

TheoremCheck check_theorem_ratio(const MixtureSpec& spec, int k,
                                 double kernel_variance, int n_data, int n_gen,
                                 std::uint64_t seed, double eta) {
    require(kernel_variance > 0.0, ErrorKind::validation,
            "check_theorem_ratio: kernel variance must be > 0");
    require(n_data >= 100 && n_gen >= 100, ErrorKind::validation,
            "check_theorem_ratio: sample sizes too small");

    TheoremCheck out;
    out.eta = eta;

    // Moment calibration with a block split for the closed-form error bar.
    constexpr int kBlocks = 10;
    const int block_n = std::max(100, n_gen / kBlocks);
    std::vector<double> block_cf;
    for (int b = 0; b < kBlocks; ++b) {
        const auto ms = estimate_moments(spec, k, block_n,
                                         derive_seed(seed, "thm.moments", b));
        block_cf.push_back(closed_form_ratio(ms));
    }
    const auto moments =
        estimate_moments(spec, k, kBlocks * block_n, derive_seed(seed, "thm.moments.full"));
    out.closed_form = closed_form_ratio(moments);
    double cf_var = 0.0;
    for (double v : block_cf) cf_var += (v - out.closed_form) * (v - out.closed_form);
    cf_var /= static_cast<double>(kBlocks - 1) * kBlocks;

    out.mu_norm = norm_of(moments.mu);
    out.mu_k_norm = norm_of(moments.mu_k);
    out.hypothesis_met = out.mu_norm < out.mu_k_norm;
    if (eta > 0.0) {
        const double threshold =
            (out.mu_norm + std::sqrt(out.mu_norm * out.mu_norm + eta * (2.0 + eta))) /
            (2.0 + eta);
        out.strengthened_met = out.mu_k_norm >= threshold;
        out.bound = 2.0 / (2.0 + eta);
    }

    // The kernel-variance and entropy terms are common to numerator and
    // denominator and vanish in the eps -> 0 limit, so the ratio is taken on
    // the distance terms alone; kernel_variance stays a live parameter of the
    // standalone estimate path only.
    const auto data = sample_component(spec, k, n_data, derive_seed(seed, "thm.data"));
    const auto gen_k = sample_component(spec, k, n_gen, derive_seed(seed, "thm.gen_k"));
    const auto gen_q = sample_mixture(spec, n_gen, derive_seed(seed, "thm.gen_q"));

    const DistStat num = mean_sq_dist(gen_k, data);
    const DistStat den = mean_sq_dist(gen_q, data);
    require(den.mean > 0.0, ErrorKind::numerical,
            "check_theorem_ratio: degenerate denominator");
    out.mc_ratio = num.mean / den.mean;

    const double rel_var = (num.se / num.mean) * (num.se / num.mean) +
                           (den.se / den.mean) * (den.se / den.mean);
    const double mc_se = out.mc_ratio * std::sqrt(rel_var);
    out.std_error = std::sqrt(mc_se * mc_se + cf_var);
    out.agreement = std::abs(out.mc_ratio - out.closed_form) <= 3.0 * out.std_error;
    return out;
}

// ---------------------------------------------------------------------------
// Nested partitions (Corollary)
// ---------------------------------------------------------------------------

void NestedMixture::validate() const {
    require(dim >= 2, ErrorKind::validation, "nested mixture: dim must be >= 2");
    require(!sibling_centers.empty(), ErrorKind::validation,
            "nested mixture: needs at least one level");
    require(sibling_centers.size() == weights.size(), ErrorKind::validation,
            "nested mixture: level arity mismatch");
    require(static_cast<int>(deepest_center.size()) == dim, ErrorKind::validation,
            "nested mixture: deepest center dimension mismatch");
    for (const auto& c : sibling_centers)
        require(static_cast<int>(c.size()) == dim, ErrorKind::validation,
                "nested mixture: sibling dimension mismatch");
    for (double w : weights)
        require(w > 0.0 && w < 1.0, ErrorKind::validation,
                "nested mixture: branch weight outside (0,1)");
}

std::vector<std::vector<double>> sample_nested_level(const NestedMixture& nest,
                                                     int level, int n,
                                                     std::uint64_t seed) {
    nest.validate();
    const int depth = nest.levels();
    require(level >= 0 && level <= depth, ErrorKind::validation,
            "sample_nested_level: bad level");
    Rng rng(derive_seed(seed, "nested.sample", static_cast<std::uint64_t>(level)));
    std::vector<std::vector<double>> out;
    out.reserve(n);
    for (int i = 0; i < n; ++i) {
        int l = level;
        const std::vector<double>* center = &nest.deepest_center;
        while (l < depth) {
            if (rng.uniform() < nest.weights[l]) {
                ++l;  // continue down the chosen branch
            } else {
                center = &nest.sibling_centers[l];
                break;
            }
        }
        out.push_back(sample_on_sphere(*center, rng));
    }
    return out;
}

SequentialResult corollary_sequential(const NestedMixture& nest, double eta,
                                      double kernel_variance, int n_data, int n_gen,
                                      std::uint64_t seed) {
    nest.validate();
    require(kernel_variance > 0.0, ErrorKind::validation,
            "corollary_sequential: kernel variance must be > 0");
    const int depth = nest.levels();

    // Dataset from the deepest component; one distance statistic per level.
    const auto data =
        sample_nested_level(nest, depth, n_data, derive_seed(seed, "cor.data"));

    std::vector<DistStat> dist(depth + 1);
    std::vector<double> mu_norms(depth + 1);
    for (int l = 0; l <= depth; ++l) {
        const auto gen =
            sample_nested_level(nest, l, n_gen, derive_seed(seed, "cor.gen", l));
        dist[l] = mean_sq_dist(gen, data);
        std::vector<double> mu(nest.dim, 0.0);
        for (const auto& z : gen)
            for (int i = 0; i < nest.dim; ++i) mu[i] += z[i];
        for (double& v : mu) v /= static_cast<double>(gen.size());
        mu_norms[l] = norm_of(mu);
    }

    SequentialResult res;
    res.all_hypotheses_met = true;
    double cumulative = 1.0;
    double rel_var_acc = 0.0;
    for (int j = 1; j <= depth; ++j) {
        SequentialLevel lvl;
        lvl.level = j;
        lvl.mu_parent_norm = mu_norms[j - 1];
        lvl.mu_child_norm = mu_norms[j];
        const double threshold =
            (mu_norms[j - 1] +
             std::sqrt(mu_norms[j - 1] * mu_norms[j - 1] + eta * (2.0 + eta))) /
            (2.0 + eta);
        lvl.hypothesis_met =
            mu_norms[j - 1] < mu_norms[j] && mu_norms[j] >= threshold;

        lvl.ratio = dist[j].mean / dist[j - 1].mean;
        cumulative *= lvl.ratio;
        lvl.cumulative = cumulative;
        rel_var_acc += (dist[j].se / dist[j].mean) * (dist[j].se / dist[j].mean) +
                       (dist[j - 1].se / dist[j - 1].mean) *
                           (dist[j - 1].se / dist[j - 1].mean);
        lvl.std_error = cumulative * std::sqrt(rel_var_acc);
        res.levels.push_back(lvl);
        if (!lvl.hypothesis_met) {
            res.all_hypotheses_met = false;
            res.failed_level = j;
            break;
        }
    }

    // Direct deepest-vs-root ratio from fresh generator streams; the product
    // of per-level ratios must agree with it within MC tolerance.
    const auto gen_top =
        sample_nested_level(nest, depth, n_gen, derive_seed(seed, "cor.direct.top"));
    const auto gen_root =
        sample_nested_level(nest, 0, n_gen, derive_seed(seed, "cor.direct.root"));
    res.direct_ratio =
        mean_sq_dist(gen_top, data).mean / mean_sq_dist(gen_root, data).mean;
    return res;
}

std::vector<double> threshold_sequence(double eta, int n) {
    require(eta > 0.0 && n >= 1, ErrorKind::validation,
            "threshold_sequence: eta > 0 and n >= 1 required");
    std::vector<double> a(n);
    a[0] = std::sqrt(eta / (2.0 + eta));
    for (int i = 1; i < n; ++i)
        a[i] = (a[i - 1] + std::sqrt(a[i - 1] * a[i - 1] + eta * (2.0 + eta))) /
               (2.0 + eta);
    return a;
}

// ---------------------------------------------------------------------------
// Sigma decomposition
// ---------------------------------------------------------------------------

namespace {

// covariance matrix (row-major m x m) of a sample set
std::vector<double> covariance_of(const std::vector<std::vector<double>>& samples,
                                  std::vector<double>* mean_out = nullptr) {
    const std::size_t m = samples[0].size();
    std::vector<double> mean(m, 0.0);
    for (const auto& z : samples)
        for (std::size_t i = 0; i < m; ++i) mean[i] += z[i];
    for (double& v : mean) v /= static_cast<double>(samples.size());
    std::vector<double> cov(m * m, 0.0);
    for (const auto& z : samples)
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < m; ++j)
                cov[i * m + j] += (z[i] - mean[i]) * (z[j] - mean[j]);
    for (double& v : cov) v /= static_cast<double>(samples.size());
    if (mean_out) *mean_out = mean;
    return cov;
}

// RHS of the decomposition: E_pi[Sigma_j] + E_pi[(mu - mu_j)(mu - mu_j)^T]
std::vector<double> rhs_from_components(
    const MixtureSpec& spec,
    const std::vector<std::vector<std::vector<double>>>& comp_samples) {
    const std::size_t m = static_cast<std::size_t>(spec.dim);
    std::vector<std::vector<double>> means(spec.components.size());
    std::vector<std::vector<double>> covs(spec.components.size());
    for (std::size_t k = 0; k < spec.components.size(); ++k)
        covs[k] = covariance_of(comp_samples[k], &means[k]);

    std::vector<double> mu(m, 0.0);
    for (std::size_t k = 0; k < spec.components.size(); ++k)
        for (std::size_t i = 0; i < m; ++i)
            mu[i] += spec.components[k].weight * means[k][i];

    std::vector<double> rhs(m * m, 0.0);
    for (std::size_t k = 0; k < spec.components.size(); ++k) {
        const double w = spec.components[k].weight;
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < m; ++j)
                rhs[i * m + j] += w * (covs[k][i * m + j] +
                                       (mu[i] - means[k][i]) * (mu[j] - means[k][j]));
    }
    return rhs;
}

}  // namespace

SigmaCheck sigma_decomposition_check(const MixtureSpec& spec, int n,
                                     std::uint64_t seed) {
    spec.validate();
    require(n >= 1000, ErrorKind::validation,
            "sigma_decomposition_check: n too small");
    const std::size_t m = static_cast<std::size_t>(spec.dim);
    constexpr int kBlocks = 8;
    const int block_n = n / kBlocks;

    auto draw_components = [&](std::uint64_t s, int count) {
        std::vector<std::vector<std::vector<double>>> out(spec.components.size());
        for (std::size_t k = 0; k < spec.components.size(); ++k) {
            const int nk = std::max(
                2, static_cast<int>(std::lround(spec.components[k].weight * count)));
            out[k] = sample_component(spec, static_cast<int>(k), nk,
                                      derive_seed(s, "sigma.comp", k));
        }
        return out;
    };

    // Pooled estimates on independent streams for the two sides.
    const auto lhs_samples = sample_mixture(spec, n, derive_seed(seed, "sigma.lhs"));
    const auto lhs = covariance_of(lhs_samples);
    const auto rhs = rhs_from_components(spec, draw_components(derive_seed(seed, "sigma.rhs"), n));

    SigmaCheck out;
    double resid_sq = 0.0;
    for (std::size_t i = 0; i < m * m; ++i) {
        const double d = lhs[i] - rhs[i];
        resid_sq += d * d;
    }
    out.residual = std::sqrt(resid_sq);

    // Per-entry variance from independent block replicas of the difference.
    std::vector<std::vector<double>> block_diffs;
    for (int b = 0; b < kBlocks; ++b) {
        const auto bl = covariance_of(
            sample_mixture(spec, block_n, derive_seed(seed, "sigma.lhs.b", b)));
        const auto br = rhs_from_components(
            spec, draw_components(derive_seed(seed, "sigma.rhs.b", b), block_n));
        std::vector<double> d(m * m);
        for (std::size_t i = 0; i < m * m; ++i) d[i] = bl[i] - br[i];
        block_diffs.push_back(std::move(d));
    }
    double var_total = 0.0;
    for (std::size_t i = 0; i < m * m; ++i) {
        double mean = 0.0;
        for (const auto& d : block_diffs) mean += d[i];
        mean /= kBlocks;
        double var = 0.0;
        for (const auto& d : block_diffs) var += (d[i] - mean) * (d[i] - mean);
        var /= (kBlocks - 1);
        var_total += var / kBlocks;  // variance of the pooled mean
    }
    out.bound = 3.0 * std::sqrt(var_total);
    out.pass = out.residual <= out.bound;
    return out;
}

// ---------------------------------------------------------------------------
// OLS
// ---------------------------------------------------------------------------

OLSResult ols_fit(const std::vector<double>& token_counts,
                  const std::vector<double>& losses) {
    require(token_counts.size() == losses.size(), ErrorKind::validation,
            "ols_fit: size mismatch");
    const int n = static_cast<int>(token_counts.size());
    require(n >= 2, ErrorKind::validation, "ols_fit: need at least 2 points");
    for (double l : losses)
        require(l > 0.0, ErrorKind::validation,
                "ols_fit: losses must be positive (log model)");

    std::vector<double> y(n);
    for (int i = 0; i < n; ++i) y[i] = std::log(losses[i]);

    double x_mean = 0.0, y_mean = 0.0;
    for (int i = 0; i < n; ++i) {
        x_mean += token_counts[i];
        y_mean += y[i];
    }
    x_mean /= n;
    y_mean /= n;

    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (int i = 0; i < n; ++i) {
        const double dx = token_counts[i] - x_mean;
        const double dy = y[i] - y_mean;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    require(sxx > 0.0, ErrorKind::validation,
            "ols_fit: token counts are constant (rank-deficient design)");

    OLSResult res;
    res.n = n;
    res.beta = sxy / sxx;
    res.alpha = y_mean - res.beta * x_mean;
    res.residuals.resize(n);
    double rss = 0.0;
    for (int i = 0; i < n; ++i) {
        res.residuals[i] = y[i] - (res.alpha + res.beta * token_counts[i]);
        rss += res.residuals[i] * res.residuals[i];
    }
    res.r_squared = syy > 0.0 ? 1.0 - rss / syy : 1.0;

    const int dof = n - 2;
    if (dof > 0) {
        const double sigma_sq = rss / dof;
        res.se_beta = std::sqrt(sigma_sq / sxx);
        res.se_alpha = std::sqrt(sigma_sq * (1.0 / n + x_mean * x_mean / sxx));
        if (res.se_beta > 0.0) {
            const double t = res.beta / res.se_beta;
            res.f_statistic = t * t;
            boost::math::students_t dist(dof);
            res.p_beta = 2.0 * boost::math::cdf(boost::math::complement(
                                   dist, std::abs(t)));
        } else {
            res.f_statistic = std::numeric_limits<double>::infinity();
            res.p_beta = 0.0;
        }
    } else {
        res.se_alpha = res.se_beta = 0.0;
        res.f_statistic = 0.0;
        res.p_beta = std::numeric_limits<double>::quiet_NaN();
    }
    return res;
}

}  // namespace leaky::memtheory
