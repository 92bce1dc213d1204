#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "leaky/memtheory.hpp"
#include "leaky/rng.hpp"

using namespace leaky;
using namespace leaky::memtheory;

namespace {

MixtureSpec antipodal(int dim, double kappa, double w0 = 0.5) {
    MixtureSpec spec;
    spec.dim = dim;
    for (int k = 0; k < 2; ++k) {
        MixtureComponent c;
        c.weight = k == 0 ? w0 : 1.0 - w0;
        c.center.assign(dim, 0.0);
        c.center[0] = k == 0 ? kappa : -kappa;
        spec.components.push_back(std::move(c));
    }
    return spec;
}

MixtureSpec single(int dim, double kappa) {
    MixtureSpec spec;
    spec.dim = dim;
    MixtureComponent c;
    c.weight = 1.0;
    c.center.assign(dim, 0.0);
    c.center[0] = kappa;
    spec.components.push_back(std::move(c));
    return spec;
}

}  // namespace

TEST_CASE("component samples live on the unit sphere, deterministically") {
    const auto spec = antipodal(8, 3.0);
    const auto a = sample_component(spec, 0, 500, 1);
    const auto b = sample_component(spec, 0, 500, 1);
    for (std::size_t i = 0; i < a.size(); ++i) {
        double norm = 0.0;
        for (double v : a[i]) norm += v * v;
        CHECK(std::abs(std::sqrt(norm) - 1.0) < 1e-12);
        CHECK(a[i] == b[i]);
    }
}

TEST_CASE("concentrated component mean aligns with its center direction") {
    const auto spec = single(8, 8.0);
    const auto samples = sample_component(spec, 0, 100000, 2);
    std::vector<double> mean(8, 0.0);
    for (const auto& z : samples)
        for (int i = 0; i < 8; ++i) mean[i] += z[i];
    double norm = 0.0;
    for (double& v : mean) {
        v /= samples.size();
        norm += v * v;
    }
    norm = std::sqrt(norm);
    CHECK(mean[0] / norm > 0.99);  // cosine to e1
}

TEST_CASE("moment estimates satisfy the sphere trace identity") {
    // tr(Sigma_k) = 1 - ||mu_k||^2 for sphere-supported components
    const auto spec = antipodal(16, 4.0);
    const auto ms = estimate_moments(spec, 0, 100000, 3);
    double mu_k_sq = 0.0;
    for (double v : ms.mu_k) mu_k_sq += v * v;
    CHECK(ms.tr_sigma_k == doctest::Approx(1.0 - mu_k_sq).epsilon(1e-3));
    double mu_sq = 0.0;
    for (double v : ms.mu) mu_sq += v * v;
    CHECK(ms.tr_sigma == doctest::Approx(1.0 - mu_sq).epsilon(1e-3));
}

TEST_CASE("pointwise memorization: coincident generator collapses the distance term") {
    // all generated samples equal the single dataset point
    std::vector<std::vector<double>> point = {{1.0, 0.0, 0.0, 0.0}};
    std::vector<std::vector<double>> gen(100, point[0]);
    const double eps = 1e-4;
    const auto est = pointwise_memorization_mc(gen, point, eps);
    CHECK(est.distance_term == doctest::Approx(0.0));
    // estimate reduces to the (m/2) log(2 pi eps) constant
    CHECK(est.value == doctest::Approx(2.0 * std::log(2 * 3.14159265358979 * eps))
                           .epsilon(1e-9));
}

TEST_CASE("pointwise memorization matches the proof's expansion within 3 SE") {
    // generated ~ component k, dataset ~ component k, m=8
    const int m = 8;
    const auto spec = antipodal(m, 3.0);
    const auto gen = sample_component(spec, 0, 50000, 4);
    const auto data = sample_component(spec, 0, 50000, 5);
    const double eps = 1e-3;
    const auto est = pointwise_memorization_mc(gen, data, eps);

    const auto ms = estimate_moments(spec, 0, 200000, 6);
    double expect = ms.tr_sigma_k;  // E||z - mu_k||^2
    // + mean_i ||mu_k - x_i||^2 over the dataset distribution = tr Sigma_k again
    expect += ms.tr_sigma_k;
    const double dominant = expect / (2 * eps);
    const double constant = (m / 2.0) * std::log(2 * 3.14159265358979 * eps);
    CHECK(std::abs(est.value - (constant + dominant)) <= 3.0 * est.std_error +
                                                             0.01 * dominant / 100);
}

TEST_CASE("doubling mc_n shrinks the standard error like 1/sqrt(n)") {
    const auto spec = antipodal(8, 2.0);
    const auto gen = sample_component(spec, 0, 80000, 7);
    const auto data = sample_component(spec, 1, 4000, 8);
    const auto half = pointwise_memorization_mc(gen, data, 1e-3, 40000);
    const auto full = pointwise_memorization_mc(gen, data, 1e-3, 80000);
    const double ratio = half.std_error / full.std_error;
    CHECK(ratio > std::sqrt(2.0) * 0.7);
    CHECK(ratio < std::sqrt(2.0) * 1.3);
}

TEST_CASE("non-positive kernel variance rejected") {
    const auto spec = antipodal(4, 2.0);
    const auto gen = sample_component(spec, 0, 100, 9);
    CHECK_THROWS_AS((void)pointwise_memorization_mc(gen, gen, 0.0), Error);
}

TEST_CASE("closed form ratio arithmetic and degenerate input") {
    MomentSummary ms;
    ms.tr_sigma_k = 0.2;
    ms.tr_sigma = 0.6;
    ms.mu_dist_sq = 0.2;
    CHECK(closed_form_ratio(ms) == doctest::Approx(0.4));

    MomentSummary degenerate;  // all zeros
    CHECK_THROWS_AS((void)closed_form_ratio(degenerate), Error);

    // single-component mixture: mu = mu_k, Sigma = Sigma_k -> exactly 1
    MomentSummary one;
    one.tr_sigma = one.tr_sigma_k = 0.3;
    one.mu_dist_sq = 0.0;
    CHECK(closed_form_ratio(one) == doctest::Approx(1.0));
}

TEST_CASE("theorem check: antipodal mixture gives ratio < 1 matching closed form") {
    const auto spec = antipodal(16, 5.0);
    const auto check = check_theorem_ratio(spec, 0, 1e-3, 50000, 50000, 10);
    CHECK(check.hypothesis_met);  // ||mu|| ~ 0 < ||mu_k||
    CHECK(check.mc_ratio < 1.0);
    CHECK(check.agreement);  // within 3 SE of the closed form
}

TEST_CASE("theorem check honors the eta threshold bound") {
    // concentrated antipodal pair: ||mu_k|| ~ 0.87 >= sqrt(2)/2 threshold
    const auto spec = antipodal(16, 7.0);
    const auto check = check_theorem_ratio(spec, 0, 1e-3, 50000, 50000, 11, 2.0);
    CHECK(check.hypothesis_met);
    CHECK(check.strengthened_met);
    CHECK(check.bound == doctest::Approx(0.5));
    CHECK(check.mc_ratio <= 0.5 + 3.0 * check.std_error);
}

TEST_CASE("theorem check on a single component reports hypothesis-not-met, ratio 1") {
    const auto spec = single(16, 4.0);
    const auto check = check_theorem_ratio(spec, 0, 1e-3, 40000, 40000, 12);
    CHECK(!check.hypothesis_met);  // ||mu|| == ||mu_k||
    CHECK(check.mc_ratio == doctest::Approx(1.0).epsilon(0.05));
    CHECK(std::abs(check.mc_ratio - 1.0) <= 3.0 * check.std_error + 1e-6);
}

TEST_CASE("threshold sequence is monotone increasing toward 1") {
    const auto seq = threshold_sequence(2.0, 40);
    CHECK(seq[0] == doctest::Approx(std::sqrt(0.5)));
    for (std::size_t i = 1; i < seq.size(); ++i) {
        // strictly increasing until it saturates at 1 in double precision
        if (seq[i - 1] < 1.0 - 1e-12) CHECK(seq[i] > seq[i - 1]);
        else CHECK(seq[i] >= seq[i - 1]);
        CHECK(seq[i] <= 1.0 + 1e-12);
    }
    CHECK(seq.back() > 0.999);
}

TEST_CASE("nested 3-level corollary: bound and telescoping") {
    NestedMixture nest;
    nest.dim = 16;
    auto axis = [](double kappa) {
        std::vector<double> c(16, 0.0);
        c[0] = kappa;
        return c;
    };
    nest.sibling_centers = {axis(-5.5), axis(4.4), axis(10.5)};
    nest.weights = {0.5, 0.5, 0.5};
    nest.deepest_center = axis(34.0);

    const auto res = corollary_sequential(nest, 2.0, 1e-3, 50000, 50000, 13);
    REQUIRE(res.levels.size() == 3);
    CHECK(res.all_hypotheses_met);
    for (const auto& lvl : res.levels) {
        CHECK(lvl.hypothesis_met);
        CHECK(lvl.mu_parent_norm < lvl.mu_child_norm);
    }
    const double bound = std::pow(0.5, 3);
    CHECK(res.levels.back().cumulative <= bound + 3.0 * res.levels.back().std_error);
    // product of per-level ratios telescopes to the direct ratio within MC noise
    CHECK(res.levels.back().cumulative ==
          doctest::Approx(res.direct_ratio).epsilon(0.2));
}

TEST_CASE("single-level corollary reduces to the theorem check") {
    NestedMixture nest;
    nest.dim = 16;
    std::vector<double> sib(16, 0.0);
    sib[0] = -7.0;
    std::vector<double> deep(16, 0.0);
    deep[0] = 7.0;
    nest.sibling_centers = {sib};
    nest.weights = {0.5};
    nest.deepest_center = deep;
    const auto res = corollary_sequential(nest, 2.0, 1e-3, 50000, 50000, 14);
    REQUIRE(res.levels.size() == 1);
    CHECK(res.all_hypotheses_met);

    const auto spec = antipodal(16, 7.0);
    const auto check = check_theorem_ratio(spec, 0, 1e-3, 50000, 50000, 14, 2.0);
    CHECK(res.levels[0].ratio ==
          doctest::Approx(check.mc_ratio).epsilon(0.1));
}

TEST_CASE("corollary stops at the first level whose hypothesis fails") {
    NestedMixture nest;
    nest.dim = 8;
    auto axis = [](double kappa) {
        std::vector<double> c(8, 0.0);
        c[0] = kappa;
        return c;
    };
    // level 1 clears the threshold; the level-2 child is much less
    // concentrated than its parent, so the hypothesis fails there
    nest.sibling_centers = {axis(-3.2), axis(20.0)};
    nest.weights = {0.5, 0.29};
    nest.deepest_center = axis(0.5);
    const auto res = corollary_sequential(nest, 2.0, 1e-3, 30000, 30000, 15);
    CHECK(!res.all_hypotheses_met);
    CHECK(res.failed_level == 2);
    CHECK(res.levels.size() == 2);  // stopped at the failing level
}

TEST_CASE("sigma decomposition: single component, antipodal, zero-weight tail") {
    SUBCASE("single component residual is pure MC noise") {
        const auto check = sigma_decomposition_check(single(8, 2.0), 100000, 16);
        CHECK(check.pass);
    }
    SUBCASE("two equal-weight antipodal components, m=4") {
        const auto check = sigma_decomposition_check(antipodal(4, 2.0), 200000, 17);
        CHECK(check.pass);
        CHECK(check.residual <= check.bound);
    }
    SUBCASE("weights (1, 0) behave as the single-component case") {
        auto spec = antipodal(8, 2.0, 1.0);  // second component weight 0
        const auto check = sigma_decomposition_check(spec, 100000, 18);
        CHECK(check.pass);
    }
}

TEST_CASE("ols recovers planted coefficients exactly") {
    // log L = 0.5 - 0.1 T exactly
    std::vector<double> t, l;
    for (int i = 1; i <= 10; ++i) {
        t.push_back(i);
        l.push_back(std::exp(0.5 - 0.1 * i));
    }
    const auto res = ols_fit(t, l);
    CHECK(std::abs(res.alpha - 0.5) < 1e-10);
    CHECK(std::abs(res.beta - (-0.1)) < 1e-10);
    CHECK(res.r_squared == doctest::Approx(1.0));
    // residual orthogonality to the regressors (normal equations)
    double dot_1 = 0.0, dot_t = 0.0;
    for (int i = 0; i < 10; ++i) {
        dot_1 += res.residuals[i];
        dot_t += res.residuals[i] * t[i];
    }
    CHECK(std::abs(dot_1) < 1e-8);
    CHECK(std::abs(dot_t) < 1e-8);
}

TEST_CASE("ols two-point exact fit") {
    const auto res = ols_fit({1.0, 2.0}, {std::exp(1.0), std::exp(3.0)});
    CHECK(res.r_squared == doctest::Approx(1.0));
    CHECK(std::abs(res.residuals[0]) < 1e-12);
    CHECK(std::abs(res.residuals[1]) < 1e-12);
    CHECK(res.beta == doctest::Approx(2.0));
}

TEST_CASE("ols error paths") {
    CHECK_THROWS_AS((void)ols_fit({1.0, 1.0, 1.0}, {1.0, 2.0, 3.0}), Error);  // rank
    CHECK_THROWS_AS((void)ols_fit({1.0, 2.0, 3.0}, {1.0, -2.0, 3.0}), Error); // domain
}

TEST_CASE("ols p-value is small for a strong trend, large for noise") {
    Rng rng(19);
    std::vector<double> t, strong, noise;
    for (int i = 0; i < 40; ++i) {
        t.push_back(1 + i % 8);
        strong.push_back(std::exp(0.3 - 0.2 * t.back() + 0.05 * rng.normal()));
        noise.push_back(std::exp(0.3 + 0.3 * rng.normal()));
    }
    CHECK(ols_fit(t, strong).p_beta < 1e-6);
    CHECK(ols_fit(t, noise).p_beta > 0.01);
}
