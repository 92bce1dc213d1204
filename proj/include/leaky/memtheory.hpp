#pragma once

#include <cstdint>
#include <vector>

#include "leaky/common.hpp"

namespace leaky::memtheory {

// Sphere-supported mixture: component k samples z = (c_k + g) / ||c_k + g||
// with g standard normal. Larger ||c_k|| concentrates the component and
// pushes the mean resultant length ||E[z]|| toward 1.
struct MixtureComponent {
    double weight = 1.0;
    std::vector<double> center;
};

struct MixtureSpec {
    int dim = 16;
    std::vector<MixtureComponent> components;

    void validate() const;  // weights in (0,1], sum to 1 within 1e-12
};

std::vector<std::vector<double>> sample_component(const MixtureSpec& spec, int k,
                                                  int n, std::uint64_t seed);
std::vector<std::vector<double>> sample_mixture(const MixtureSpec& spec, int n,
                                                std::uint64_t seed);

struct MomentSummary {
    std::vector<double> mu;       // mixture mean
    std::vector<double> mu_k;     // component mean
    double tr_sigma = 0.0;        // trace of mixture covariance
    double tr_sigma_k = 0.0;      // trace of component covariance
    double mu_dist_sq = 0.0;      // || mu - mu_k ||^2
};

MomentSummary estimate_moments(const MixtureSpec& spec, int k, int n,
                               std::uint64_t seed);

struct MemorizationEstimate {
    double value = 0.0;          // (m/2) log(2 pi eps) + distance_term / (2 eps)
    double distance_term = 0.0;  // mean_i mean_z || z - x_i ||^2
    double std_error = 0.0;      // of value
    double distance_se = 0.0;    // of distance_term
    double kernel_variance = 0.0;
    int n_gen = 0;
    int n_data = 0;
};

// Definition-level estimator. The differential entropy of the generator is
// not estimable and is common to every ratio the theory takes, so the
// estimate carries the computable expansion terms only.
MemorizationEstimate pointwise_memorization_mc(
    const std::vector<std::vector<double>>& gen_samples,
    const std::vector<std::vector<double>>& dataset, double kernel_variance,
    int mc_n = 0);

// 2 tr(Sigma_k) / (tr(Sigma_k) + tr(Sigma) + ||mu - mu_k||^2)
double closed_form_ratio(const MomentSummary& moments);

struct TheoremCheck {
    double mc_ratio = 0.0;
    double closed_form = 0.0;
    double std_error = 0.0;  // combined MC + calibration error of the gap
    bool agreement = false;  // |mc - closed| <= 3 se
    bool hypothesis_met = false;      // ||mu|| < ||mu_k||
    bool strengthened_met = false;    // eta threshold inequality
    double eta = 0.0;
    double bound = 0.0;  // 2 / (2 + eta), meaningful when strengthened_met
    double mu_norm = 0.0, mu_k_norm = 0.0;
};

TheoremCheck check_theorem_ratio(const MixtureSpec& spec, int k,
                                 double kernel_variance, int n_data, int n_gen,
                                 std::uint64_t seed, double eta = 0.0);

// Nested partition family: level j refines the chosen branch,
//   Q_j = w_j * Q_{j+1} + (1 - w_j) * Leaf(sibling_j),  Q_n = Leaf(deepest).
struct NestedMixture {
    int dim = 16;
    std::vector<std::vector<double>> sibling_centers;
    std::vector<double> weights;  // per level, weight of the chosen branch
    std::vector<double> deepest_center;

    int levels() const { return static_cast<int>(sibling_centers.size()); }
    void validate() const;
};

std::vector<std::vector<double>> sample_nested_level(const NestedMixture& nest,
                                                     int level, int n,
                                                     std::uint64_t seed);

struct SequentialLevel {
    int level = 0;
    double ratio = 0.0;          // per-level MC ratio
    double cumulative = 0.0;     // product up to this level
    double std_error = 0.0;      // of the cumulative ratio
    bool hypothesis_met = false;
    double mu_parent_norm = 0.0, mu_child_norm = 0.0;
};

struct SequentialResult {
    std::vector<SequentialLevel> levels;
    bool all_hypotheses_met = false;
    int failed_level = -1;  // first level whose hypothesis failed, else -1
    double direct_ratio = 0.0;  // M(D; Q_n) / M(D; Q_0) estimated directly
};

SequentialResult corollary_sequential(const NestedMixture& nest, double eta,
                                      double kernel_variance, int n_data, int n_gen,
                                      std::uint64_t seed);

// a_1 = sqrt(eta/(2+eta)), a_{k+1} = (a_k + sqrt(a_k^2 + eta(2+eta)))/(2+eta);
// monotone increasing toward 1.
std::vector<double> threshold_sequence(double eta, int n);

struct SigmaCheck {
    double residual = 0.0;  // Frobenius norm of LHS - RHS
    double bound = 0.0;     // 3 sigma Monte-Carlo bound
    bool pass = false;
};

SigmaCheck sigma_decomposition_check(const MixtureSpec& spec, int n,
                                     std::uint64_t seed);

struct OLSResult {
    double alpha = 0.0, beta = 0.0;
    double se_alpha = 0.0, se_beta = 0.0;
    double r_squared = 0.0;
    double f_statistic = 0.0;
    double p_beta = 1.0;  // two-sided t-test on beta
    int n = 0;
    std::vector<double> residuals;
};

// OLS of log(L) on T.
OLSResult ols_fit(const std::vector<double>& token_counts,
                  const std::vector<double>& losses);

}  // namespace leaky::memtheory
