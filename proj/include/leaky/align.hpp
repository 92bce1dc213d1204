#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "leaky/common.hpp"

namespace leaky::align {

// d x d linear map from text embeddings to pseudo-image embeddings, fitted
// by least squares over an auxiliary paired set.
struct AlignmentMap {
    int dim = 0;
    std::vector<double> m;  // row-major d x d; applied as u^T M (row vector)
    int fit_size = 0;
    double residual_frobenius = 0.0;
    bool rank_deficient = false;
};

AlignmentMap fit_linear_map(const std::vector<std::vector<double>>& aux_text,
                            const std::vector<std::vector<double>>& aux_image,
                            double sv_cutoff = 1e-10);

// u_T M; intentionally not re-normalized (the inversion loss divides by the
// target norm itself).
std::vector<double> apply_map(const AlignmentMap& map, const std::vector<double>& u_t);

struct AlignmentReport {
    std::vector<double> cosines;  // per-pair cosine(u_T M, u_I)
    double mean_cosine = 0.0;
    double mean_l1_per_element = 0.0;
    double frobenius_error = 0.0;
    double baseline_mean_cosine = 0.0;  // cosine(u_T, u_I) without the map
};

AlignmentReport alignment_report(const AlignmentMap& map,
                                 const std::vector<std::vector<double>>& held_text,
                                 const std::vector<std::vector<double>>& held_image);

void save_alignment_map(const AlignmentMap& map, const std::string& path);
AlignmentMap load_alignment_map(const std::string& path);
std::string alignment_map_csv(const AlignmentMap& map);

// Bipartite pair graph (text rows x image columns) with nonnegative weights.
struct PairGraph {
    int m = 0, n = 0;
    std::vector<double> w;  // row-major m x n

    double& at(int i, int j) { return w[static_cast<std::size_t>(i) * n + j]; }
    double at(int i, int j) const { return w[static_cast<std::size_t>(i) * n + j]; }
    std::vector<double> text_degrees() const;
    std::vector<double> image_degrees() const;
    void validate() const;  // nonnegative weights, strictly positive degrees
};

// Builds the normalized Laplacian block system of the pair graph,
// eigendecomposes it, selects the k smallest eigenvalues above the zero
// threshold, and returns || U_I (I - Lambda) - D_I^{-1/2} W^T D_T^{-1/2} U_T ||_F.
// The identity is exact for every eigenpair, so the residual is numerical
// noise for any well-posed graph.
double verify_spectral_relation(const PairGraph& graph, int k,
                                double zero_eig_threshold = 1e-10);

}  // namespace leaky::align
