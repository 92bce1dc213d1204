#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "leaky/config.hpp"
#include "leaky/fidelity.hpp"

namespace leaky::leakage {

struct FeatureRow {
    double ssim = 0.0, lpips = 0.0, sscd = 0.0;
    int label = 0;  // 1 = member

    double feature(int i) const { return i == 0 ? ssim : i == 1 ? lpips : sscd; }
    static constexpr int kFeatures = 3;
};

// Class-balanced, sscd-filtered feature set split into train/test (each split
// exactly balanced).
struct MIADataset {
    std::vector<FeatureRow> train, test;
};

MIADataset build_mia_dataset(
    const std::vector<std::pair<fidelity::MetricVector, bool>>& reports,
    double filter_sscd_max, std::uint64_t balance_seed, double train_fraction = 0.7,
    int min_per_class = 20);

enum class ClassifierKind { logistic_regression, linear_svm, random_forest };

ClassifierKind classifier_from_name(const std::string& name);
std::string classifier_name(ClassifierKind kind);

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1, right = -1;
    double prob = 0.5;  // member probability at a leaf
};

struct ClassifierModel {
    ClassifierKind kind = ClassifierKind::logistic_regression;
    // standardization fitted on the train split only
    std::vector<double> feat_mean, feat_std;
    // linear models
    std::vector<double> w;
    double b = 0.0;
    // forest
    std::vector<std::vector<TreeNode>> trees;

    double score(const FeatureRow& row) const;  // in [0,1]
};

struct ForestConfig {
    int trees = 100;
    int max_depth = 8;
};

ClassifierModel train_classifier(const std::vector<FeatureRow>& train,
                                 ClassifierKind kind, std::uint64_t seed,
                                 const ForestConfig& forest = {});

struct MIAReport {
    double accuracy = 0.0;
    double auc = 0.0;
    long long tp = 0, tn = 0, fp = 0, fn = 0;
};

MIAReport evaluate_mia(const ClassifierModel& model,
                       const std::vector<FeatureRow>& test);

// Midrank AUC over (score, label) pairs.
double auc_midrank(const std::vector<double>& scores, const std::vector<int>& labels);

// Train/evaluate with globally permuted labels; the no-signal null.
double permuted_label_auc(const MIADataset& ds, ClassifierKind kind,
                          std::uint64_t seed, const ForestConfig& forest = {});

// A(M) = mean(deltas_mem) / mean(deltas_non).
double amplification_ratio(const std::vector<double>& metric_deltas_mem,
                           const std::vector<double>& metric_deltas_non);

}  // namespace leaky::leakage
