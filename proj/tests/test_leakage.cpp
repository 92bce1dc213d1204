#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "leaky/leakage.hpp"
#include "leaky/rng.hpp"

using namespace leaky;
using namespace leaky::leakage;

namespace {

fidelity::MetricVector metrics(double ssim, double lpips, double sscd) {
    fidelity::MetricVector m;
    m.ssim = ssim;
    m.lpips = lpips;
    m.sscd = sscd;
    return m;
}

// features linearly separable by ssim
std::vector<std::pair<fidelity::MetricVector, bool>> separable_reports(int n_per_class,
                                                                       double sscd) {
    std::vector<std::pair<fidelity::MetricVector, bool>> out;
    Rng rng(5);
    for (int i = 0; i < n_per_class; ++i) {
        out.emplace_back(metrics(0.6 + 0.1 * rng.uniform(), 0.4, sscd), true);
        out.emplace_back(metrics(0.1 + 0.1 * rng.uniform(), 0.6, sscd), false);
    }
    return out;
}

}  // namespace

TEST_CASE("build_mia_dataset balances, filters strictly, and splits evenly") {
    auto reports = separable_reports(50, 0.05);
    // a row at exactly the filter boundary must be excluded (strict <)
    reports.emplace_back(metrics(0.9, 0.1, 0.10), true);
    const auto ds = build_mia_dataset(reports, 0.10, 1);
    CHECK(ds.train.size() + ds.test.size() == 100);  // boundary row dropped
    long long train_members = 0, test_members = 0;
    for (const auto& r : ds.train) train_members += r.label;
    for (const auto& r : ds.test) test_members += r.label;
    CHECK(train_members * 2 == static_cast<long long>(ds.train.size()));
    CHECK(test_members * 2 == static_cast<long long>(ds.test.size()));

    // deterministic per seed
    const auto ds2 = build_mia_dataset(reports, 0.10, 1);
    CHECK(ds.train.size() == ds2.train.size());
    for (std::size_t i = 0; i < ds.train.size(); ++i)
        CHECK(ds.train[i].ssim == ds2.train[i].ssim);
}

TEST_CASE("build_mia_dataset reports per-class counts on failure") {
    const auto reports = separable_reports(5, 0.05);
    try {
        (void)build_mia_dataset(reports, 0.10, 1);
        FAIL("expected dataset error");
    } catch (const Error& e) {
        const std::string msg = e.what();
        CHECK(msg.find("members=5") != std::string::npos);
        CHECK(msg.find("nonmembers=5") != std::string::npos);
    }
}

TEST_CASE("logistic regression separates separable features") {
    const auto ds = build_mia_dataset(separable_reports(40, 0.05), 0.10, 2);
    const auto model =
        train_classifier(ds.train, ClassifierKind::logistic_regression, 3);
    long long correct = 0;
    for (const auto& row : ds.train)
        if ((model.score(row) >= 0.5 ? 1 : 0) == row.label) ++correct;
    CHECK(correct == static_cast<long long>(ds.train.size()));  // accuracy 1.0
    const auto rep = evaluate_mia(model, ds.test);
    CHECK(rep.accuracy == 1.0);
    CHECK(rep.auc == 1.0);
}

TEST_CASE("all three classifiers are deterministic per seed") {
    const auto ds = build_mia_dataset(separable_reports(30, 0.05), 0.10, 4);
    for (const auto kind :
         {ClassifierKind::logistic_regression, ClassifierKind::linear_svm,
          ClassifierKind::random_forest}) {
        const auto a = train_classifier(ds.train, kind, 7);
        const auto b = train_classifier(ds.train, kind, 7);
        for (const auto& row : ds.test)
            CHECK(a.score(row) == b.score(row));
    }
}

TEST_CASE("degenerate zero-variance features are rejected") {
    std::vector<FeatureRow> rows(10, FeatureRow{0.5, 0.5, 0.05, 1});
    for (int i = 5; i < 10; ++i) rows[i].label = 0;
    CHECK_THROWS_AS(
        (void)train_classifier(rows, ClassifierKind::logistic_regression, 1), Error);
}

TEST_CASE("standardization statistics come from the train split only") {
    auto ds = build_mia_dataset(separable_reports(30, 0.05), 0.10, 8);
    const auto model =
        train_classifier(ds.train, ClassifierKind::logistic_regression, 9);
    // recompute means from train rows; must match the model exactly
    double mean_ssim = 0.0;
    for (const auto& r : ds.train) mean_ssim += r.ssim;
    mean_ssim /= static_cast<double>(ds.train.size());
    CHECK(model.feat_mean[0] == doctest::Approx(mean_ssim).epsilon(1e-12));
    // and differ from the train+test pooled statistics (leak detector)
    double pooled = mean_ssim * static_cast<double>(ds.train.size());
    for (const auto& r : ds.test) pooled += r.ssim;
    pooled /= static_cast<double>(ds.train.size() + ds.test.size());
    CHECK(model.feat_mean[0] != doctest::Approx(pooled).epsilon(1e-12));
}

TEST_CASE("auc: perfect, tied, and the hand-built midrank case") {
    CHECK(auc_midrank({0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0}) == 1.0);
    CHECK(auc_midrank({0.5, 0.5, 0.5, 0.5}, {1, 1, 0, 0}) == 0.5);
    // {m:0.9, m:0.4, n:0.6, n:0.1}: brute force over pairs gives 3/4
    CHECK(auc_midrank({0.9, 0.4, 0.6, 0.1}, {1, 1, 0, 0}) == 0.75);
}

TEST_CASE("auc is invariant under strictly monotone score transforms") {
    Rng rng(11);
    std::vector<double> scores(40);
    std::vector<int> labels(40);
    for (int i = 0; i < 40; ++i) {
        scores[i] = rng.uniform();
        labels[i] = rng.uniform() < 0.5 ? 0 : 1;
    }
    labels[0] = 1;
    labels[1] = 0;  // both classes present
    const double base = auc_midrank(scores, labels);
    auto transformed = scores;
    for (double& s : transformed) s = std::exp(3.0 * s) + 5.0;
    CHECK(auc_midrank(transformed, labels) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("evaluate_mia consistency and empty-test error") {
    const auto ds = build_mia_dataset(separable_reports(25, 0.05), 0.10, 12);
    const auto model = train_classifier(ds.train, ClassifierKind::linear_svm, 13);
    const auto rep = evaluate_mia(model, ds.test);
    CHECK(rep.tp + rep.tn + rep.fp + rep.fn ==
          static_cast<long long>(ds.test.size()));
    CHECK(rep.accuracy ==
          doctest::Approx(static_cast<double>(rep.tp + rep.tn) / ds.test.size()));
    CHECK_THROWS_AS((void)evaluate_mia(model, {}), Error);
}

TEST_CASE("permuted labels give near-chance auc over 10 seeds") {
    const auto ds = build_mia_dataset(separable_reports(60, 0.05), 0.10, 14);
    double mean_auc = 0.0;
    for (int p = 0; p < 10; ++p)
        mean_auc +=
            permuted_label_auc(ds, ClassifierKind::logistic_regression, 100 + p);
    mean_auc /= 10.0;
    CHECK(mean_auc > 0.4);
    CHECK(mean_auc < 0.6);
}

TEST_CASE("amplification ratio") {
    CHECK(amplification_ratio({1.0, 2.0}, {1.0, 2.0}) == 1.0);
    CHECK(amplification_ratio({2.0, 2.0}, {1.0, 1.0}) == 2.0);
    CHECK_THROWS_AS((void)amplification_ratio({}, {1.0}), Error);
    CHECK_THROWS_AS((void)amplification_ratio({1.0}, {0.0, 0.0}), Error);
}
