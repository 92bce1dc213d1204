#include "leaky/leakage.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "leaky/csv.hpp"
#include "leaky/rng.hpp"

namespace leaky::leakage {

namespace {
inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }
}  // namespace

MIADataset build_mia_dataset(
    const std::vector<std::pair<fidelity::MetricVector, bool>>& reports,
    double filter_sscd_max, std::uint64_t balance_seed, double train_fraction,
    int min_per_class) {
    require(train_fraction > 0.0 && train_fraction < 1.0, ErrorKind::config,
            "build_mia_dataset: train_fraction must be in (0,1)");

    std::vector<FeatureRow> members, nonmembers;
    for (const auto& [metrics, member] : reports) {
        if (!(metrics.sscd < filter_sscd_max)) continue;  // strict <
        FeatureRow row{metrics.ssim, metrics.lpips, metrics.sscd, member ? 1 : 0};
        (member ? members : nonmembers).push_back(row);
    }
    if (static_cast<int>(members.size()) < min_per_class ||
        static_cast<int>(nonmembers.size()) < min_per_class)
        fail(ErrorKind::statistics,
             "build_mia_dataset: too few low-fidelity rows after filtering "
             "(members=" + fmt_int(static_cast<long long>(members.size())) +
                 ", nonmembers=" + fmt_int(static_cast<long long>(nonmembers.size())) +
                 ", need >= " + fmt_int(min_per_class) + " per class)");

    Rng rng(derive_seed(balance_seed, "mia.balance"));
    rng.shuffle(members);
    rng.shuffle(nonmembers);
    const std::size_t n = std::min(members.size(), nonmembers.size());
    members.resize(n);
    nonmembers.resize(n);

    // Stratified split keeps each split exactly balanced.
    const std::size_t train_n = static_cast<std::size_t>(
        std::lround(train_fraction * static_cast<double>(n)));
    require(train_n >= 1 && train_n < n, ErrorKind::statistics,
            "build_mia_dataset: split leaves an empty train or test side");
    MIADataset ds;
    for (std::size_t i = 0; i < n; ++i) {
        auto& dst = i < train_n ? ds.train : ds.test;
        dst.push_back(members[i]);
        dst.push_back(nonmembers[i]);
    }
    return ds;
}

ClassifierKind classifier_from_name(const std::string& name) {
    if (name == "logistic_regression") return ClassifierKind::logistic_regression;
    if (name == "linear_svm") return ClassifierKind::linear_svm;
    if (name == "random_forest") return ClassifierKind::random_forest;
    fail(ErrorKind::config, "unknown classifier kind: " + name);
}

std::string classifier_name(ClassifierKind kind) {
    switch (kind) {
        case ClassifierKind::logistic_regression: return "logistic_regression";
        case ClassifierKind::linear_svm: return "linear_svm";
        case ClassifierKind::random_forest: return "random_forest";
    }
    return "?";
}

double ClassifierModel::score(const FeatureRow& row) const {
    double x[FeatureRow::kFeatures];
    for (int i = 0; i < FeatureRow::kFeatures; ++i)
        x[i] = (row.feature(i) - feat_mean[i]) / feat_std[i];
    if (kind == ClassifierKind::random_forest) {
        double acc = 0.0;
        for (const auto& tree : trees) {
            int node = 0;
            while (tree[node].feature >= 0)
                node = x[tree[node].feature] <= tree[node].threshold
                           ? tree[node].left
                           : tree[node].right;
            acc += tree[node].prob;
        }
        return acc / static_cast<double>(trees.size());
    }
    double margin = b;
    for (int i = 0; i < FeatureRow::kFeatures; ++i) margin += w[i] * x[i];
    return sigmoid(margin);
}

namespace {

struct Standardized {
    std::vector<std::vector<double>> x;
    std::vector<int> y;  // 0/1
};

void fit_standardizer(const std::vector<FeatureRow>& rows, ClassifierModel& model) {
    model.feat_mean.assign(FeatureRow::kFeatures, 0.0);
    model.feat_std.assign(FeatureRow::kFeatures, 0.0);
    for (const auto& r : rows)
        for (int i = 0; i < FeatureRow::kFeatures; ++i)
            model.feat_mean[i] += r.feature(i);
    for (double& v : model.feat_mean) v /= static_cast<double>(rows.size());
    for (const auto& r : rows)
        for (int i = 0; i < FeatureRow::kFeatures; ++i) {
            const double d = r.feature(i) - model.feat_mean[i];
            model.feat_std[i] += d * d;
        }
    bool any_variance = false;
    for (double& v : model.feat_std) {
        v = std::sqrt(v / static_cast<double>(rows.size()));
        if (v > 1e-12) any_variance = true;
        else v = 1.0;  // dead feature, pass through centered
    }
    require(any_variance, ErrorKind::validation,
            "train_classifier: all features have zero variance");
}

Standardized standardize(const std::vector<FeatureRow>& rows,
                         const ClassifierModel& model) {
    Standardized s;
    for (const auto& r : rows) {
        std::vector<double> x(FeatureRow::kFeatures);
        for (int i = 0; i < FeatureRow::kFeatures; ++i)
            x[i] = (r.feature(i) - model.feat_mean[i]) / model.feat_std[i];
        s.x.push_back(std::move(x));
        s.y.push_back(r.label);
    }
    return s;
}

void train_logistic(const Standardized& data, ClassifierModel& model) {
    const int n = static_cast<int>(data.x.size());
    const double l2 = 1e-3, lr = 0.5;
    model.w.assign(FeatureRow::kFeatures, 0.0);
    model.b = 0.0;
    for (int iter = 0; iter < 3000; ++iter) {
        std::vector<double> gw(FeatureRow::kFeatures, 0.0);
        double gb = 0.0;
        for (int i = 0; i < n; ++i) {
            double margin = model.b;
            for (int f = 0; f < FeatureRow::kFeatures; ++f)
                margin += model.w[f] * data.x[i][f];
            const double p = sigmoid(margin);
            const double g = (p - data.y[i]) / n;
            for (int f = 0; f < FeatureRow::kFeatures; ++f) gw[f] += g * data.x[i][f];
            gb += g;
        }
        for (int f = 0; f < FeatureRow::kFeatures; ++f)
            model.w[f] -= lr * (gw[f] + l2 * model.w[f]);
        model.b -= lr * gb;
    }
}

void train_svm(const Standardized& data, ClassifierModel& model) {
    // Full-batch subgradient descent on the hinge loss with L2 regularization
    // (Pegasos step schedule).
    const int n = static_cast<int>(data.x.size());
    const double lambda = 1e-3;
    model.w.assign(FeatureRow::kFeatures, 0.0);
    model.b = 0.0;
    for (int t = 1; t <= 3000; ++t) {
        const double lr = 1.0 / (lambda * (t + 100.0));
        std::vector<double> gw(FeatureRow::kFeatures, 0.0);
        double gb = 0.0;
        for (int i = 0; i < n; ++i) {
            const double y = data.y[i] == 1 ? 1.0 : -1.0;
            double margin = model.b;
            for (int f = 0; f < FeatureRow::kFeatures; ++f)
                margin += model.w[f] * data.x[i][f];
            if (y * margin < 1.0) {
                for (int f = 0; f < FeatureRow::kFeatures; ++f)
                    gw[f] -= y * data.x[i][f] / n;
                gb -= y / n;
            }
        }
        for (int f = 0; f < FeatureRow::kFeatures; ++f)
            model.w[f] -= lr * (lambda * model.w[f] + gw[f]);
        model.b -= lr * gb;
    }
}

struct TreeBuilder {
    const Standardized& data;
    Rng& rng;
    int max_depth;
    std::vector<TreeNode> nodes;

    double gini(const std::vector<int>& idx) const {
        if (idx.empty()) return 0.0;
        double pos = 0.0;
        for (int i : idx) pos += data.y[i];
        const double p = pos / static_cast<double>(idx.size());
        return 2.0 * p * (1.0 - p);
    }

    int build(std::vector<int> idx, int depth) {
        TreeNode node;
        double pos = 0.0;
        for (int i : idx) pos += data.y[i];
        node.prob = idx.empty() ? 0.5 : pos / static_cast<double>(idx.size());

        bool pure = node.prob <= 0.0 || node.prob >= 1.0;
        if (depth >= max_depth || idx.size() < 2 || pure) {
            nodes.push_back(node);
            return static_cast<int>(nodes.size()) - 1;
        }

        // feature subsampling: ceil(sqrt(p)) candidates per split
        const int n_candidates = 2;  // ceil(sqrt(3))
        int best_feature = -1;
        double best_threshold = 0.0, best_score = 1e300;
        std::vector<int> features = {0, 1, 2};
        rng.shuffle(features);
        for (int c = 0; c < n_candidates; ++c) {
            const int f = features[c];
            std::vector<double> values;
            for (int i : idx) values.push_back(data.x[i][f]);
            std::sort(values.begin(), values.end());
            values.erase(std::unique(values.begin(), values.end()), values.end());
            for (std::size_t v = 0; v + 1 < values.size(); ++v) {
                const double thr = 0.5 * (values[v] + values[v + 1]);
                std::vector<int> left, right;
                for (int i : idx)
                    (data.x[i][f] <= thr ? left : right).push_back(i);
                const double score =
                    (gini(left) * left.size() + gini(right) * right.size()) /
                    static_cast<double>(idx.size());
                if (score < best_score) {
                    best_score = score;
                    best_feature = f;
                    best_threshold = thr;
                }
            }
        }
        if (best_feature < 0) {
            nodes.push_back(node);
            return static_cast<int>(nodes.size()) - 1;
        }

        std::vector<int> left, right;
        for (int i : idx)
            (data.x[i][best_feature] <= best_threshold ? left : right).push_back(i);
        if (left.empty() || right.empty()) {
            nodes.push_back(node);
            return static_cast<int>(nodes.size()) - 1;
        }
        node.feature = best_feature;
        node.threshold = best_threshold;
        const int self = static_cast<int>(nodes.size());
        nodes.push_back(node);
        nodes[self].left = build(std::move(left), depth + 1);
        nodes[self].right = build(std::move(right), depth + 1);
        return self;
    }
};

void train_forest(const Standardized& data, ClassifierModel& model,
                  const ForestConfig& cfg, std::uint64_t seed) {
    const int n = static_cast<int>(data.x.size());
    for (int t = 0; t < cfg.trees; ++t) {
        Rng rng(derive_seed(seed, "forest.tree", t));
        std::vector<int> bootstrap(n);
        for (int i = 0; i < n; ++i)
            bootstrap[i] = static_cast<int>(rng.uniform_index(n));
        TreeBuilder builder{data, rng, cfg.max_depth, {}};
        builder.build(std::move(bootstrap), 0);
        model.trees.push_back(std::move(builder.nodes));
    }
}

}  // namespace

ClassifierModel train_classifier(const std::vector<FeatureRow>& train,
                                 ClassifierKind kind, std::uint64_t seed,
                                 const ForestConfig& forest) {
    require(!train.empty(), ErrorKind::validation, "train_classifier: empty train set");
    ClassifierModel model;
    model.kind = kind;
    fit_standardizer(train, model);
    const Standardized data = standardize(train, model);
    switch (kind) {
        case ClassifierKind::logistic_regression: train_logistic(data, model); break;
        case ClassifierKind::linear_svm: train_svm(data, model); break;
        case ClassifierKind::random_forest: train_forest(data, model, forest, seed); break;
    }
    return model;
}

double auc_midrank(const std::vector<double>& scores, const std::vector<int>& labels) {
    require(scores.size() == labels.size() && !scores.empty(), ErrorKind::statistics,
            "auc: empty or mismatched inputs");
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    std::vector<double> rank(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double midrank = 0.5 * (i + j) + 1.0;  // 1-based midrank
        for (std::size_t k = i; k <= j; ++k) rank[order[k]] = midrank;
        i = j + 1;
    }
    double pos = 0.0, rank_sum = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        if (labels[k] == 1) {
            pos += 1.0;
            rank_sum += rank[k];
        }
    }
    const double neg = static_cast<double>(n) - pos;
    require(pos > 0 && neg > 0, ErrorKind::statistics,
            "auc: need both classes present");
    return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

MIAReport evaluate_mia(const ClassifierModel& model,
                       const std::vector<FeatureRow>& test) {
    require(!test.empty(), ErrorKind::statistics, "evaluate_mia: empty test split");
    MIAReport rep;
    std::vector<double> scores;
    std::vector<int> labels;
    for (const auto& row : test) {
        const double s = model.score(row);
        scores.push_back(s);
        labels.push_back(row.label);
        const bool predicted_member = s >= 0.5;
        if (predicted_member && row.label == 1) ++rep.tp;
        else if (predicted_member && row.label == 0) ++rep.fp;
        else if (!predicted_member && row.label == 0) ++rep.tn;
        else ++rep.fn;
    }
    rep.accuracy = static_cast<double>(rep.tp + rep.tn) /
                   static_cast<double>(test.size());
    rep.auc = auc_midrank(scores, labels);
    return rep;
}

double permuted_label_auc(const MIADataset& ds, ClassifierKind kind,
                          std::uint64_t seed, const ForestConfig& forest) {
    MIADataset shuffled = ds;
    std::vector<int> labels;
    for (const auto& r : shuffled.train) labels.push_back(r.label);
    for (const auto& r : shuffled.test) labels.push_back(r.label);
    Rng rng(derive_seed(seed, "mia.permute"));
    rng.shuffle(labels);
    std::size_t k = 0;
    for (auto& r : shuffled.train) r.label = labels[k++];
    for (auto& r : shuffled.test) r.label = labels[k++];
    const auto model = train_classifier(shuffled.train, kind, seed, forest);
    return evaluate_mia(model, shuffled.test).auc;
}

double amplification_ratio(const std::vector<double>& metric_deltas_mem,
                           const std::vector<double>& metric_deltas_non) {
    require(!metric_deltas_mem.empty() && !metric_deltas_non.empty(),
            ErrorKind::validation, "amplification_ratio: empty delta list");
    double mem = 0.0, non = 0.0;
    for (double v : metric_deltas_mem) mem += v;
    for (double v : metric_deltas_non) non += v;
    mem /= static_cast<double>(metric_deltas_mem.size());
    non /= static_cast<double>(metric_deltas_non.size());
    require(non != 0.0, ErrorKind::numerical,
            "amplification_ratio: undefined (zero-mean denominator)");
    return mem / non;
}

}  // namespace leaky::leakage
