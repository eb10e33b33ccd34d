#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "pertrl/metrics/metrics.hpp"

using namespace pertrl::metrics;

namespace {

// Straight-line reimplementation of the regression metrics.
RegressionMetrics reference_regression(const Eigen::VectorXd& p,
                                       const Eigen::VectorXd& o) {
    RegressionMetrics r;
    const int n = static_cast<int>(p.size());
    double se = 0.0, ae = 0.0;
    for (int i = 0; i < n; ++i) {
        se += (p(i) - o(i)) * (p(i) - o(i));
        ae += std::abs(p(i) - o(i));
    }
    r.mse = se / n;
    r.rmse = std::sqrt(r.mse);
    r.mae = ae / n;
    const double om = o.mean(), pm = p.mean();
    double ss_tot = 0.0, cov = 0.0, vp = 0.0, vo = 0.0;
    for (int i = 0; i < n; ++i) {
        ss_tot += (o(i) - om) * (o(i) - om);
        cov += (p(i) - pm) * (o(i) - om);
        vp += (p(i) - pm) * (p(i) - pm);
        vo += (o(i) - om) * (o(i) - om);
    }
    r.r2_defined = ss_tot > 0.0;
    r.r2 = r.r2_defined ? 1.0 - se / ss_tot : 0.0;
    r.pearson = (vp > 0.0 && vo > 0.0) ? cov / std::sqrt(vp * vo) : 0.0;
    return r;
}

// Reference AUPRC: walk descending unique score thresholds, rectangle rule
// in recall with the precision at each threshold.
double reference_auprc(std::vector<double> scores, std::vector<int> labels) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0u);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return scores[a] > scores[b];
    });
    const double total_pos =
        static_cast<double>(std::count(labels.begin(), labels.end(), 1));
    double tp = 0.0, fp = 0.0, area = 0.0, prev_recall = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) {
            if (labels[order[j]] == 1)
                tp += 1.0;
            else
                fp += 1.0;
            ++j;
        }
        const double recall = tp / total_pos;
        const double precision = tp / (tp + fp);
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j;
    }
    return area;
}

}  // namespace

TEST_CASE("classification counts on a fixed confusion table") {
    // TP=2, FP=1, FN=1, TN=6 over 10 samples.
    const std::vector<int> pred = {1, 1, 1, 0, 0, 0, 0, 0, 0, 0};
    const std::vector<int> truth = {1, 1, 0, 1, 0, 0, 0, 0, 0, 0};
    const ClassificationMetrics m = classification_metrics(pred, truth);
    CHECK(m.accuracy == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(m.precision == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(m.recall == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(m.f1 == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("zero-denominator conventions") {
    // No positive predictions: precision 0 by convention, F1 0.
    const std::vector<int> none = {0, 0, 0, 0};
    const std::vector<int> truth = {1, 0, 1, 0};
    const ClassificationMetrics m = classification_metrics(none, truth);
    CHECK(m.precision == 0.0);
    CHECK(m.recall == 0.0);
    CHECK(m.f1 == 0.0);
    CHECK(m.accuracy == 0.5);

    // All-negative truth: recall 0, accuracy perfect when predictions agree.
    const std::vector<int> neg_truth = {0, 0, 0, 0};
    const ClassificationMetrics m2 = classification_metrics(none, neg_truth);
    CHECK(m2.accuracy == 1.0);
    CHECK(m2.recall == 0.0);
    CHECK(m2.f1 == 0.0);
}

TEST_CASE("effect labels binarize at the configured threshold") {
    Eigen::MatrixXd baseline(1, 4), predicted(1, 4), observed(1, 4);
    baseline << 1.0, 1.0, 1.0, 1.0;
    predicted << 1.05, 1.1001, 1.5, 0.2;  // deltas 0.05, 0.1001, 0.5, -0.8
    observed << 1.2, 1.0, 0.9, 2.0;       // deltas 0.2, 0.0, -0.1, 1.0
    const auto [pred, truth] = effect_labels(predicted, observed, baseline, 0.1);
    CHECK(pred == std::vector<int>{0, 1, 1, 0});
    CHECK(truth == std::vector<int>{1, 0, 0, 1});
}

TEST_CASE("auprc on a hand-worked four-point case") {
    // Descending scores: (0.9, +), (0.8, -), (0.7, +), (0.1, -).
    // Recall steps: 0.5 at precision 1, then 1.0 at precision 2/3.
    const std::vector<double> scores = {0.9, 0.8, 0.7, 0.1};
    const std::vector<int> labels = {1, 0, 1, 0};
    const double expected = 0.5 * 1.0 + 0.5 * (2.0 / 3.0);
    CHECK(auprc(scores, labels) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("auprc handles ties as one threshold group") {
    // All scores equal: a single group, area = positive rate.
    const std::vector<double> tied = {0.5, 0.5, 0.5, 0.5, 0.5};
    const std::vector<int> labels = {1, 0, 0, 1, 0};
    CHECK(auprc(tied, labels) == doctest::Approx(0.4).epsilon(1e-12));
}

TEST_CASE("auprc matches the reference implementation on random data") {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> scores;
        std::vector<int> labels;
        bool has_pos = false;
        for (int i = 0; i < 60; ++i) {
            // Coarse quantization forces frequent ties.
            scores.push_back(std::floor(u(rng) * 8.0) / 8.0);
            labels.push_back(u(rng) < 0.3 ? 1 : 0);
            has_pos = has_pos || labels.back() == 1;
        }
        if (!has_pos) labels[0] = 1;
        CHECK(auprc(scores, labels) ==
              doctest::Approx(reference_auprc(scores, labels)).epsilon(1e-10));
    }
}

TEST_CASE("auprc of a perfect ranking is 1 and requires a positive") {
    CHECK(auprc({0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0}) == doctest::Approx(1.0));
    CHECK_THROWS((void)auprc({0.5, 0.4}, {0, 0}));
}

TEST_CASE("regression metrics match the reference on random vectors") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int trial = 0; trial < 10; ++trial) {
        const int n = 40;
        Eigen::VectorXd p(n), o(n);
        for (int i = 0; i < n; ++i) {
            o(i) = normal(rng);
            p(i) = 0.7 * o(i) + 0.4 * normal(rng);
        }
        const RegressionMetrics got = regression_metrics(p, o);
        const RegressionMetrics ref = reference_regression(p, o);
        CHECK(got.mse == doctest::Approx(ref.mse).epsilon(1e-10));
        CHECK(got.rmse == doctest::Approx(ref.rmse).epsilon(1e-10));
        CHECK(got.mae == doctest::Approx(ref.mae).epsilon(1e-10));
        CHECK(got.r2 == doctest::Approx(ref.r2).epsilon(1e-10));
        CHECK(got.pearson == doctest::Approx(ref.pearson).epsilon(1e-10));
        CHECK(got.r2_defined);
    }
}

TEST_CASE("r2 can be negative; pearson is affine invariant, r2 is not") {
    Eigen::VectorXd o(4), bad(4);
    o << 1.0, 2.0, 3.0, 4.0;
    bad << 4.0, 1.0, 5.0, 0.0;  // worse than predicting the mean
    CHECK(regression_metrics(bad, o).r2 < 0.0);

    Eigen::VectorXd p(4);
    p << 1.1, 1.9, 3.2, 3.9;
    const RegressionMetrics base = regression_metrics(p, o);
    const Eigen::VectorXd affine = (2.5 * p.array() - 7.0).matrix();
    const RegressionMetrics scaled = regression_metrics(affine, o);
    CHECK(scaled.pearson == doctest::Approx(base.pearson).epsilon(1e-12));
    CHECK(scaled.r2 != doctest::Approx(base.r2).epsilon(1e-6));

    // Perfect prediction.
    const RegressionMetrics perfect = regression_metrics(o, o);
    CHECK(perfect.r2 == doctest::Approx(1.0));
    CHECK(perfect.pearson == doctest::Approx(1.0));
    CHECK(perfect.mse == 0.0);
}

TEST_CASE("constant observations flag r2 as undefined") {
    Eigen::VectorXd o = Eigen::VectorXd::Constant(5, 2.0);
    Eigen::VectorXd p(5);
    p << 1.0, 2.0, 3.0, 2.0, 2.0;
    const RegressionMetrics m = regression_metrics(p, o);
    CHECK(!m.r2_defined);
    CHECK(m.mse == doctest::Approx(0.4).epsilon(1e-12));
}

TEST_CASE("full report wires the ten columns consistently") {
    std::mt19937_64 rng(12);
    std::normal_distribution<double> normal(0.0, 0.5);
    const int cells = 6, genes = 5;
    PredictionSet set;
    set.baseline = Eigen::MatrixXd::Constant(cells, genes, 1.0);
    set.observed.resize(cells, genes);
    set.predicted.resize(cells, genes);
    for (int r = 0; r < cells; ++r)
        for (int c = 0; c < genes; ++c) {
            set.observed(r, c) = 1.0 + normal(rng);
            set.predicted(r, c) = 0.5 * set.observed(r, c) + 0.5 + 0.2 * normal(rng);
        }
    const MetricReport rep = full_report(set, 0.1);

    // Regression block agrees with flattened vectors.
    Eigen::VectorXd pf(cells * genes), of(cells * genes);
    int k = 0;
    for (int r = 0; r < cells; ++r)
        for (int c = 0; c < genes; ++c, ++k) {
            pf(k) = set.predicted(r, c);
            of(k) = set.observed(r, c);
        }
    const RegressionMetrics ref = reference_regression(pf, of);
    CHECK(rep.mse == doctest::Approx(ref.mse).epsilon(1e-10));
    CHECK(rep.r2 == doctest::Approx(ref.r2).epsilon(1e-10));
    CHECK(rep.pearson == doctest::Approx(ref.pearson).epsilon(1e-10));

    // Classification block agrees with explicit labels.
    const auto [pl, tl] =
        effect_labels(set.predicted, set.observed, set.baseline, 0.1);
    const ClassificationMetrics cm = classification_metrics(pl, tl);
    CHECK(rep.accuracy == doctest::Approx(cm.accuracy).epsilon(1e-12));
    CHECK(rep.f1 == doctest::Approx(cm.f1).epsilon(1e-12));
    CHECK(rep.auprc >= 0.0);
    CHECK(rep.auprc <= 1.0);

    CHECK(MetricReport::column_names().size() == 10);
    CHECK(rep.columns().size() == 10);

    // Shape mismatches are rejected.
    PredictionSet bad = set;
    bad.baseline = Eigen::MatrixXd::Zero(2, 2);
    CHECK_THROWS(bad.validate());
}

TEST_CASE("mean report averages per column") {
    MetricReport a, b;
    a.accuracy = 0.4;
    b.accuracy = 0.8;
    a.mse = 1.0;
    b.mse = 3.0;
    a.r2 = 0.2;
    b.r2 = 0.6;
    const MetricReport m = mean_report({a, b});
    CHECK(m.accuracy == doctest::Approx(0.6));
    CHECK(m.mse == doctest::Approx(2.0));
    CHECK(m.r2 == doctest::Approx(0.4));
}

TEST_CASE("rendered tables carry one row per group") {
    MetricReport rep;
    rep.accuracy = 0.5;
    std::vector<ReportRow> rows = {{"TRPO_PPO", "RNA", rep}, {"PPO_ONLY", "RNA", rep}};
    const std::string table = render_table(rows);
    CHECK(table.find("TRPO_PPO") != std::string::npos);
    CHECK(table.find("PPO_ONLY") != std::string::npos);
    CHECK(table.find("Accuracy") != std::string::npos);
    const std::string csv = render_csv(rows);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);  // header + 2 rows
}
