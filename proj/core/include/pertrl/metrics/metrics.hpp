#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace pertrl::metrics {

// Held-out predictions: all three matrices are cells x genes.
struct PredictionSet {
    Eigen::MatrixXd predicted;
    Eigen::MatrixXd observed;
    Eigen::MatrixXd baseline;

    void validate() const;
};

struct ClassificationMetrics {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

struct RegressionMetrics {
    double mse = 0.0;
    double rmse = 0.0;
    double mae = 0.0;
    double r2 = 0.0;
    double pearson = 0.0;
    bool r2_defined = true;  // false when observed is constant
};

// The ten-metric row, in report column order.
struct MetricReport {
    double accuracy = 0.0, precision = 0.0, recall = 0.0, f1 = 0.0, auprc = 0.0;
    double mse = 0.0, rmse = 0.0, mae = 0.0, r2 = 0.0, pearson = 0.0;
    bool r2_defined = true;

    static const std::vector<std::string>& column_names();
    std::vector<double> columns() const;
    std::string csv_row() const;
};

// Per-(cell, gene) up-regulation labels: 1 iff value - baseline > threshold,
// applied identically to predictions and observations.
std::pair<std::vector<int>, std::vector<int>> effect_labels(
    const Eigen::MatrixXd& predicted, const Eigen::MatrixXd& observed,
    const Eigen::MatrixXd& baseline, double threshold);

// Micro-averaged binary metrics; PREC = 0 when TP+FP = 0, F1 = 0 when
// PREC+REC = 0.
ClassificationMetrics classification_metrics(const std::vector<int>& pred_labels,
                                             const std::vector<int>& true_labels);

// Area under the precision-recall curve, step interpolation over descending
// scores (equal scores collapse to one threshold). Requires >= 1 positive.
double auprc(const std::vector<double>& scores, const std::vector<int>& labels);

RegressionMetrics regression_metrics(const Eigen::VectorXd& predicted,
                                     const Eigen::VectorXd& observed);

// Full ten-metric evaluation of a prediction set at a binarization threshold.
MetricReport full_report(const PredictionSet& set, double threshold);

// Tables-style rendering: one row per (algorithm, modality).
struct ReportRow {
    std::string algorithm;
    std::string modality;
    MetricReport metrics;
};
std::string render_table(const std::vector<ReportRow>& rows);
std::string render_csv(const std::vector<ReportRow>& rows);
MetricReport mean_report(const std::vector<MetricReport>& reports);

}  // namespace pertrl::metrics
