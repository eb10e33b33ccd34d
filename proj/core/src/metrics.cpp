#include "pertrl/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace pertrl::metrics {

void PredictionSet::validate() const {
    if (predicted.rows() != observed.rows() || predicted.cols() != observed.cols() ||
        predicted.rows() != baseline.rows() || predicted.cols() != baseline.cols())
        throw std::invalid_argument("PredictionSet: matrix shapes disagree");
    if (!predicted.allFinite() || !observed.allFinite() || !baseline.allFinite())
        throw std::invalid_argument("PredictionSet: non-finite entries");
}

const std::vector<std::string>& MetricReport::column_names() {
    static const std::vector<std::string> names = {
        "Accuracy", "Precision", "Recall", "F1", "AUPRC",
        "MSE", "RMSE", "MAE", "R2", "PearsonCorr"};
    return names;
}

std::vector<double> MetricReport::columns() const {
    return {accuracy, precision, recall, f1, auprc, mse, rmse, mae, r2, pearson};
}

std::string MetricReport::csv_row() const {
    std::ostringstream os;
    os.precision(17);
    const auto cols = columns();
    for (std::size_t i = 0; i < cols.size(); ++i) {
        if (i) os << ',';
        if ((i == 8 || i == 9) && !r2_defined)
            os << "undefined";
        else
            os << cols[i];
    }
    return os.str();
}

std::pair<std::vector<int>, std::vector<int>> effect_labels(
    const Eigen::MatrixXd& predicted, const Eigen::MatrixXd& observed,
    const Eigen::MatrixXd& baseline, double threshold) {
    if (predicted.rows() != observed.rows() || predicted.cols() != observed.cols() ||
        predicted.rows() != baseline.rows() || predicted.cols() != baseline.cols())
        throw std::invalid_argument("effect_labels: shape mismatch");
    std::vector<int> pred, truth;
    pred.reserve(static_cast<std::size_t>(predicted.size()));
    truth.reserve(static_cast<std::size_t>(predicted.size()));
    for (Eigen::Index r = 0; r < predicted.rows(); ++r)
        for (Eigen::Index c = 0; c < predicted.cols(); ++c) {
            pred.push_back(predicted(r, c) - baseline(r, c) > threshold ? 1 : 0);
            truth.push_back(observed(r, c) - baseline(r, c) > threshold ? 1 : 0);
        }
    return {pred, truth};
}

ClassificationMetrics classification_metrics(const std::vector<int>& pred_labels,
                                             const std::vector<int>& true_labels) {
    if (pred_labels.empty() || pred_labels.size() != true_labels.size())
        throw std::invalid_argument("classification_metrics: empty or mismatched input");
    long tp = 0, fp = 0, fn = 0, tn = 0;
    for (std::size_t i = 0; i < pred_labels.size(); ++i) {
        const bool p = pred_labels[i] != 0, t = true_labels[i] != 0;
        if (p && t) ++tp;
        else if (p && !t) ++fp;
        else if (!p && t) ++fn;
        else ++tn;
    }
    ClassificationMetrics m;
    const double n = static_cast<double>(tp + fp + fn + tn);
    m.accuracy = static_cast<double>(tp + tn) / n;
    m.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    m.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    m.f1 = m.precision + m.recall > 0.0
               ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
               : 0.0;
    return m;
}

double auprc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.empty() || scores.size() != labels.size())
        throw std::invalid_argument("auprc: empty or mismatched input");
    const long total_pos = std::count_if(labels.begin(), labels.end(),
                                         [](int l) { return l != 0; });
    if (total_pos == 0) throw std::invalid_argument("auprc: no positive labels");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0u);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return scores[a] > scores[b];
    });

    double area = 0.0;
    double prev_recall = 0.0;
    long tp = 0, fp = 0;
    std::size_t i = 0;
    while (i < order.size()) {
        // Consume the whole tie group before emitting a curve point.
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) {
            if (labels[order[j]] != 0) ++tp;
            else ++fp;
            ++j;
        }
        const double recall = static_cast<double>(tp) / static_cast<double>(total_pos);
        const double precision =
            static_cast<double>(tp) / static_cast<double>(tp + fp);
        area += precision * (recall - prev_recall);
        prev_recall = recall;
        i = j;
    }
    return area;
}

RegressionMetrics regression_metrics(const Eigen::VectorXd& predicted,
                                     const Eigen::VectorXd& observed) {
    if (predicted.size() != observed.size() || predicted.size() < 2)
        throw std::invalid_argument("regression_metrics: need equal lengths >= 2");
    const double n = static_cast<double>(predicted.size());
    RegressionMetrics m;
    const Eigen::ArrayXd err = (predicted - observed).array();
    m.mse = err.square().sum() / n;
    m.rmse = std::sqrt(m.mse);
    m.mae = err.abs().sum() / n;

    const double obs_mean = observed.mean();
    const double ss_tot = (observed.array() - obs_mean).square().sum();
    if (ss_tot == 0.0) {
        m.r2_defined = false;
        m.r2 = 0.0;
        m.pearson = 0.0;
        return m;
    }
    m.r2 = 1.0 - err.square().sum() / ss_tot;

    const double pred_mean = predicted.mean();
    const Eigen::ArrayXd dp = predicted.array() - pred_mean;
    const Eigen::ArrayXd dy = observed.array() - obs_mean;
    const double denom = std::sqrt(dp.square().sum() * dy.square().sum());
    if (denom == 0.0) {
        m.r2_defined = false;
        m.pearson = 0.0;
        return m;
    }
    m.pearson = (dp * dy).sum() / denom;
    return m;
}

MetricReport full_report(const PredictionSet& set, double threshold) {
    set.validate();
    MetricReport rep;

    auto [pred_labels, true_labels] =
        effect_labels(set.predicted, set.observed, set.baseline, threshold);
    const ClassificationMetrics cm = classification_metrics(pred_labels, true_labels);
    rep.accuracy = cm.accuracy;
    rep.precision = cm.precision;
    rep.recall = cm.recall;
    rep.f1 = cm.f1;

    // AUPRC scores: predicted deltas ranked against the true labels.
    std::vector<double> scores;
    scores.reserve(true_labels.size());
    for (Eigen::Index r = 0; r < set.predicted.rows(); ++r)
        for (Eigen::Index c = 0; c < set.predicted.cols(); ++c)
            scores.push_back(set.predicted(r, c) - set.baseline(r, c));
    const bool any_pos =
        std::any_of(true_labels.begin(), true_labels.end(), [](int l) { return l != 0; });
    rep.auprc = any_pos ? auprc(scores, true_labels) : 0.0;

    Eigen::VectorXd pred_flat(set.predicted.size());
    Eigen::VectorXd obs_flat(set.observed.size());
    Eigen::Index k = 0;
    for (Eigen::Index r = 0; r < set.predicted.rows(); ++r)
        for (Eigen::Index c = 0; c < set.predicted.cols(); ++c, ++k) {
            pred_flat(k) = set.predicted(r, c);
            obs_flat(k) = set.observed(r, c);
        }
    const RegressionMetrics rm = regression_metrics(pred_flat, obs_flat);
    rep.mse = rm.mse;
    rep.rmse = rm.rmse;
    rep.mae = rm.mae;
    rep.r2 = rm.r2;
    rep.pearson = rm.pearson;
    rep.r2_defined = rm.r2_defined;
    return rep;
}

MetricReport mean_report(const std::vector<MetricReport>& reports) {
    if (reports.empty()) throw std::invalid_argument("mean_report: no reports");
    MetricReport out;
    for (const auto& r : reports) {
        out.accuracy += r.accuracy;
        out.precision += r.precision;
        out.recall += r.recall;
        out.f1 += r.f1;
        out.auprc += r.auprc;
        out.mse += r.mse;
        out.rmse += r.rmse;
        out.mae += r.mae;
        out.r2 += r.r2;
        out.pearson += r.pearson;
        out.r2_defined = out.r2_defined && r.r2_defined;
    }
    const double n = static_cast<double>(reports.size());
    out.accuracy /= n; out.precision /= n; out.recall /= n; out.f1 /= n;
    out.auprc /= n; out.mse /= n; out.rmse /= n; out.mae /= n;
    out.r2 /= n; out.pearson /= n;
    return out;
}

namespace {
std::string fmt(double v) {
    std::ostringstream os;
    os.precision(4);
    os << std::fixed << v;
    return os.str();
}
}  // namespace

std::string render_table(const std::vector<ReportRow>& rows) {
    std::ostringstream os;
    os << "Algorithm    Modality ";
    for (const auto& c : MetricReport::column_names()) {
        os << ' ';
        os.width(11);
        os << c;
    }
    os << '\n';
    for (const auto& row : rows) {
        os.width(12);
        os << std::left << row.algorithm << ' ';
        os.width(8);
        os << std::left << row.modality << std::right;
        for (double v : row.metrics.columns()) {
            os << ' ';
            os.width(11);
            os << fmt(v);
        }
        os << '\n';
    }
    return os.str();
}

std::string render_csv(const std::vector<ReportRow>& rows) {
    std::ostringstream os;
    os << "Algorithm,Modality";
    for (const auto& c : MetricReport::column_names()) os << ',' << c;
    os << '\n';
    for (const auto& row : rows)
        os << row.algorithm << ',' << row.modality << ',' << row.metrics.csv_row()
           << '\n';
    return os.str();
}

}  // namespace pertrl::metrics
