#include "pdiv/metrics.hpp"

#include <cmath>

#include "json.hpp"
#include "pdiv/errors.hpp"

namespace pdiv {

std::string EvalReport::to_json() const {
    nlohmann::json j{{"accuracy", accuracy},
                     {"brier", brier},
                     {"ece", ece},
                     {"disagreement", disagreement},
                     {"disagreement_normalized", disagreement_normalized},
                     {"per_class_accuracy", per_class_accuracy}};
    return j.dump();
}

double disagreement(const PredictionTensor& preds) {
    const int m = preds.members();
    if (m < 2) throw ConfigError("disagreement: need at least 2 hypotheses");
    const int n = preds.rows();
    std::vector<std::vector<int>> labels(m);
    for (int i = 0; i < m; ++i) labels[i] = argmax_labels(preds.member[i]);

    long long differing = 0;
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < m; ++j) {
            if (i == j) continue;
            for (int r = 0; r < n; ++r) differing += (labels[i][r] != labels[j][r]) ? 1 : 0;
        }
    }
    return static_cast<double>(differing) / static_cast<double>(n);
}

double disagreement_normalized(const PredictionTensor& preds) {
    const int m = preds.members();
    return disagreement(preds) / static_cast<double>(m * (m - 1));
}

double brier(const Matrix& preds, const std::vector<int>& labels) {
    if (static_cast<Eigen::Index>(labels.size()) != preds.rows()) {
        throw ShapeError("brier: label count != rows");
    }
    double total = 0.0;
    for (Eigen::Index i = 0; i < preds.rows(); ++i) {
        if (labels[i] < 0 || labels[i] >= preds.cols()) throw ValidationError("brier: label out of range");
        for (Eigen::Index c = 0; c < preds.cols(); ++c) {
            const double target = (labels[i] == c) ? 1.0 : 0.0;
            const double d = preds(i, c) - target;
            total += d * d;
        }
    }
    return total / static_cast<double>(preds.rows());
}

double ece(const Matrix& preds, const std::vector<int>& labels, int bins) {
    if (bins < 1) throw ConfigError("ece: bins must be >= 1");
    if (static_cast<Eigen::Index>(labels.size()) != preds.rows()) {
        throw ShapeError("ece: label count != rows");
    }
    const int n = static_cast<int>(preds.rows());
    std::vector<double> conf_sum(bins, 0.0), acc_sum(bins, 0.0);
    std::vector<int> count(bins, 0);
    const std::vector<int> hard = argmax_labels(preds);
    for (int i = 0; i < n; ++i) {
        const double conf = preds.row(i).maxCoeff();
        int b = static_cast<int>(conf * bins);
        b = std::min(std::max(b, 0), bins - 1);
        conf_sum[b] += conf;
        acc_sum[b] += (hard[i] == labels[i]) ? 1.0 : 0.0;
        ++count[b];
    }
    double e = 0.0;
    for (int b = 0; b < bins; ++b) {
        if (count[b] == 0) continue;
        const double conf = conf_sum[b] / count[b];
        const double acc = acc_sum[b] / count[b];
        e += (static_cast<double>(count[b]) / n) * std::abs(acc - conf);
    }
    return e;
}

CIResult ci_difference(double acc1, int n1, double acc2, int n2, double z) {
    if (n1 < 1 || n2 < 1) throw ValidationError("ci_difference: sample counts must be >= 1");
    if (acc1 < 0.0 || acc1 > 1.0 || acc2 < 0.0 || acc2 > 1.0) {
        throw ValidationError("ci_difference: accuracies must be in [0, 1]");
    }
    CIResult r;
    r.p_diff = acc1 - acc2;
    const double se1_sq = acc1 * (1.0 - acc1) / n1;
    const double se2_sq = acc2 * (1.0 - acc2) / n2;
    r.se_diff = std::sqrt(se1_sq + se2_sq);
    r.lo = r.p_diff - z * r.se_diff;
    r.hi = r.p_diff + z * r.se_diff;
    r.overlaps_zero = r.lo <= 0.0 && 0.0 <= r.hi;
    return r;
}

double accuracy(const std::vector<int>& predicted, const std::vector<int>& labels) {
    if (predicted.size() != labels.size()) throw ShapeError("accuracy: size mismatch");
    if (predicted.empty()) throw ValidationError("accuracy: empty input");
    int correct = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i) correct += (predicted[i] == labels[i]) ? 1 : 0;
    return static_cast<double>(correct) / predicted.size();
}

EvalReport evaluate(const EnsemblePrediction& pred, const std::vector<int>& labels, int classes) {
    EvalReport r;
    r.accuracy = accuracy(pred.labels, labels);
    r.brier = brier(pred.mean, labels);
    r.ece = ece(pred.mean, labels);
    if (pred.tensor.members() >= 2) {
        r.disagreement = disagreement(pred.tensor);
        r.disagreement_normalized = disagreement_normalized(pred.tensor);
    }
    std::vector<int> per_class_correct(classes, 0), per_class_total(classes, 0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        ++per_class_total[labels[i]];
        if (pred.labels[i] == labels[i]) ++per_class_correct[labels[i]];
    }
    r.per_class_accuracy.resize(classes, 0.0);
    for (int c = 0; c < classes; ++c) {
        if (per_class_total[c] > 0) {
            r.per_class_accuracy[c] = static_cast<double>(per_class_correct[c]) / per_class_total[c];
        }
    }
    return r;
}

}  // namespace pdiv
