#pragma once

#include <string>
#include <vector>

#include "pdiv/ensemble.hpp"

namespace pdiv {

struct EvalReport {
    double accuracy = 0.0;
    double brier = 0.0;  // multiclass sum-over-classes form, in [0, 2]
    double ece = 0.0;
    double disagreement = 0.0;             // raw pairwise rate
    double disagreement_normalized = 0.0;  // divided by M(M-1), in [0, 1]
    std::vector<double> per_class_accuracy;

    std::string to_json() const;
};

struct CIResult {
    double p_diff = 0.0;
    double se_diff = 0.0;
    double lo = 0.0;
    double hi = 0.0;
    bool overlaps_zero = true;
};

// Function-space diversity: over every ordered pair of hypotheses, the count
// of samples whose argmax labels differ, divided by N.
double disagreement(const PredictionTensor& preds);
double disagreement_normalized(const PredictionTensor& preds);

// Mean over samples of sum_c (p_c - [y == c])^2.
double brier(const Matrix& preds, const std::vector<int>& labels);

// Equal-width confidence bins over the max probability;
// sum_b (n_b / N) * |acc_b - conf_b|. Empty bins contribute 0.
double ece(const Matrix& preds, const std::vector<int>& labels, int bins = 10);

// Difference of two accuracy proportions with its standard error:
// interval = p_diff +/- z * sqrt(SE1^2 + SE2^2). z defaults to 1.
CIResult ci_difference(double acc1, int n1, double acc2, int n2, double z = 1.0);

double accuracy(const std::vector<int>& predicted, const std::vector<int>& labels);

// Full report for an ensemble prediction against evaluation labels. Brier and
// ECE are computed on the ensemble-average probabilities.
EvalReport evaluate(const EnsemblePrediction& pred, const std::vector<int>& labels, int classes);

}  // namespace pdiv
