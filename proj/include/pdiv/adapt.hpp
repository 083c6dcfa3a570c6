#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pdiv/ensemble.hpp"

namespace pdiv {

// Per-hypothesis anchor contribution weights: raw mean cosine similarities
// and their softmax normalization.
struct AnchorWeights {
    Vector raw;         // w_i
    Vector normalized;  // softmax(w), sums to 1
};

enum class CosineMode { per_sample, flattened };

// Estimated target class proportions used to weight the label-entropy term.
struct ClassProportion {
    enum class Source { uniform, pseudo, true_labels };
    Vector w;  // length C, sums to 1
    Source source = Source::uniform;

    void validate() const;
    static ClassProportion uniform(int classes);
    static ClassProportion from_labels(const std::vector<int>& labels, int classes, Source src);
};

enum class AnchorStrategy { fixed, random, ensemble, whp };

std::string to_string(AnchorStrategy s);
AnchorStrategy anchor_strategy_from_string(const std::string& s);

enum class ProportionMode { uniform, pseudo, true_labels };

std::string to_string(ProportionMode m);
ProportionMode proportion_mode_from_string(const std::string& s);

struct AdaptationConfig {
    double alpha = 1.0;
    double beta = 0.5;
    double lr = 0.02;
    int iterations = 300;
    int batch_size = 64;
    double momentum = 0.0;
    AnchorStrategy anchor_strategy = AnchorStrategy::whp;
    int anchor_index = -1;  // required for fixed
    ProportionMode proportion_mode = ProportionMode::uniform;
    int proportion_refresh_interval = 0;  // 0: every epoch-equivalent (N / batch_size steps)
    CosineMode cosine_mode = CosineMode::per_sample;
    bool full_marginal = false;  // label marginal over the whole target set rather than the batch
    int log_interval = 10;
    std::uint64_t seed = 1;
};

// One trace record per logging interval, serialized as JSON lines.
struct TraceRecord {
    int step = 0;
    double loss = 0.0;
    double mi = 0.0;  // mean weighted MI over hypotheses
    double hd = 0.0;
    std::vector<double> anchor_weights;           // normalized
    std::vector<double> per_hypothesis_accuracy;  // only when trace labels are supplied
};

struct AdaptationResult {
    std::vector<TraceRecord> trace;
    ClassProportion final_proportion;
};

// I(X; Yhat) = H(mean prediction) - mean per-row entropy, in nats.
double mutual_information(const Matrix& preds);

// Weighted variant: the marginal-entropy term becomes
// -sum_c W_c * m_c * log m_c (per-class weighting inside the sum); the
// conditional term is unweighted.
double weighted_mutual_information(const Matrix& preds, const ClassProportion& w);

// w_i = mean over j != i of the (per-sample, then sample-averaged) cosine
// similarity between the probability rows of members i and j; normalized by
// softmax. Treated as constants in gradients.
AnchorWeights anchor_weights(const PredictionTensor& preds, CosineMode mode = CosineMode::per_sample);

// whp: sum_i w_i h_i(X); ensemble: uniform mean; fixed/random: the chosen
// member's rows verbatim.
Matrix build_anchor(const PredictionTensor& preds, AnchorStrategy strategy,
                    const AnchorWeights* weights = nullptr, int anchor_index = -1);

// Mean over members and samples of CE(anchor row || member row). Members
// listed in exclude take no part in the average (fixed/random anchors).
double hypothesis_disparity(const PredictionTensor& preds, const Matrix& anchor,
                            int exclude_member = -1);

// Argmax labels of the ensemble-average rows plus the class proportions of
// those labels (zero-count classes floored at 1e-6 before renormalization).
std::pair<std::vector<int>, ClassProportion> pseudo_labels(const Matrix& ensemble_mean);

// Source-free adaptation: minimizes alpha * mean(-I_W) + beta * HD(h, anchor)
// over the feature extractors; classifiers stay bit-identical. Labels, when
// provided, are used only for trace accuracy and proportion_mode=true.
AdaptationResult adapt_target(Ensemble& ens, const Matrix& target_x, const AdaptationConfig& cfg,
                              const std::vector<int>* eval_labels = nullptr);

void write_trace_jsonl(const std::vector<TraceRecord>& trace, const std::string& path);

}  // namespace pdiv
