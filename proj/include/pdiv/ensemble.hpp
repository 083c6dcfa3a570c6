#pragma once

#include <memory>
#include <string>
#include <vector>

#include "pdiv/datagen.hpp"
#include "pdiv/diffcore.hpp"

namespace pdiv {

// One backbone shape: hidden widths of the feature extractor, bottleneck
// (feature) width, classifier widths ending in the class count.
struct ArchSpec {
    std::vector<int> feature_widths;
    int bottleneck = 16;
    std::vector<int> classifier_widths;  // last entry == classes

    bool operator==(const ArchSpec&) const = default;
    int classes() const { return classifier_widths.empty() ? 0 : classifier_widths.back(); }
    void validate() const;
};

// h = f o g. The extractor is held by shared_ptr so a shared-backbone
// ensemble can alias one extractor across heads.
struct Hypothesis {
    std::shared_ptr<ParamSet> extractor;
    ParamSet classifier;
    ArchSpec arch;

    NetView net() const { return compose(*extractor, classifier); }
};

enum class Topology { ShB, SeB, DBA };

std::string to_string(Topology t);
Topology topology_from_string(const std::string& s);

struct Ensemble {
    std::vector<Hypothesis> hypotheses;
    Topology topology = Topology::DBA;
    int anchor_index = -1;  // for the fixed anchor strategy
    int input_dim = 0;
    int classes = 0;

    int size() const { return static_cast<int>(hypotheses.size()); }
};

// Per-hypothesis row-stochastic probability matrices (M x N x C), clamped to
// the probability floor.
struct PredictionTensor {
    std::vector<Matrix> member;

    int members() const { return static_cast<int>(member.size()); }
    int rows() const { return member.empty() ? 0 : static_cast<int>(member.front().rows()); }
    int classes() const { return member.empty() ? 0 : static_cast<int>(member.front().cols()); }
    Matrix mean() const;
    void validate() const;
};

struct EnsemblePrediction {
    PredictionTensor tensor;
    Matrix mean;              // N x C
    std::vector<int> labels;  // argmax of mean, ties toward the lowest index
};

struct SourceTrainConfig {
    int epochs = 40;
    double lr = 0.1;
    int batch_size = 64;
    double momentum = 0.0;
};

struct SourceTrainStats {
    std::vector<double> epoch_mean_loss;  // averaged over hypotheses and batches
    double final_train_accuracy = 0.0;    // ensemble accuracy on the training set
};

// Independent scaled-uniform init per hypothesis; stream "init"+index is
// derived from the seed so ShB and SeB differ only in extractor sharing.
Ensemble build_ensemble(Topology topology, const std::vector<ArchSpec>& specs, int input_dim,
                        std::uint64_t seed);

// Per-hypothesis cross-entropy minimization on the labeled source set.
SourceTrainStats train_source(Ensemble& ens, const Dataset& source, const SourceTrainConfig& cfg,
                              std::uint64_t seed);

EnsemblePrediction predict(const Ensemble& ens, const Matrix& x);

std::vector<int> argmax_labels(const Matrix& probs);

// Relabels a trained head: logits for class c are emitted as class
// (c + shift) mod C. Produces a confidently wrong member for the
// weak-hypothesis ablations.
void permute_classifier_outputs(Hypothesis& hyp, int shift = 1);

// Versioned text snapshot (topology, arch specs, every parameter at 17
// significant digits). Loading reproduces predictions bit-identically.
void save_snapshot(const Ensemble& ens, const std::string& path);
Ensemble load_snapshot(const std::string& path);

}  // namespace pdiv
