#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "pdiv/rng.hpp"

namespace pdiv {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Probabilities are clamped to this floor before any log so cross-entropy and
// entropy terms stay finite.
inline constexpr double kProbFloor = 1e-12;

enum class Activation { identity, relu };

struct Layer {
    Matrix weight;  // in x out
    Vector bias;    // out
    Activation activation = Activation::identity;
};

// Parameters of one dense feed-forward net (a feature extractor or a
// classifier head). Output layers emit logits; softmax is applied externally.
struct ParamSet {
    std::vector<Layer> layers;

    int input_dim() const { return layers.empty() ? 0 : static_cast<int>(layers.front().weight.rows()); }
    int output_dim() const { return layers.empty() ? 0 : static_cast<int>(layers.back().weight.cols()); }

    // Checks layer dimension chaining and finiteness of every parameter.
    void validate() const;
};

struct LayerGrad {
    Matrix weight;
    Vector bias;
};

// Per-parameter partials of a scalar loss, shape-congruent with a ParamSet.
struct GradientSet {
    std::vector<LayerGrad> layers;
};

// A non-owning view over a stack of layers; used to run a composed
// extractor+classifier net without copying parameters.
using NetView = std::vector<const Layer*>;

inline NetView view_of(const ParamSet& p) {
    NetView v;
    v.reserve(p.layers.size());
    for (const auto& l : p.layers) v.push_back(&l);
    return v;
}

inline NetView compose(const ParamSet& g, const ParamSet& f) {
    NetView v = view_of(g);
    for (const auto& l : f.layers) v.push_back(&l);
    return v;
}

enum class LossKind { cross_entropy_hard, weighted_mi, hd_to_anchor, composite };

struct LossArgs {
    std::vector<int> targets;  // cross_entropy_hard
    Vector class_weights;      // weighted_mi / composite: W, length C, sums to 1
    Matrix anchor;             // hd_to_anchor / composite: N x C row-stochastic, constant
    double alpha = 1.0;        // composite: scale on -I_W
    double beta = 0.0;         // composite: scale on HD
    // Optional support for a full-dataset marginal: the label marginal becomes
    // (sum of batch rows + marginal_extra_sum) / (N + marginal_extra_count).
    Vector marginal_extra_sum;
    double marginal_extra_count = 0.0;
};

struct BackwardResult {
    double loss = 0.0;
    GradientSet grads;
};

// Forward pass; returns logits (classifier heads) or features (extractors).
Matrix forward(const NetView& net, const Matrix& batch);
Matrix forward(const ParamSet& params, const Matrix& batch);

// Row-wise stable softmax (max subtraction). Entries in [0,1], rows sum to 1.
Matrix softmax(const Matrix& logits);
Vector softmax(const Vector& logits);

// Raises entries below the probability floor; call before taking logs.
Matrix clamp_probs(Matrix p);

// Scalar loss of the softmax output of net(batch) plus its analytic gradient
// with respect to every parameter in the net.
BackwardResult backward(const NetView& net, const Matrix& batch, LossKind kind, const LossArgs& args);
BackwardResult backward(const ParamSet& params, const Matrix& batch, LossKind kind, const LossArgs& args);

// p - lr * g on unfrozen layers; frozen layers are returned bit-identical.
// frozen_mask is per-layer; empty means nothing frozen.
ParamSet sgd_step(const ParamSet& params, const GradientSet& grads, double lr,
                  const std::vector<bool>& frozen_mask = {});
void sgd_step_inplace(ParamSet& params, const GradientSet& grads, double lr,
                      const std::vector<bool>& frozen_mask = {});

// Random init: per-layer uniform in [-1/sqrt(in_dim), 1/sqrt(in_dim)], zero
// biases. Hidden layers use ReLU, the final layer is linear.
ParamSet init_mlp(int input_dim, const std::vector<int>& widths, Rng& rng,
                  Activation last_activation = Activation::identity);

GradientSet zeros_like(const ParamSet& params);
void accumulate(GradientSet& into, const GradientSet& from);

}  // namespace pdiv
