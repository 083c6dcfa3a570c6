#include "pdiv/diffcore.hpp"

#include <cmath>
#include <string>

#include "pdiv/errors.hpp"

namespace pdiv {

namespace {

void check_layer_chain(const std::vector<Layer>& layers) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& l = layers[i];
        if (l.weight.cols() != l.bias.size()) {
            throw ShapeError("layer " + std::to_string(i) + ": bias size " +
                             std::to_string(l.bias.size()) + " != weight cols " +
                             std::to_string(l.weight.cols()));
        }
        if (i > 0 && layers[i - 1].weight.cols() != l.weight.rows()) {
            throw ShapeError("layer " + std::to_string(i) + ": in-dim " +
                             std::to_string(l.weight.rows()) + " != previous out-dim " +
                             std::to_string(layers[i - 1].weight.cols()));
        }
    }
}

struct ForwardCache {
    std::vector<Matrix> pre_act;   // per layer, before activation
    std::vector<Matrix> post_act;  // per layer, after activation
};

Matrix run_forward(const NetView& net, const Matrix& batch, ForwardCache* cache) {
    if (net.empty()) throw ShapeError("forward: empty net");
    if (batch.cols() != net.front()->weight.rows()) {
        throw ShapeError("forward: batch has " + std::to_string(batch.cols()) +
                         " columns, net expects " + std::to_string(net.front()->weight.rows()));
    }
    Matrix a = batch;
    for (const Layer* l : net) {
        if (a.cols() != l->weight.rows()) {
            throw ShapeError("forward: layer in-dim mismatch");
        }
        Matrix z = (a * l->weight).rowwise() + l->bias.transpose();
        if (cache) cache->pre_act.push_back(z);
        if (l->activation == Activation::relu) z = z.cwiseMax(0.0);
        if (cache) cache->post_act.push_back(z);
        a = std::move(z);
    }
    return a;
}

// Gradient of the scalar loss with respect to the softmax probabilities.
// Losses take logs of clamped probabilities; the clamp is inactive on the
// instances these gradients are consumed for (softmax outputs of non-saturated
// nets), so it is treated as identity here.
Matrix loss_and_dprob(const Matrix& probs, LossKind kind, const LossArgs& args, double* loss_out) {
    const Eigen::Index n = probs.rows();
    const Eigen::Index c = probs.cols();
    const Matrix pc = clamp_probs(probs);
    Matrix dprob = Matrix::Zero(n, c);
    double loss = 0.0;

    switch (kind) {
        case LossKind::cross_entropy_hard: {
            if (static_cast<Eigen::Index>(args.targets.size()) != n) {
                throw ShapeError("cross_entropy_hard: targets size != batch rows");
            }
            for (Eigen::Index i = 0; i < n; ++i) {
                const int y = args.targets[i];
                if (y < 0 || y >= c) throw ValidationError("cross_entropy_hard: target out of range");
                loss += -std::log(pc(i, y));
                dprob(i, y) = -1.0 / (pc(i, y) * static_cast<double>(n));
            }
            loss /= static_cast<double>(n);
            break;
        }
        case LossKind::weighted_mi: {
            const Vector& w = args.class_weights;
            if (w.size() != c) throw ShapeError("weighted_mi: class_weights size != classes");
            if (std::abs(w.sum() - 1.0) > 1e-9) {
                throw ValidationError("weighted_mi: class weights must sum to 1");
            }
            double total = static_cast<double>(n) + args.marginal_extra_count;
            Vector marg = pc.colwise().sum();
            if (args.marginal_extra_sum.size() > 0) {
                if (args.marginal_extra_sum.size() != c) {
                    throw ShapeError("weighted_mi: marginal_extra_sum size != classes");
                }
                marg += args.marginal_extra_sum;
            }
            marg /= total;
            for (Eigen::Index k = 0; k < c; ++k) marg(k) = std::max(marg(k), kProbFloor);

            // loss = -I_W = sum_c W_c m_c log m_c + (1/N) sum_{i,c} p log p
            double marg_term = 0.0;
            for (Eigen::Index k = 0; k < c; ++k) marg_term += w(k) * marg(k) * std::log(marg(k));
            double cond_term = 0.0;
            for (Eigen::Index i = 0; i < n; ++i) {
                for (Eigen::Index k = 0; k < c; ++k) cond_term += pc(i, k) * std::log(pc(i, k));
            }
            cond_term /= static_cast<double>(n);
            loss = marg_term - cond_term;

            for (Eigen::Index i = 0; i < n; ++i) {
                for (Eigen::Index k = 0; k < c; ++k) {
                    dprob(i, k) = w(k) * (std::log(marg(k)) + 1.0) / total -
                                  (std::log(pc(i, k)) + 1.0) / static_cast<double>(n);
                }
            }
            break;
        }
        case LossKind::hd_to_anchor: {
            const Matrix& a = args.anchor;
            if (a.rows() != n || a.cols() != c) throw ShapeError("hd_to_anchor: anchor shape mismatch");
            for (Eigen::Index i = 0; i < n; ++i) {
                for (Eigen::Index k = 0; k < c; ++k) {
                    loss += -a(i, k) * std::log(pc(i, k));
                    dprob(i, k) = -a(i, k) / (pc(i, k) * static_cast<double>(n));
                }
            }
            loss /= static_cast<double>(n);
            break;
        }
        case LossKind::composite: {
            double mi_loss = 0.0;
            Matrix mi_d = Matrix::Zero(n, c);
            if (args.alpha != 0.0) {
                mi_d = loss_and_dprob(probs, LossKind::weighted_mi, args, &mi_loss);
            }
            double hd_loss = 0.0;
            Matrix hd_d = Matrix::Zero(n, c);
            if (args.beta != 0.0) {
                hd_d = loss_and_dprob(probs, LossKind::hd_to_anchor, args, &hd_loss);
            }
            loss = args.alpha * mi_loss + args.beta * hd_loss;
            dprob = args.alpha * mi_d + args.beta * hd_d;
            break;
        }
    }
    *loss_out = loss;
    return dprob;
}

}  // namespace

void ParamSet::validate() const {
    check_layer_chain(layers);
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (!layers[i].weight.allFinite() || !layers[i].bias.allFinite()) {
            throw NumericError("layer " + std::to_string(i) + " has non-finite parameters");
        }
    }
}

Matrix forward(const NetView& net, const Matrix& batch) { return run_forward(net, batch, nullptr); }

Matrix forward(const ParamSet& params, const Matrix& batch) {
    return forward(view_of(params), batch);
}

Matrix softmax(const Matrix& logits) {
    Matrix p(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const double m = logits.row(i).maxCoeff();
        Eigen::RowVectorXd e = (logits.row(i).array() - m).exp();
        p.row(i) = e / e.sum();
    }
    return p;
}

Vector softmax(const Vector& logits) {
    Matrix m = softmax(Matrix(logits.transpose()));
    return m.row(0).transpose();
}

Matrix clamp_probs(Matrix p) {
    return p.cwiseMax(kProbFloor);
}

BackwardResult backward(const NetView& net, const Matrix& batch, LossKind kind, const LossArgs& args) {
    ForwardCache cache;
    const Matrix logits = run_forward(net, batch, &cache);
    const Matrix probs = softmax(logits);

    BackwardResult result;
    Matrix dprob = loss_and_dprob(probs, kind, args, &result.loss);

    // d loss / d logits through the softmax Jacobian, row by row:
    // dz_k = p_k * (dp_k - sum_j dp_j p_j)
    Matrix delta(probs.rows(), probs.cols());
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
        const double dot = dprob.row(i).dot(probs.row(i));
        delta.row(i) = probs.row(i).cwiseProduct((dprob.row(i).array() - dot).matrix());
    }

    // Backprop through the dense stack.
    result.grads.layers.resize(net.size());
    for (int l = static_cast<int>(net.size()) - 1; l >= 0; --l) {
        if (net[l]->activation == Activation::relu) {
            delta = delta.cwiseProduct((cache.pre_act[l].array() > 0.0).cast<double>().matrix());
        }
        const Matrix& input = (l == 0) ? batch : cache.post_act[l - 1];
        result.grads.layers[l].weight = input.transpose() * delta;
        result.grads.layers[l].bias = delta.colwise().sum();
        if (l > 0) delta = delta * net[l]->weight.transpose();
    }

    for (const auto& g : result.grads.layers) {
        if (!g.weight.allFinite() || !g.bias.allFinite()) {
            throw NumericError("backward produced non-finite gradients");
        }
    }
    if (!std::isfinite(result.loss)) throw NumericError("backward produced non-finite loss");
    return result;
}

BackwardResult backward(const ParamSet& params, const Matrix& batch, LossKind kind, const LossArgs& args) {
    return backward(view_of(params), batch, kind, args);
}

void sgd_step_inplace(ParamSet& params, const GradientSet& grads, double lr,
                      const std::vector<bool>& frozen_mask) {
    if (grads.layers.size() != params.layers.size()) {
        throw ShapeError("sgd_step: gradient layer count mismatch");
    }
    if (!frozen_mask.empty() && frozen_mask.size() != params.layers.size()) {
        throw ShapeError("sgd_step: frozen mask size mismatch");
    }
    for (std::size_t i = 0; i < params.layers.size(); ++i) {
        if (!frozen_mask.empty() && frozen_mask[i]) continue;
        auto& p = params.layers[i];
        const auto& g = grads.layers[i];
        if (g.weight.rows() != p.weight.rows() || g.weight.cols() != p.weight.cols() ||
            g.bias.size() != p.bias.size()) {
            throw ShapeError("sgd_step: gradient shape mismatch at layer " + std::to_string(i));
        }
        p.weight -= lr * g.weight;
        p.bias -= lr * g.bias;
    }
}

ParamSet sgd_step(const ParamSet& params, const GradientSet& grads, double lr,
                  const std::vector<bool>& frozen_mask) {
    ParamSet out = params;
    sgd_step_inplace(out, grads, lr, frozen_mask);
    return out;
}

ParamSet init_mlp(int input_dim, const std::vector<int>& widths, Rng& rng,
                  Activation last_activation) {
    if (input_dim < 1) throw ConfigError("init_mlp: input_dim must be >= 1");
    ParamSet p;
    int in = input_dim;
    for (std::size_t i = 0; i < widths.size(); ++i) {
        const int out = widths[i];
        if (out < 1) throw ConfigError("init_mlp: layer width must be >= 1");
        Layer l;
        l.weight = Matrix(in, out);
        const double scale = 1.0 / std::sqrt(static_cast<double>(in));
        for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
            for (Eigen::Index c = 0; c < l.weight.cols(); ++c) {
                l.weight(r, c) = rng.uniform(-scale, scale);
            }
        }
        l.bias = Vector::Zero(out);
        l.activation = (i + 1 == widths.size()) ? last_activation : Activation::relu;
        p.layers.push_back(std::move(l));
        in = out;
    }
    return p;
}

GradientSet zeros_like(const ParamSet& params) {
    GradientSet g;
    g.layers.reserve(params.layers.size());
    for (const auto& l : params.layers) {
        g.layers.push_back({Matrix::Zero(l.weight.rows(), l.weight.cols()), Vector::Zero(l.bias.size())});
    }
    return g;
}

void accumulate(GradientSet& into, const GradientSet& from) {
    if (into.layers.size() != from.layers.size()) throw ShapeError("accumulate: layer count mismatch");
    for (std::size_t i = 0; i < into.layers.size(); ++i) {
        into.layers[i].weight += from.layers[i].weight;
        into.layers[i].bias += from.layers[i].bias;
    }
}

}  // namespace pdiv
