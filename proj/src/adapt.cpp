#include "pdiv/adapt.hpp"

#include <cmath>
#include <fstream>
#include <map>

#include "json.hpp"
#include "pdiv/errors.hpp"

namespace pdiv {

void ClassProportion::validate() const {
    if (w.size() < 1) throw ValidationError("class proportion: empty");
    if (w.minCoeff() < 0.0) throw ValidationError("class proportion: negative entry");
    if (std::abs(w.sum() - 1.0) > 1e-9) throw ValidationError("class proportion: must sum to 1");
}

ClassProportion ClassProportion::uniform(int classes) {
    ClassProportion p;
    p.w = Vector::Constant(classes, 1.0 / classes);
    p.source = Source::uniform;
    return p;
}

ClassProportion ClassProportion::from_labels(const std::vector<int>& labels, int classes, Source src) {
    Vector counts = Vector::Zero(classes);
    for (const int l : labels) {
        if (l < 0 || l >= classes) throw ValidationError("class proportion: label out of range");
        counts(l) += 1.0;
    }
    Vector w = counts / std::max(1.0, counts.sum());
    for (Eigen::Index c = 0; c < w.size(); ++c) w(c) = std::max(w(c), 1e-6);
    ClassProportion p;
    p.w = w / w.sum();
    p.source = src;
    return p;
}

std::string to_string(AnchorStrategy s) {
    switch (s) {
        case AnchorStrategy::fixed: return "fixed";
        case AnchorStrategy::random: return "random";
        case AnchorStrategy::ensemble: return "ensemble";
        case AnchorStrategy::whp: return "whp";
    }
    return "?";
}

AnchorStrategy anchor_strategy_from_string(const std::string& s) {
    if (s == "fixed") return AnchorStrategy::fixed;
    if (s == "random") return AnchorStrategy::random;
    if (s == "ensemble") return AnchorStrategy::ensemble;
    if (s == "whp") return AnchorStrategy::whp;
    throw ConfigError("unknown anchor strategy: " + s);
}

std::string to_string(ProportionMode m) {
    switch (m) {
        case ProportionMode::uniform: return "uniform";
        case ProportionMode::pseudo: return "pseudo";
        case ProportionMode::true_labels: return "true";
    }
    return "?";
}

ProportionMode proportion_mode_from_string(const std::string& s) {
    if (s == "uniform") return ProportionMode::uniform;
    if (s == "pseudo") return ProportionMode::pseudo;
    if (s == "true") return ProportionMode::true_labels;
    throw ConfigError("unknown proportion mode: " + s);
}

double mutual_information(const Matrix& preds) {
    if (preds.rows() < 1) throw ShapeError("mutual_information: empty batch");
    const Matrix p = clamp_probs(preds);
    Vector marg = p.colwise().mean();
    double h_marginal = 0.0;
    for (Eigen::Index c = 0; c < marg.size(); ++c) {
        const double m = std::max(marg(c), kProbFloor);
        h_marginal -= m * std::log(m);
    }
    double h_cond = 0.0;
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        for (Eigen::Index c = 0; c < p.cols(); ++c) {
            h_cond -= p(i, c) * std::log(p(i, c));
        }
    }
    h_cond /= static_cast<double>(p.rows());
    return h_marginal - h_cond;
}

double weighted_mutual_information(const Matrix& preds, const ClassProportion& w) {
    if (w.w.size() != preds.cols()) throw ShapeError("weighted MI: proportion size != classes");
    w.validate();
    const Matrix p = clamp_probs(preds);
    Vector marg = p.colwise().mean();
    double h_marginal = 0.0;
    for (Eigen::Index c = 0; c < marg.size(); ++c) {
        const double m = std::max(marg(c), kProbFloor);
        h_marginal -= w.w(c) * m * std::log(m);
    }
    double h_cond = 0.0;
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        for (Eigen::Index c = 0; c < p.cols(); ++c) {
            h_cond -= p(i, c) * std::log(p(i, c));
        }
    }
    h_cond /= static_cast<double>(p.rows());
    return h_marginal - h_cond;
}

AnchorWeights anchor_weights(const PredictionTensor& preds, CosineMode mode) {
    const int m = preds.members();
    if (m < 2) throw ConfigError("anchor_weights: need at least 2 hypotheses");
    const int n = preds.rows();

    Matrix pairwise = Matrix::Zero(m, m);
    for (int i = 0; i < m; ++i) {
        for (int j = i + 1; j < m; ++j) {
            double sim = 0.0;
            if (mode == CosineMode::per_sample) {
                for (int r = 0; r < n; ++r) {
                    const auto a = preds.member[i].row(r);
                    const auto b = preds.member[j].row(r);
                    sim += a.dot(b) / (a.norm() * b.norm());
                }
                sim /= static_cast<double>(n);
            } else {
                double dot = 0.0, na = 0.0, nb = 0.0;
                for (int r = 0; r < n; ++r) {
                    dot += preds.member[i].row(r).dot(preds.member[j].row(r));
                    na += preds.member[i].row(r).squaredNorm();
                    nb += preds.member[j].row(r).squaredNorm();
                }
                sim = dot / (std::sqrt(na) * std::sqrt(nb));
            }
            pairwise(i, j) = pairwise(j, i) = sim;
        }
    }

    AnchorWeights w;
    w.raw = Vector(m);
    for (int i = 0; i < m; ++i) {
        w.raw(i) = (pairwise.row(i).sum()) / static_cast<double>(m - 1);
    }
    w.normalized = softmax(w.raw);
    return w;
}

Matrix build_anchor(const PredictionTensor& preds, AnchorStrategy strategy,
                    const AnchorWeights* weights, int anchor_index) {
    const int m = preds.members();
    switch (strategy) {
        case AnchorStrategy::whp: {
            if (weights == nullptr) throw ConfigError("build_anchor: whp requires weights");
            if (weights->normalized.size() != m) throw ShapeError("build_anchor: weight size mismatch");
            Matrix a = Matrix::Zero(preds.rows(), preds.classes());
            for (int i = 0; i < m; ++i) a += weights->normalized(i) * preds.member[i];
            return a;
        }
        case AnchorStrategy::ensemble:
            return preds.mean();
        case AnchorStrategy::fixed:
        case AnchorStrategy::random: {
            if (anchor_index < 0 || anchor_index >= m) {
                throw ConfigError("build_anchor: anchor index required and in range");
            }
            return preds.member[anchor_index];
        }
    }
    throw ConfigError("build_anchor: unknown strategy");
}

double hypothesis_disparity(const PredictionTensor& preds, const Matrix& anchor, int exclude_member) {
    const int m = preds.members();
    const int n = preds.rows();
    if (anchor.rows() != n || anchor.cols() != preds.classes()) {
        throw ShapeError("hypothesis_disparity: anchor shape mismatch");
    }
    double total = 0.0;
    int included = 0;
    for (int i = 0; i < m; ++i) {
        if (i == exclude_member) continue;
        const Matrix p = clamp_probs(preds.member[i]);
        double member_ce = 0.0;
        for (int r = 0; r < n; ++r) {
            for (Eigen::Index c = 0; c < p.cols(); ++c) {
                member_ce -= anchor(r, c) * std::log(p(r, c));
            }
        }
        total += member_ce / static_cast<double>(n);
        ++included;
    }
    if (included == 0) throw ConfigError("hypothesis_disparity: no members included");
    return total / static_cast<double>(included);
}

std::pair<std::vector<int>, ClassProportion> pseudo_labels(const Matrix& ensemble_mean) {
    std::vector<int> labels = argmax_labels(ensemble_mean);
    ClassProportion p = ClassProportion::from_labels(labels, static_cast<int>(ensemble_mean.cols()),
                                                     ClassProportion::Source::pseudo);
    return {std::move(labels), std::move(p)};
}

namespace {

struct ExtractorStep {
    std::map<ParamSet*, GradientSet> acc;
    std::map<ParamSet*, GradientSet> velocity;

    void add(ParamSet* target, GradientSet g) {
        auto it = acc.find(target);
        if (it == acc.end()) {
            acc.emplace(target, std::move(g));
        } else {
            accumulate(it->second, g);
        }
    }

    void apply(double lr, double momentum) {
        for (auto& [target, grad] : acc) {
            if (momentum != 0.0) {
                auto it = velocity.find(target);
                if (it == velocity.end()) it = velocity.emplace(target, zeros_like(*target)).first;
                for (std::size_t l = 0; l < grad.layers.size(); ++l) {
                    it->second.layers[l].weight =
                        momentum * it->second.layers[l].weight + grad.layers[l].weight;
                    it->second.layers[l].bias =
                        momentum * it->second.layers[l].bias + grad.layers[l].bias;
                }
                sgd_step_inplace(*target, it->second, lr);
            } else {
                sgd_step_inplace(*target, grad, lr);
            }
        }
        acc.clear();
    }
};

std::vector<double> per_hypothesis_accuracy(const PredictionTensor& preds,
                                            const std::vector<int>& labels) {
    std::vector<double> acc(preds.members(), 0.0);
    for (int i = 0; i < preds.members(); ++i) {
        const std::vector<int> pred = argmax_labels(preds.member[i]);
        int correct = 0;
        for (std::size_t r = 0; r < pred.size(); ++r) correct += (pred[r] == labels[r]) ? 1 : 0;
        acc[i] = labels.empty() ? 0.0 : static_cast<double>(correct) / labels.size();
    }
    return acc;
}

}  // namespace

AdaptationResult adapt_target(Ensemble& ens, const Matrix& target_x, const AdaptationConfig& cfg,
                              const std::vector<int>* eval_labels) {
    const int m = ens.size();
    const int n = static_cast<int>(target_x.rows());
    if (m < 1) throw ConfigError("adapt_target: empty ensemble");
    if (cfg.anchor_strategy == AnchorStrategy::whp && m < 3) {
        throw ConfigError("adapt_target: whp anchor requires at least 3 hypotheses");
    }
    if (cfg.anchor_strategy == AnchorStrategy::fixed &&
        (cfg.anchor_index < 0 || cfg.anchor_index >= m)) {
        throw ConfigError("adapt_target: fixed anchor requires a valid anchor_index");
    }
    if (cfg.alpha < 0.0 || cfg.beta < 0.0) throw ConfigError("adapt_target: alpha/beta must be >= 0");
    if (cfg.lr <= 0.0) throw ConfigError("adapt_target: lr must be > 0");
    if (cfg.batch_size < 1 || cfg.batch_size > n) {
        throw ConfigError("adapt_target: batch_size must be in [1, N]");
    }
    if (cfg.proportion_mode == ProportionMode::true_labels && eval_labels == nullptr) {
        throw ConfigError("adapt_target: proportion_mode=true requires labels");
    }
    if (eval_labels && static_cast<int>(eval_labels->size()) != n) {
        throw ShapeError("adapt_target: label count != target rows");
    }

    Rng batch_rng = substream(cfg.seed, "batch-adapt");
    Rng anchor_rng = substream(cfg.seed, "anchor");

    // random strategy: one member drawn per run, held fixed thereafter
    int anchor_index = -1;
    if (cfg.anchor_strategy == AnchorStrategy::fixed) anchor_index = cfg.anchor_index;
    if (cfg.anchor_strategy == AnchorStrategy::random) {
        anchor_index = static_cast<int>(anchor_rng.below(m));
    }
    const bool member_anchor = cfg.anchor_strategy == AnchorStrategy::fixed ||
                               cfg.anchor_strategy == AnchorStrategy::random;
    // fixed/random exclude the anchor member from the HD mean; whp/ensemble
    // include every member
    const int hd_members = member_anchor ? m - 1 : m;

    const int refresh = cfg.proportion_refresh_interval > 0 ? cfg.proportion_refresh_interval
                                                            : std::max(1, n / cfg.batch_size);

    ClassProportion proportion = ClassProportion::uniform(ens.classes);
    if (cfg.proportion_mode == ProportionMode::true_labels) {
        proportion = ClassProportion::from_labels(*eval_labels, ens.classes,
                                                  ClassProportion::Source::true_labels);
    }

    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    int cursor = n;  // force shuffle on first use

    ExtractorStep step;
    AdaptationResult result;

    for (int it = 0; it < cfg.iterations; ++it) {
        if (cfg.proportion_mode == ProportionMode::pseudo && it % refresh == 0) {
            const EnsemblePrediction full = predict(ens, target_x);
            proportion = pseudo_labels(full.mean).second;
        }

        // next minibatch (epoch-style shuffling)
        Matrix xb(cfg.batch_size, target_x.cols());
        for (int i = 0; i < cfg.batch_size; ++i) {
            if (cursor >= n) {
                batch_rng.shuffle(order);
                cursor = 0;
            }
            xb.row(i) = target_x.row(order[cursor++]);
        }

        // predictions of every member on the batch, one parameter snapshot
        PredictionTensor preds;
        for (const auto& hyp : ens.hypotheses) {
            preds.member.push_back(clamp_probs(softmax(forward(hyp.net(), xb))));
        }

        AnchorWeights weights;
        Matrix anchor;
        if (m >= 2) {
            weights = anchor_weights(preds, cfg.cosine_mode);
            anchor = build_anchor(preds, cfg.anchor_strategy, &weights, anchor_index);
        } else {
            weights.raw = Vector::Ones(1);
            weights.normalized = Vector::Ones(1);
            anchor = preds.member[0];
        }

        // full-dataset marginal support: constant off-batch row sum
        Vector extra_sum;
        double extra_count = 0.0;
        if (cfg.full_marginal) {
            const EnsemblePrediction full = predict(ens, target_x);
            Vector total = Vector::Zero(ens.classes);
            for (const auto& member : full.tensor.member) total += member.colwise().sum().transpose();
            total /= static_cast<double>(m);
            Vector batch_sum = Vector::Zero(ens.classes);
            for (const auto& member : preds.member) batch_sum += member.colwise().sum().transpose();
            batch_sum /= static_cast<double>(m);
            extra_sum = total - batch_sum;
            extra_count = static_cast<double>(n - cfg.batch_size);
        }

        // Each hypothesis descends its own composite at full alpha/beta; the
        // batch objective (mean over hypotheses) is what the trace reports.
        double mean_mi = 0.0;
        for (int i = 0; i < m; ++i) {
            LossArgs args;
            args.class_weights = proportion.w;
            args.anchor = anchor;
            args.alpha = cfg.alpha;
            const bool in_hd = !(member_anchor && i == anchor_index);
            args.beta = (in_hd && hd_members > 0) ? cfg.beta : 0.0;
            if (cfg.full_marginal) {
                args.marginal_extra_sum = extra_sum;
                args.marginal_extra_count = extra_count;
            }

            const auto& hyp = ens.hypotheses[i];
            BackwardResult res;
            try {
                res = backward(hyp.net(), xb, LossKind::composite, args);
            } catch (const NumericError& e) {
                throw NumericError("adapt_target: step " + std::to_string(it) + ", hypothesis " +
                                   std::to_string(i) + ": " + e.what());
            }
            if (!std::isfinite(res.loss)) {
                throw NumericError("adapt_target: non-finite loss at step " + std::to_string(it));
            }
            mean_mi += weighted_mutual_information(preds.member[i], proportion);

            // extractors only; classifiers stay untouched
            const std::size_t ext_layers = hyp.extractor->layers.size();
            GradientSet ext;
            ext.layers.assign(res.grads.layers.begin(), res.grads.layers.begin() + ext_layers);
            step.add(ens.hypotheses[i].extractor.get(), std::move(ext));
        }
        mean_mi /= m;
        const double step_hd =
            hd_members > 0 ? hypothesis_disparity(preds, anchor, member_anchor ? anchor_index : -1)
                           : 0.0;
        const double step_loss = cfg.alpha * (-mean_mi) + cfg.beta * step_hd;

        if (cfg.log_interval > 0 && (it % cfg.log_interval == 0 || it + 1 == cfg.iterations)) {
            TraceRecord rec;
            rec.step = it;
            rec.loss = step_loss;
            rec.mi = mean_mi;
            rec.hd = step_hd;
            rec.anchor_weights.assign(weights.normalized.data(),
                                      weights.normalized.data() + weights.normalized.size());
            if (eval_labels) {
                const EnsemblePrediction full = predict(ens, target_x);
                rec.per_hypothesis_accuracy = per_hypothesis_accuracy(full.tensor, *eval_labels);
            }
            result.trace.push_back(std::move(rec));
        }

        step.apply(cfg.lr, cfg.momentum);
    }

    result.final_proportion = proportion;
    return result;
}

void write_trace_jsonl(const std::vector<TraceRecord>& trace, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ParseError("cannot open for writing: " + path);
    for (const auto& rec : trace) {
        nlohmann::json j{{"step", rec.step}, {"loss", rec.loss}, {"mi", rec.mi}, {"hd", rec.hd},
                         {"anchor_weights", rec.anchor_weights}};
        if (!rec.per_hypothesis_accuracy.empty()) j["per_hypothesis_accuracy"] = rec.per_hypothesis_accuracy;
        f << j.dump() << "\n";
    }
}

}  // namespace pdiv
