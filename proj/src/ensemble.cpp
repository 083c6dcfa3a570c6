#include "pdiv/ensemble.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "pdiv/errors.hpp"

namespace pdiv {

void ArchSpec::validate() const {
    for (const int w : feature_widths) {
        if (w < 1) throw ConfigError("arch: feature width must be >= 1");
    }
    if (bottleneck < 1) throw ConfigError("arch: bottleneck must be >= 1");
    if (classifier_widths.empty()) throw ConfigError("arch: classifier widths required");
    for (const int w : classifier_widths) {
        if (w < 1) throw ConfigError("arch: classifier width must be >= 1");
    }
}

std::string to_string(Topology t) {
    switch (t) {
        case Topology::ShB: return "ShB";
        case Topology::SeB: return "SeB";
        case Topology::DBA: return "DBA";
    }
    return "?";
}

Topology topology_from_string(const std::string& s) {
    if (s == "ShB") return Topology::ShB;
    if (s == "SeB") return Topology::SeB;
    if (s == "DBA") return Topology::DBA;
    throw ConfigError("unknown topology: " + s);
}

Matrix PredictionTensor::mean() const {
    if (member.empty()) throw ShapeError("prediction tensor: empty");
    Matrix m = member[0];
    for (std::size_t i = 1; i < member.size(); ++i) m += member[i];
    return m / static_cast<double>(member.size());
}

void PredictionTensor::validate() const {
    for (const auto& p : member) {
        if (p.rows() != rows() || p.cols() != classes()) {
            throw ShapeError("prediction tensor: inconsistent member shapes");
        }
        for (Eigen::Index i = 0; i < p.rows(); ++i) {
            const double s = p.row(i).sum();
            if (std::abs(s - 1.0) > 1e-9) throw ValidationError("prediction tensor: row not stochastic");
            if (p.row(i).minCoeff() < kProbFloor) throw ValidationError("prediction tensor: entry below floor");
        }
    }
}

namespace {

std::vector<int> extractor_widths(const ArchSpec& a) {
    std::vector<int> w = a.feature_widths;
    w.push_back(a.bottleneck);
    return w;
}

}  // namespace

Ensemble build_ensemble(Topology topology, const std::vector<ArchSpec>& specs, int input_dim,
                        std::uint64_t seed) {
    if (specs.empty()) throw ConfigError("build_ensemble: need at least one arch spec");
    const int classes = specs.front().classes();
    for (const auto& s : specs) {
        s.validate();
        if (s.classes() != classes) throw ConfigError("build_ensemble: inconsistent class counts");
    }
    if (topology == Topology::ShB || topology == Topology::SeB) {
        for (const auto& s : specs) {
            if (!(s == specs.front())) {
                throw ConfigError(to_string(topology) + " requires identical arch specs");
            }
        }
    } else {
        bool distinct = false;
        for (const auto& s : specs) {
            if (!(s == specs.front())) distinct = true;
        }
        if (!distinct) throw ConfigError("DBA requires at least two distinct arch specs");
        if (specs.size() < 2) throw ConfigError("DBA requires M >= 2");
    }

    Ensemble ens;
    ens.topology = topology;
    ens.input_dim = input_dim;
    ens.classes = classes;

    std::shared_ptr<ParamSet> shared;
    for (std::size_t i = 0; i < specs.size(); ++i) {
        Rng init = substream(seed, "init", i);
        Hypothesis h;
        h.arch = specs[i];
        if (topology == Topology::ShB) {
            if (!shared) {
                shared = std::make_shared<ParamSet>(
                    init_mlp(input_dim, extractor_widths(specs[i]), init, Activation::identity));
            }
            h.extractor = shared;
            // keep the classifier draw independent of whether the extractor
            // stream was consumed
            Rng head_init = substream(seed, "init-head", i);
            h.classifier = init_mlp(specs[i].bottleneck, specs[i].classifier_widths, head_init,
                                    Activation::identity);
        } else {
            h.extractor = std::make_shared<ParamSet>(
                init_mlp(input_dim, extractor_widths(specs[i]), init, Activation::identity));
            Rng head_init = substream(seed, "init-head", i);
            h.classifier = init_mlp(specs[i].bottleneck, specs[i].classifier_widths, head_init,
                                    Activation::identity);
        }
        ens.hypotheses.push_back(std::move(h));
    }
    return ens;
}

namespace {

// Shared-extractor-aware SGD application: gradients for aliased extractors
// are summed before the single step, so every head sees the same update.
struct StepAccumulator {
    std::map<ParamSet*, GradientSet> acc;

    void add(ParamSet* target, const GradientSet& g) {
        auto it = acc.find(target);
        if (it == acc.end()) {
            acc.emplace(target, g);
        } else {
            accumulate(it->second, g);
        }
    }

    void apply(double lr, double momentum, std::map<ParamSet*, GradientSet>& velocity) {
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

GradientSet slice_grads(const GradientSet& full, std::size_t begin, std::size_t end) {
    GradientSet g;
    g.layers.assign(full.layers.begin() + begin, full.layers.begin() + end);
    return g;
}

}  // namespace

SourceTrainStats train_source(Ensemble& ens, const Dataset& source, const SourceTrainConfig& cfg,
                              std::uint64_t seed) {
    source.validate();
    const int n = source.rows();
    if (cfg.batch_size < 1 || cfg.batch_size > n) {
        throw ConfigError("train_source: batch_size must be in [1, N]");
    }
    if (cfg.lr <= 0.0) throw ConfigError("train_source: lr must be > 0");
    if (cfg.epochs < 0) throw ConfigError("train_source: epochs must be >= 0");
    if (source.classes != ens.classes) throw ConfigError("train_source: class count mismatch");

    Rng batch_rng = substream(seed, "batch-source");
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;

    SourceTrainStats stats;
    std::map<ParamSet*, GradientSet> velocity;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        batch_rng.shuffle(order);
        double epoch_loss = 0.0;
        int batches = 0;
        for (int start = 0; start + cfg.batch_size <= n; start += cfg.batch_size) {
            const int b = cfg.batch_size;
            Matrix xb(b, source.dims());
            LossArgs args;
            args.targets.resize(b);
            for (int i = 0; i < b; ++i) {
                xb.row(i) = source.x.row(order[start + i]);
                args.targets[i] = source.y[order[start + i]];
            }

            StepAccumulator step;
            double batch_loss = 0.0;
            for (auto& hyp : ens.hypotheses) {
                BackwardResult res;
                try {
                    res = backward(hyp.net(), xb, LossKind::cross_entropy_hard, args);
                } catch (const NumericError& e) {
                    throw NumericError(std::string("train_source: hypothesis ") +
                                       std::to_string(&hyp - ens.hypotheses.data()) + ": " + e.what());
                }
                if (!std::isfinite(res.loss)) {
                    throw NumericError("train_source: loss diverged for hypothesis " +
                                       std::to_string(&hyp - ens.hypotheses.data()));
                }
                batch_loss += res.loss;
                const std::size_t ext_layers = hyp.extractor->layers.size();
                step.add(hyp.extractor.get(), slice_grads(res.grads, 0, ext_layers));
                step.add(&hyp.classifier,
                         slice_grads(res.grads, ext_layers, res.grads.layers.size()));
            }
            step.apply(cfg.lr, cfg.momentum, velocity);
            epoch_loss += batch_loss / ens.size();
            ++batches;
        }
        stats.epoch_mean_loss.push_back(batches > 0 ? epoch_loss / batches : 0.0);
    }

    const EnsemblePrediction pred = predict(ens, source.x);
    int correct = 0;
    for (int i = 0; i < n; ++i) correct += (pred.labels[i] == source.y[i]) ? 1 : 0;
    stats.final_train_accuracy = static_cast<double>(correct) / n;
    return stats;
}

std::vector<int> argmax_labels(const Matrix& probs) {
    std::vector<int> labels(probs.rows());
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
        int best = 0;
        for (Eigen::Index c = 1; c < probs.cols(); ++c) {
            if (probs(i, c) > probs(i, best)) best = static_cast<int>(c);
        }
        labels[i] = best;
    }
    return labels;
}

EnsemblePrediction predict(const Ensemble& ens, const Matrix& x) {
    if (ens.hypotheses.empty()) throw ConfigError("predict: empty ensemble");
    EnsemblePrediction out;
    for (const auto& hyp : ens.hypotheses) {
        out.tensor.member.push_back(clamp_probs(softmax(forward(hyp.net(), x))));
    }
    out.mean = out.tensor.mean();
    out.labels = argmax_labels(out.mean);
    return out;
}

void permute_classifier_outputs(Hypothesis& hyp, int shift) {
    Layer& last = hyp.classifier.layers.back();
    const int c = static_cast<int>(last.weight.cols());
    Matrix w = last.weight;
    Vector b = last.bias;
    for (int k = 0; k < c; ++k) {
        const int to = ((k + shift) % c + c) % c;
        last.weight.col(to) = w.col(k);
        last.bias(to) = b(k);
    }
}

namespace {

void write_param_set(std::ostream& os, const ParamSet& p) {
    char buf[64];
    os << "layers " << p.layers.size() << "\n";
    for (const auto& l : p.layers) {
        os << "layer " << (l.activation == Activation::relu ? "relu" : "identity") << " "
           << l.weight.rows() << " " << l.weight.cols() << "\n";
        for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
            for (Eigen::Index c = 0; c < l.weight.cols(); ++c) {
                std::snprintf(buf, sizeof(buf), "%.17g", l.weight(r, c));
                os << buf << (c + 1 == l.weight.cols() ? "" : " ");
            }
            os << "\n";
        }
        for (Eigen::Index c = 0; c < l.bias.size(); ++c) {
            std::snprintf(buf, sizeof(buf), "%.17g", l.bias(c));
            os << buf << (c + 1 == l.bias.size() ? "" : " ");
        }
        os << "\n";
    }
}

std::string next_content_line(std::istream& is) {
    std::string line;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) return line;
    }
    throw ParseError("snapshot: unexpected end of file");
}

ParamSet read_param_set(std::istream& is) {
    std::istringstream hdr(next_content_line(is));
    std::string tok;
    std::size_t count = 0;
    hdr >> tok >> count;
    if (tok != "layers") throw ParseError("snapshot: expected 'layers', got '" + tok + "'");
    ParamSet p;
    for (std::size_t i = 0; i < count; ++i) {
        std::istringstream lh(next_content_line(is));
        std::string kw, act;
        Eigen::Index rows = 0, cols = 0;
        lh >> kw >> act >> rows >> cols;
        if (kw != "layer") throw ParseError("snapshot: expected 'layer'");
        Layer l;
        l.activation = (act == "relu") ? Activation::relu : Activation::identity;
        l.weight = Matrix(rows, cols);
        for (Eigen::Index r = 0; r < rows; ++r) {
            std::istringstream row(next_content_line(is));
            for (Eigen::Index c = 0; c < cols; ++c) {
                if (!(row >> l.weight(r, c))) throw ParseError("snapshot: short weight row");
            }
        }
        l.bias = Vector(cols);
        std::istringstream brow(next_content_line(is));
        for (Eigen::Index c = 0; c < cols; ++c) {
            if (!(brow >> l.bias(c))) throw ParseError("snapshot: short bias row");
        }
        p.layers.push_back(std::move(l));
    }
    return p;
}

void write_int_list(std::ostream& os, const std::string& key, const std::vector<int>& v) {
    os << key;
    for (const int x : v) os << " " << x;
    os << "\n";
}

std::vector<int> read_int_list(const std::string& line, const std::string& key) {
    std::istringstream ss(line);
    std::string tok;
    ss >> tok;
    if (tok != key) throw ParseError("snapshot: expected '" + key + "', got '" + tok + "'");
    std::vector<int> v;
    int x;
    while (ss >> x) v.push_back(x);
    return v;
}

}  // namespace

void save_snapshot(const Ensemble& ens, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ParseError("cannot open for writing: " + path);
    f << "pdiv-ensemble v1\n";
    f << "topology " << to_string(ens.topology) << "\n";
    f << "input_dim " << ens.input_dim << "\n";
    f << "classes " << ens.classes << "\n";
    f << "anchor_index " << ens.anchor_index << "\n";
    f << "hypotheses " << ens.hypotheses.size() << "\n";
    for (std::size_t i = 0; i < ens.hypotheses.size(); ++i) {
        const auto& h = ens.hypotheses[i];
        f << "hypothesis " << i << "\n";
        write_int_list(f, "feature_widths", h.arch.feature_widths);
        f << "bottleneck " << h.arch.bottleneck << "\n";
        write_int_list(f, "classifier_widths", h.arch.classifier_widths);
        if (ens.topology == Topology::ShB && i > 0) {
            f << "extractor shared\n";
        } else {
            f << "extractor owned\n";
            write_param_set(f, *h.extractor);
        }
        f << "classifier\n";
        write_param_set(f, h.classifier);
    }
    if (!f) throw ParseError("write failed: " + path);
}

Ensemble load_snapshot(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ParseError("cannot open: " + path);
    if (next_content_line(f) != "pdiv-ensemble v1") throw ParseError(path + ": not a v1 snapshot");

    auto read_kv = [&](const std::string& key) {
        std::istringstream ss(next_content_line(f));
        std::string tok, value;
        ss >> tok >> value;
        if (tok != key) throw ParseError(path + ": expected '" + key + "', got '" + tok + "'");
        return value;
    };

    Ensemble ens;
    ens.topology = topology_from_string(read_kv("topology"));
    ens.input_dim = std::stoi(read_kv("input_dim"));
    ens.classes = std::stoi(read_kv("classes"));
    ens.anchor_index = std::stoi(read_kv("anchor_index"));
    const int m = std::stoi(read_kv("hypotheses"));

    std::shared_ptr<ParamSet> shared;
    for (int i = 0; i < m; ++i) {
        read_kv("hypothesis");
        Hypothesis h;
        h.arch.feature_widths = read_int_list(next_content_line(f), "feature_widths");
        h.arch.bottleneck = std::stoi(read_kv("bottleneck"));
        h.arch.classifier_widths = read_int_list(next_content_line(f), "classifier_widths");
        const std::string mode = read_kv("extractor");
        if (mode == "shared") {
            if (!shared) throw ParseError(path + ": shared extractor before owner");
            h.extractor = shared;
        } else {
            h.extractor = std::make_shared<ParamSet>(read_param_set(f));
            if (!shared) shared = h.extractor;
        }
        if (next_content_line(f) != "classifier") throw ParseError(path + ": expected 'classifier'");
        h.classifier = read_param_set(f);
        ens.hypotheses.push_back(std::move(h));
    }
    return ens;
}

}  // namespace pdiv
