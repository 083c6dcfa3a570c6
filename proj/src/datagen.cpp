#include "pdiv/datagen.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "pdiv/errors.hpp"

namespace pdiv {

std::vector<int> Dataset::class_counts() const {
    std::vector<int> counts(classes, 0);
    for (const int label : y) {
        if (label < 0 || label >= classes) throw ValidationError("label out of range");
        ++counts[label];
    }
    return counts;
}

void Dataset::validate() const {
    if (static_cast<int>(y.size()) != rows()) throw ShapeError("dataset: label count != row count");
    if (classes < 1) throw ValidationError("dataset: classes must be >= 1");
    if (!x.allFinite()) throw NumericError("dataset: non-finite features");
    class_counts();
}

Transform Transform::rotation(double angle_deg) {
    Transform t;
    t.kind = Kind::rotation;
    t.angle_deg = angle_deg;
    return t;
}

Transform Transform::affine(Matrix a, Vector b) {
    if (a.rows() != a.cols()) throw ConfigError("affine transform: matrix must be square");
    if (b.size() != a.rows()) throw ConfigError("affine transform: offset size mismatch");
    if (std::abs(a.determinant()) < 1e-12) throw ConfigError("affine transform: singular matrix");
    Transform t;
    t.kind = Kind::affine;
    t.a = std::move(a);
    t.b = std::move(b);
    return t;
}

Transform Transform::noise(double sigma) {
    if (sigma < 0.0) throw ConfigError("noise transform: sigma must be >= 0");
    Transform t;
    t.kind = Kind::noise;
    t.noise_sigma = sigma;
    return t;
}

Matrix apply_transform(const Transform& t, const Matrix& x, Rng& noise_rng) {
    switch (t.kind) {
        case Transform::Kind::none:
            return x;
        case Transform::Kind::rotation: {
            if (x.cols() < 2) throw ConfigError("rotation transform needs >= 2 feature dims");
            const double rad = t.angle_deg * M_PI / 180.0;
            const double c = std::cos(rad), s = std::sin(rad);
            Matrix out = x;
            for (Eigen::Index i = 0; i < x.rows(); ++i) {
                const double x0 = x(i, 0), x1 = x(i, 1);
                out(i, 0) = c * x0 - s * x1;
                out(i, 1) = s * x0 + c * x1;
            }
            return out;
        }
        case Transform::Kind::affine: {
            if (t.a.rows() != x.cols()) throw ConfigError("affine transform: dimension mismatch");
            Matrix out = x * t.a.transpose();
            out.rowwise() += t.b.transpose();
            return out;
        }
        case Transform::Kind::noise: {
            Matrix out = x;
            for (Eigen::Index i = 0; i < out.rows(); ++i) {
                for (Eigen::Index j = 0; j < out.cols(); ++j) {
                    out(i, j) += t.noise_sigma * noise_rng.normal();
                }
            }
            return out;
        }
    }
    throw ConfigError("unknown transform kind");
}

namespace {

// Component centers: K = classes * clusters_per_class points evenly spaced on
// a circle in the (0, 1) plane, contiguous blocks of clusters per class.
std::vector<Vector> component_centers(const GeneratorSpec& spec) {
    const int k = spec.classes * spec.clusters_per_class;
    std::vector<Vector> centers;
    centers.reserve(k);
    for (int i = 0; i < k; ++i) {
        Vector c = Vector::Zero(spec.dims);
        const double angle = 2.0 * M_PI * i / k;
        c(0) = spec.center_radius * std::cos(angle);
        if (spec.dims > 1) c(1) = spec.center_radius * std::sin(angle);
        centers.push_back(std::move(c));
    }
    return centers;
}

Dataset draw_domain(const GeneratorSpec& spec, Rng& rng, const std::string& tag) {
    const auto centers = component_centers(spec);
    Dataset d;
    d.classes = spec.classes;
    d.domain_tag = tag;
    d.x = Matrix(spec.n, spec.dims);
    d.y.resize(spec.n);

    // Balanced class counts (remainder spread over the lowest classes).
    std::vector<int> order(spec.n);
    for (int i = 0; i < spec.n; ++i) order[i] = i % spec.classes;
    rng.shuffle(order);

    for (int i = 0; i < spec.n; ++i) {
        const int label = order[i];
        const int cluster = static_cast<int>(rng.below(spec.clusters_per_class));
        const Vector& center = centers[label * spec.clusters_per_class + cluster];
        for (int j = 0; j < spec.dims; ++j) {
            d.x(i, j) = center(j) + spec.cluster_sigma * rng.normal();
        }
        d.y[i] = label;
    }
    return d;
}

}  // namespace

std::pair<Dataset, Dataset> make_shifted_pair(const GeneratorSpec& spec) {
    if (spec.classes < 2) throw ConfigError("generator: need at least 2 classes");
    if (spec.dims < 1) throw ConfigError("generator: dims must be >= 1");
    if (spec.clusters_per_class < 1) throw ConfigError("generator: clusters_per_class must be >= 1");
    if (spec.n < spec.classes * 10) throw ConfigError("generator: n must be >= 10 * classes");

    Rng source_rng = substream(spec.seed, "data", 0);
    Rng target_rng = substream(spec.seed, "data", 1);
    Rng noise_rng = substream(spec.seed, "data-noise");

    Dataset source = draw_domain(spec, source_rng, "source");
    Dataset target = draw_domain(spec, target_rng, "target");
    for (const Transform& t : spec.transforms) {
        target.x = apply_transform(t, target.x, noise_rng);
    }
    return {std::move(source), std::move(target)};
}

Dataset apply_label_shift(const Dataset& data, const ShiftSpec& spec) {
    if (spec.kind == ShiftSpec::Kind::none) return data;
    if (spec.p <= 0.0 || spec.p > 1.0) throw ConfigError("label shift: p must be in (0, 1]");
    const int c = data.classes;
    int affected = 0;
    if (spec.kind == ShiftSpec::Kind::tweak_one) {
        affected = 1;
    } else {
        affected = spec.k;
        if (affected < 1 || affected >= c) {
            throw ConfigError("label shift: k must satisfy 1 <= k < classes");
        }
    }

    Rng rng = substream(spec.seed, "shift");
    const std::vector<int> chosen = rng.sample_without_replacement(c, affected);
    std::vector<bool> is_chosen(c, false);
    for (const int cls : chosen) is_chosen[cls] = true;

    // round-half-up retained counts per chosen class
    const auto counts = data.class_counts();
    std::vector<int> keep_quota(c);
    for (int k = 0; k < c; ++k) {
        keep_quota[k] = is_chosen[k] ? static_cast<int>(std::floor(spec.p * counts[k] + 0.5))
                                     : counts[k];
    }

    // Per-class index pools; chosen classes get a seeded shuffle then truncate.
    std::vector<std::vector<int>> pools(c);
    for (int i = 0; i < data.rows(); ++i) pools[data.y[i]].push_back(i);
    std::vector<int> kept;
    for (int k = 0; k < c; ++k) {
        if (is_chosen[k]) rng.shuffle(pools[k]);
        pools[k].resize(keep_quota[k]);
        kept.insert(kept.end(), pools[k].begin(), pools[k].end());
    }
    rng.shuffle(kept);

    Dataset out;
    out.classes = c;
    out.domain_tag = data.domain_tag;
    out.x = Matrix(static_cast<Eigen::Index>(kept.size()), data.x.cols());
    out.y.resize(kept.size());
    for (std::size_t i = 0; i < kept.size(); ++i) {
        out.x.row(static_cast<Eigen::Index>(i)) = data.x.row(kept[i]);
        out.y[i] = data.y[kept[i]];
    }
    return out;
}

void save_csv(const Dataset& data, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ParseError("cannot open for writing: " + path);
    for (int j = 0; j < data.dims(); ++j) f << "f" << j << ",";
    f << "label\n";
    char buf[64];
    for (int i = 0; i < data.rows(); ++i) {
        for (int j = 0; j < data.dims(); ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", data.x(i, j));
            f << buf << ",";
        }
        f << data.y[i] << "\n";
    }
    if (!f) throw ParseError("write failed: " + path);
}

Dataset load_csv(const std::string& path, int expected_classes) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ParseError("cannot open: " + path);

    std::string line;
    if (!std::getline(f, line)) throw ParseError(path + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();

    std::vector<std::string> header;
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) header.push_back(cell);
    }
    if (header.empty() || header.back() != "label") {
        throw ParseError(path + ": header must end with column 'label'");
    }
    const int dims = static_cast<int>(header.size()) - 1;
    if (dims < 1) throw ParseError(path + ": no feature columns");

    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
    int line_no = 1;
    while (std::getline(f, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> row;
        while (std::getline(ss, cell, ',')) {
            char* end = nullptr;
            const double v = std::strtod(cell.c_str(), &end);
            if (end == cell.c_str() || *end != '\0') {
                throw ParseError(path + ":" + std::to_string(line_no) + ": bad value '" + cell + "'");
            }
            row.push_back(v);
        }
        if (static_cast<int>(row.size()) != dims + 1) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": expected " +
                             std::to_string(dims + 1) + " fields, got " + std::to_string(row.size()));
        }
        const double label_raw = row.back();
        row.pop_back();
        const int label = static_cast<int>(label_raw);
        if (label < 0 || static_cast<double>(label) != label_raw) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": label must be a non-negative integer");
        }
        for (const double v : row) {
            if (!std::isfinite(v)) {
                throw ParseError(path + ":" + std::to_string(line_no) + ": non-finite feature");
            }
        }
        rows.push_back(std::move(row));
        labels.push_back(label);
    }

    Dataset d;
    d.domain_tag = path;
    d.x = Matrix(static_cast<Eigen::Index>(rows.size()), dims);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (int j = 0; j < dims; ++j) d.x(static_cast<Eigen::Index>(i), j) = rows[i][j];
    }
    d.y = std::move(labels);
    int max_label = -1;
    for (const int l : d.y) max_label = std::max(max_label, l);
    if (expected_classes > 0) {
        if (max_label >= expected_classes) {
            throw ValidationError(path + ": label " + std::to_string(max_label) +
                                  " >= declared class count " + std::to_string(expected_classes));
        }
        d.classes = expected_classes;
    } else {
        d.classes = max_label + 1;
    }
    return d;
}

}  // namespace pdiv
