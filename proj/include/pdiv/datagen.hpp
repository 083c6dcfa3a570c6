#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pdiv/diffcore.hpp"

namespace pdiv {

// Labeled feature matrix. Target-domain labels are carried for evaluation
// only; adaptation never reads them.
struct Dataset {
    Matrix x;            // N x d
    std::vector<int> y;  // in [0, classes)
    std::string domain_tag;
    int classes = 0;

    int rows() const { return static_cast<int>(x.rows()); }
    int dims() const { return static_cast<int>(x.cols()); }
    std::vector<int> class_counts() const;
    void validate() const;
};

// Feature-space transform applied to the target domain of a generated pair.
struct Transform {
    enum class Kind { none, rotation, affine, noise };
    Kind kind = Kind::none;
    double angle_deg = 0.0;  // rotation, applied in the plane of dims (0, 1)
    Matrix a;                // affine: d x d
    Vector b;                // affine offset
    double noise_sigma = 0.0;

    static Transform none() { return {}; }
    static Transform rotation(double angle_deg);
    static Transform affine(Matrix a, Vector b);
    static Transform noise(double sigma);
};

// Class-conditional Gaussian mixture: C * clusters_per_class components with
// deterministic centers evenly spaced on a circle of center_radius, assigned
// to classes in contiguous blocks. Samples are balanced across classes.
struct GeneratorSpec {
    int n = 600;  // per domain
    int dims = 2;
    int classes = 3;
    int clusters_per_class = 1;
    double center_radius = 2.5;
    double cluster_sigma = 0.5;
    std::vector<Transform> transforms;  // target only, applied in order
    std::uint64_t seed = 1;
};

// Label distribution shift: subsample the chosen class(es) to a p fraction.
struct ShiftSpec {
    enum class Kind { none, tweak_one, minority_class };
    Kind kind = Kind::none;
    double p = 1.0;  // retention fraction in (0, 1]
    int k = 1;       // affected classes (minority_class)
    std::uint64_t seed = 0;
};

// Source and covariate-shifted target drawn from the same mixture; the
// labeling rule is shared, only the target features are transformed.
std::pair<Dataset, Dataset> make_shifted_pair(const GeneratorSpec& spec);

Matrix apply_transform(const Transform& t, const Matrix& x, Rng& noise_rng);

// Keeps round(p * count) samples of each selected class, chosen uniformly at
// random by seed; other classes untouched; row order reshuffled.
Dataset apply_label_shift(const Dataset& data, const ShiftSpec& spec);

// CSV with header f0,...,f{d-1},label; 17-significant-digit decimals, LF line
// endings. Round-trips exactly.
void save_csv(const Dataset& data, const std::string& path);
Dataset load_csv(const std::string& path, int expected_classes = 0);

}  // namespace pdiv
