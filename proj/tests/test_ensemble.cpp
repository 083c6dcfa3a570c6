#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>

#include "pdiv/datagen.hpp"
#include "pdiv/ensemble.hpp"
#include "pdiv/errors.hpp"

using namespace pdiv;

namespace {

ArchSpec small_arch(int classes, std::vector<int> feature_widths = {16, 8}) {
    ArchSpec a;
    a.feature_widths = std::move(feature_widths);
    a.bottleneck = 6;
    a.classifier_widths = {classes};
    return a;
}

Dataset blobs_2class(std::uint64_t seed, int n = 300) {
    GeneratorSpec g;
    g.n = n;
    g.dims = 2;
    g.classes = 2;
    g.clusters_per_class = 1;
    g.center_radius = 2.5;
    g.cluster_sigma = 0.4;
    g.seed = seed;
    return make_shifted_pair(g).first;
}

bool paramsets_equal(const ParamSet& a, const ParamSet& b) {
    if (a.layers.size() != b.layers.size()) return false;
    for (std::size_t i = 0; i < a.layers.size(); ++i) {
        if ((a.layers[i].weight - b.layers[i].weight).cwiseAbs().maxCoeff() != 0.0) return false;
        if ((a.layers[i].bias - b.layers[i].bias).cwiseAbs().maxCoeff() != 0.0) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("DBA with depth pattern [2,3,2] has three hypotheses, two distinct archs") {
    const ArchSpec a = small_arch(3, {16, 8});
    const ArchSpec b = small_arch(3, {16, 12, 8});
    const Ensemble ens = build_ensemble(Topology::DBA, {a, b, a}, 2, 7);
    CHECK(ens.size() == 3);
    CHECK(ens.hypotheses[0].arch == ens.hypotheses[2].arch);
    CHECK(!(ens.hypotheses[0].arch == ens.hypotheses[1].arch));
    // extractor depth: feature widths + bottleneck layer
    CHECK(ens.hypotheses[0].extractor->layers.size() == 3);
    CHECK(ens.hypotheses[1].extractor->layers.size() == 4);
}

TEST_CASE("DBA rejects all-identical specs; ShB/SeB require identical specs") {
    const ArchSpec a = small_arch(2);
    const ArchSpec b = small_arch(2, {16, 12, 8});
    CHECK_THROWS_AS(build_ensemble(Topology::DBA, {a, a, a}, 2, 1), ConfigError);
    CHECK_THROWS_AS(build_ensemble(Topology::ShB, {a, b, a}, 2, 1), ConfigError);
    CHECK_THROWS_AS(build_ensemble(Topology::SeB, {a, b, a}, 2, 1), ConfigError);
}

TEST_CASE("ShB shares one extractor: mutation through one head is visible to all") {
    const ArchSpec a = small_arch(2);
    Ensemble ens = build_ensemble(Topology::ShB, {a, a, a}, 2, 3);
    const Matrix x = Matrix::Random(4, 2);
    const Matrix before = forward(*ens.hypotheses[1].extractor, x);
    ens.hypotheses[0].extractor->layers[0].weight.setConstant(0.5);
    const Matrix after = forward(*ens.hypotheses[1].extractor, x);
    CHECK((before - after).cwiseAbs().maxCoeff() > 0.0);
    CHECK(ens.hypotheses[0].extractor.get() == ens.hypotheses[2].extractor.get());
}

TEST_CASE("SeB/DBA hypotheses do not alias parameters") {
    const ArchSpec a = small_arch(2);
    Ensemble ens = build_ensemble(Topology::SeB, {a, a, a}, 2, 3);
    const ParamSet snapshot = *ens.hypotheses[1].extractor;
    ens.hypotheses[0].extractor->layers[0].weight.setConstant(9.0);
    CHECK(paramsets_equal(snapshot, *ens.hypotheses[1].extractor));
}

TEST_CASE("equal seeds build identical ensembles") {
    const ArchSpec a = small_arch(3, {16, 8});
    const ArchSpec b = small_arch(3, {16, 12, 8});
    const Ensemble e1 = build_ensemble(Topology::DBA, {a, b, a}, 2, 42);
    const Ensemble e2 = build_ensemble(Topology::DBA, {a, b, a}, 2, 42);
    for (int i = 0; i < 3; ++i) {
        CHECK(paramsets_equal(*e1.hypotheses[i].extractor, *e2.hypotheses[i].extractor));
        CHECK(paramsets_equal(e1.hypotheses[i].classifier, e2.hypotheses[i].classifier));
    }
}

TEST_CASE("ShB and SeB share hypothesis-0 initialization (only sharing differs)") {
    const ArchSpec a = small_arch(2);
    const Ensemble shb = build_ensemble(Topology::ShB, {a, a, a}, 2, 5);
    const Ensemble seb = build_ensemble(Topology::SeB, {a, a, a}, 2, 5);
    CHECK(paramsets_equal(*shb.hypotheses[0].extractor, *seb.hypotheses[0].extractor));
    for (int i = 0; i < 3; ++i) {
        CHECK(paramsets_equal(shb.hypotheses[i].classifier, seb.hypotheses[i].classifier));
    }
}

TEST_CASE("train_source reaches high accuracy on separable blobs") {
    const Dataset source = blobs_2class(11);
    const ArchSpec a = small_arch(2, {16, 8});
    const ArchSpec b = small_arch(2, {16, 12, 8});
    Ensemble ens = build_ensemble(Topology::DBA, {a, b, a}, 2, 11);
    SourceTrainConfig cfg;
    cfg.epochs = 40;
    cfg.lr = 0.1;
    cfg.batch_size = 50;
    const SourceTrainStats stats = train_source(ens, source, cfg, 11);
    CHECK(stats.final_train_accuracy >= 0.99);
    // every hypothesis individually fits the separable data
    const EnsemblePrediction pred = predict(ens, source.x);
    for (int i = 0; i < ens.size(); ++i) {
        const std::vector<int> labels = argmax_labels(pred.tensor.member[i]);
        int correct = 0;
        for (int r = 0; r < source.rows(); ++r) correct += (labels[r] == source.y[r]) ? 1 : 0;
        CHECK(static_cast<double>(correct) / source.rows() >= 0.99);
    }
}

TEST_CASE("train_source with zero epochs leaves parameters unchanged") {
    const Dataset source = blobs_2class(13);
    const ArchSpec a = small_arch(2);
    Ensemble ens = build_ensemble(Topology::SeB, {a, a}, 2, 13);
    const ParamSet snapshot = *ens.hypotheses[0].extractor;
    SourceTrainConfig cfg;
    cfg.epochs = 0;
    train_source(ens, source, cfg, 13);
    CHECK(paramsets_equal(snapshot, *ens.hypotheses[0].extractor));
}

TEST_CASE("train_source validates batch size") {
    const Dataset source = blobs_2class(13, 40);
    const ArchSpec a = small_arch(2);
    Ensemble ens = build_ensemble(Topology::SeB, {a, a}, 2, 13);
    SourceTrainConfig cfg;
    cfg.batch_size = 41;
    CHECK_THROWS_AS(train_source(ens, source, cfg, 13), ConfigError);
}

TEST_CASE("ShB invariant: extractors stay identical through training") {
    const Dataset source = blobs_2class(17);
    const ArchSpec a = small_arch(2);
    Ensemble ens = build_ensemble(Topology::ShB, {a, a, a}, 2, 17);
    SourceTrainConfig cfg;
    cfg.epochs = 5;
    train_source(ens, source, cfg, 17);
    CHECK(ens.hypotheses[0].extractor.get() == ens.hypotheses[1].extractor.get());
    CHECK(paramsets_equal(*ens.hypotheses[0].extractor, *ens.hypotheses[2].extractor));
}

TEST_CASE("predict: identical members average to each member; ties go to class 0") {
    // hand-built ensemble with a deterministic linear head
    ArchSpec a;
    a.feature_widths = {};
    a.bottleneck = 2;
    a.classifier_widths = {2};
    Ensemble ens;
    ens.topology = Topology::SeB;
    ens.input_dim = 2;
    ens.classes = 2;
    for (int i = 0; i < 2; ++i) {
        Hypothesis h;
        h.arch = a;
        ParamSet ext;
        Layer le;
        le.weight = Matrix::Identity(2, 2);
        le.bias = Vector::Zero(2);
        ext.layers.push_back(le);
        h.extractor = std::make_shared<ParamSet>(ext);
        Layer lc;
        // member 0 prefers class 0, member 1 prefers class 1, symmetrically
        lc.weight = Matrix::Zero(2, 2);
        lc.weight(0, 0) = (i == 0) ? 50.0 : -50.0;
        lc.weight(0, 1) = (i == 0) ? -50.0 : 50.0;
        lc.bias = Vector::Zero(2);
        h.classifier.layers.push_back(lc);
        ens.hypotheses.push_back(std::move(h));
    }
    Matrix x(1, 2);
    x << 1.0, 0.0;
    const EnsemblePrediction pred = predict(ens, x);
    CHECK(pred.mean(0, 0) == doctest::Approx(0.5));
    CHECK(pred.mean(0, 1) == doctest::Approx(0.5));
    CHECK(pred.labels[0] == 0);  // tie toward the lowest class index
}

TEST_CASE("predict mean matches an independent member-by-member average") {
    const ArchSpec a = small_arch(3, {8});
    const ArchSpec b = small_arch(3, {8, 6});
    const Ensemble ens = build_ensemble(Topology::DBA, {a, b, a}, 2, 23);
    const Matrix x = Matrix::Random(7, 2);
    const EnsemblePrediction pred = predict(ens, x);
    for (int r = 0; r < 7; ++r) {
        for (int c = 0; c < 3; ++c) {
            double s = 0.0;
            for (int m = 0; m < 3; ++m) s += pred.tensor.member[m](r, c);
            CHECK(std::abs(pred.mean(r, c) - s / 3.0) < 1e-12);
        }
    }
}

TEST_CASE("snapshot round trip reproduces predictions bit-identically") {
    const Dataset source = blobs_2class(31);
    const ArchSpec a = small_arch(2, {16, 8});
    const ArchSpec b = small_arch(2, {16, 12, 8});
    Ensemble ens = build_ensemble(Topology::DBA, {a, b, a}, 2, 31);
    SourceTrainConfig cfg;
    cfg.epochs = 3;
    train_source(ens, source, cfg, 31);

    const std::string path = (std::filesystem::temp_directory_path() / "pdiv_snap.txt").string();
    save_snapshot(ens, path);
    const Ensemble loaded = load_snapshot(path);
    CHECK(loaded.topology == ens.topology);
    CHECK(loaded.classes == ens.classes);

    const Matrix x = Matrix::Random(20, 2);
    const EnsemblePrediction p1 = predict(ens, x);
    const EnsemblePrediction p2 = predict(loaded, x);
    CHECK((p1.mean - p2.mean).cwiseAbs().maxCoeff() == 0.0);
    for (int m = 0; m < 3; ++m) {
        CHECK((p1.tensor.member[m] - p2.tensor.member[m]).cwiseAbs().maxCoeff() == 0.0);
    }
    std::filesystem::remove(path);
}

TEST_CASE("snapshot preserves ShB extractor sharing") {
    const ArchSpec a = small_arch(2);
    Ensemble ens = build_ensemble(Topology::ShB, {a, a, a}, 2, 37);
    const std::string path = (std::filesystem::temp_directory_path() / "pdiv_snap_shb.txt").string();
    save_snapshot(ens, path);
    Ensemble loaded = load_snapshot(path);
    CHECK(loaded.hypotheses[0].extractor.get() == loaded.hypotheses[1].extractor.get());
    CHECK(loaded.hypotheses[0].extractor.get() == loaded.hypotheses[2].extractor.get());
    std::filesystem::remove(path);
}

TEST_CASE("permuting classifier outputs relabels predictions cyclically") {
    const Dataset source = blobs_2class(41);
    const ArchSpec a = small_arch(2);
    Ensemble ens = build_ensemble(Topology::SeB, {a, a}, 2, 41);
    SourceTrainConfig cfg;
    cfg.epochs = 20;
    train_source(ens, source, cfg, 41);
    const EnsemblePrediction before = predict(ens, source.x);
    const std::vector<int> labels_before = argmax_labels(before.tensor.member[0]);
    permute_classifier_outputs(ens.hypotheses[0]);
    const EnsemblePrediction after = predict(ens, source.x);
    const std::vector<int> labels_after = argmax_labels(after.tensor.member[0]);
    for (std::size_t i = 0; i < labels_before.size(); ++i) {
        CHECK(labels_after[i] == (labels_before[i] + 1) % 2);
    }
}
