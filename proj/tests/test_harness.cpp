#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "pdiv/errors.hpp"
#include "pdiv/harness.hpp"

using namespace pdiv;
namespace fs = std::filesystem;

namespace {

std::string small_config(const std::string& out_dir, const std::string& extra_adapt = "",
                         const std::string& extra_top = "") {
    return R"({
      "data": {
        "kind": "generated",
        "n_per_domain": 210,
        "dims": 2,
        "classes": 3,
        "clusters_per_class": 1,
        "center_radius": 2.5,
        "cluster_sigma": 0.5,
        "transform": {"kind": "rotation", "angle_deg": 40.0}
      },
      "ensemble": {
        "topology": "DBA",
        "archs": [
          {"feature_widths": [16, 8], "bottleneck": 6, "classifier_widths": [3]},
          {"feature_widths": [16, 12, 8], "bottleneck": 6, "classifier_widths": [3]},
          {"feature_widths": [16, 8], "bottleneck": 6, "classifier_widths": [3]}
        ]
      },
      "source_training": {"epochs": 15, "lr": 0.1, "batch_size": 42},
      "adaptation": {
        "alpha": 1.0, "beta": 0.5, "lr": 0.03, "iterations": 40, "batch_size": 42,
        "anchor_strategy": "whp", "proportion_mode": "pseudo"
        )" + extra_adapt + R"(
      },
      "seeds": [1, 2]
      )" + extra_top + R"(,
      "out_dir": ")" + out_dir + R"("
    })";
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("config parses, validates, and rejects bad fields") {
    TempDir tmp("pdiv_hcfg");
    const ExperimentConfig cfg = parse_config(small_config(tmp.path.string()));
    CHECK(cfg.seeds == std::vector<std::uint64_t>{1, 2});
    CHECK(cfg.ensemble.archs.size() == 3);
    CHECK(cfg.adaptation.anchor_strategy == AnchorStrategy::whp);

    CHECK_THROWS_AS(parse_config("{not json"), ConfigError);
    // duplicate seeds
    std::string bad = small_config(tmp.path.string());
    const auto pos = bad.find("[1, 2]");
    bad.replace(pos, 6, "[1, 1]");
    CHECK_THROWS_AS(parse_config(bad), ConfigError);
    // whp with two hypotheses
    std::string two = small_config(tmp.path.string());
    const auto archs_pos = two.find("{\"feature_widths\": [16, 12, 8]");
    const auto archs_end = two.find("},", archs_pos);
    two.erase(archs_pos, archs_end - archs_pos + 2);
    CHECK_THROWS_AS(parse_config(two), ConfigError);
}

TEST_CASE("config hash is stable under field reordering") {
    const std::string a = R"({"alpha": 1.0, "beta": {"x": 1, "y": 2}, "seeds": [1, 2]})";
    const std::string b = R"({"seeds": [1, 2], "beta": {"y": 2, "x": 1}, "alpha": 1.0})";
    const std::string c = R"({"seeds": [2, 1], "beta": {"y": 2, "x": 1}, "alpha": 1.0})";
    CHECK(config_hash(a) == config_hash(b));
    CHECK(config_hash(a) != config_hash(c));
}

TEST_CASE("run executes every seed, appends records, and is reproducible") {
    TempDir tmp_a("pdiv_run_a");
    TempDir tmp_b("pdiv_run_b");
    const ExperimentConfig cfg_a = parse_config(small_config(tmp_a.path.string()));
    const ExperimentConfig cfg_b = parse_config(small_config(tmp_b.path.string()));

    const auto rec_a = run(cfg_a);
    REQUIRE(rec_a.size() == 2);
    for (const auto& r : rec_a) {
        CHECK(r.status == "ok");
        CHECK(r.adapted.accuracy >= 0.0);
        CHECK(fs::exists(r.trace_path));
    }
    CHECK(fs::exists(tmp_a.path / "runs.jsonl"));
    CHECK(fs::exists(tmp_a.path / "snapshot_seed1.txt"));

    // identical config in a fresh directory gives identical metrics
    const auto rec_b = run(cfg_b);
    REQUIRE(rec_b.size() == 2);
    for (std::size_t i = 0; i < rec_a.size(); ++i) {
        CHECK(rec_a[i].seed == rec_b[i].seed);
        CHECK(rec_a[i].source_only_accuracy == rec_b[i].source_only_accuracy);
        CHECK(rec_a[i].adapted.accuracy == rec_b[i].adapted.accuracy);
        CHECK(rec_a[i].adapted.brier == rec_b[i].adapted.brier);
        CHECK(rec_a[i].adapted.ece == rec_b[i].adapted.ece);
    }

    // resuming skips completed (hash, seed, strategy) triples
    const auto rec_resume = run(cfg_a);
    CHECK(rec_resume.empty());
}

TEST_CASE("a failing seed is recorded as an error entry, not an exception") {
    TempDir tmp("pdiv_fail");
    // anchor_index valid at config level but weak index out of data range is
    // not reachable; instead force a failure via batch_size > N
    std::string text = small_config(tmp.path.string());
    const auto pos = text.find("\"iterations\": 40, \"batch_size\": 42");
    REQUIRE(pos != std::string::npos);
    std::string broken = text;
    broken.replace(pos, std::string("\"iterations\": 40, \"batch_size\": 42").size(),
                   "\"iterations\": 40, \"batch_size\": 4200");
    const ExperimentConfig cfg = parse_config(broken);
    const auto records = run(cfg);
    REQUIRE(records.size() == 2);
    for (const auto& r : records) {
        CHECK(r.status == "error");
        CHECK(!r.error.empty());
    }
}

TEST_CASE("pinned data seed fixes the pair across run seeds") {
    DataSpec spec;
    spec.kind = DataSpec::Kind::generated;
    spec.generator.n = 120;
    spec.generator.dims = 2;
    spec.generator.classes = 3;
    spec.generator.cluster_sigma = 0.5;
    spec.data_seed = 99;
    auto [s1, t1] = materialize_data(spec, 1);
    auto [s2, t2] = materialize_data(spec, 2);
    CHECK((s1.x - s2.x).cwiseAbs().maxCoeff() == 0.0);
    CHECK((t1.x - t2.x).cwiseAbs().maxCoeff() == 0.0);

    spec.data_seed.reset();
    auto [s3, t3] = materialize_data(spec, 2);
    CHECK((s1.x - s3.x).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("sweep_beta rejects duplicates and writes a parseable CSV") {
    TempDir tmp("pdiv_sweep");
    ExperimentConfig cfg = parse_config(small_config(tmp.path.string()));
    cfg.seeds = {1};
    cfg.adaptation.iterations = 10;
    CHECK_THROWS_AS(sweep_beta(cfg, {0.0, 0.0}), ConfigError);
    CHECK_THROWS_AS(sweep_beta(cfg, {}), ConfigError);
    CHECK_THROWS_AS(sweep_beta(cfg, {-0.5}), ConfigError);

    const BetaSweep sweep = sweep_beta(cfg, {0.0, 0.5});
    REQUIRE(sweep.betas.size() == 2);
    const std::string path = (tmp.path / "sweep_beta.csv").string();
    write_beta_csv(sweep, path);

    std::ifstream f(path);
    std::string header, row0, row1;
    std::getline(f, header);
    std::getline(f, row0);
    std::getline(f, row1);
    CHECK(header == "beta,mean_accuracy");
    std::stringstream ss(row1);
    std::string beta_s, acc_s;
    std::getline(ss, beta_s, ',');
    std::getline(ss, acc_s, ',');
    CHECK(std::stod(beta_s) == 0.5);
    CHECK(std::stod(acc_s) == sweep.mean_accuracy[1]);
}

TEST_CASE("ablate_anchor emits the four strategies in order and round-trips") {
    TempDir tmp("pdiv_ablate");
    ExperimentConfig cfg = parse_config(small_config(tmp.path.string()));
    cfg.seeds = {1};
    cfg.source_training.epochs = 8;
    cfg.adaptation.iterations = 10;
    const AnchorAblation table = ablate_anchor(cfg);
    CHECK(table.strategies == std::vector<std::string>{"fixed", "random", "ensemble", "whp"});
    REQUIRE(table.mean_accuracy.size() == 4);

    const std::string path = (tmp.path / "ablate_anchor.csv").string();
    write_anchor_csv(table, path);
    std::ifstream f(path);
    std::string header, values;
    std::getline(f, header);
    std::getline(f, values);
    CHECK(header == "fixed,random,ensemble,whp");
    std::stringstream ss(values);
    for (int i = 0; i < 4; ++i) {
        std::string cell;
        std::getline(ss, cell, ',');
        CHECK(std::stod(cell) == table.mean_accuracy[i]);
    }
}

TEST_CASE("shift_report: identical domains always overlap zero; row count matches") {
    TempDir tmp("pdiv_shift");
    std::string text = small_config(
        tmp.path.string(), "",
        R"(, "domains": [{"kind": "none", "name": "a"}, {"kind": "none", "name": "b"}])");
    ExperimentConfig cfg = parse_config(text);
    cfg.seeds = {1, 2};
    cfg.source_training.epochs = 8;
    const auto rows = shift_report(cfg);
    CHECK(rows.size() == 2 * 2);  // seeds x ordered pairs
    for (const auto& r : rows) {
        CHECK(r.ci.p_diff == 0.0);
        CHECK(r.ci.overlaps_zero);
    }
    const std::string path = (tmp.path / "shift_report.csv").string();
    write_shift_csv(rows, path);
    std::ifstream f(path);
    std::string header;
    std::getline(f, header);
    CHECK(header == "source,run,target,p_diff,se_diff,lo,hi,overlaps_zero");
}

TEST_CASE("shift_report on a strongly rotated pair mostly excludes zero") {
    TempDir tmp("pdiv_shift2");
    std::string text = small_config(
        tmp.path.string(), "",
        R"(, "domains": [{"kind": "none", "name": "base"},
                          {"kind": "rotation", "angle_deg": 75.0, "name": "rot"}])");
    ExperimentConfig cfg = parse_config(text);
    cfg.seeds = {1, 2, 3};
    cfg.data.generator.n = 400;
    cfg.source_training.epochs = 20;
    const auto rows = shift_report(cfg);
    int non_overlap = 0;
    for (const auto& r : rows) non_overlap += r.ci.overlaps_zero ? 0 : 1;
    CHECK(non_overlap * 2 > static_cast<int>(rows.size()));
}

TEST_CASE("out dir resolution honors PDIV_OUT_ROOT for relative paths") {
    setenv("PDIV_OUT_ROOT", "/tmp/pdiv_root", 1);
    CHECK(resolve_out_dir("exp1") == "/tmp/pdiv_root/exp1");
    CHECK(resolve_out_dir("/abs/path") == "/abs/path");
    unsetenv("PDIV_OUT_ROOT");
    CHECK(resolve_out_dir("exp1") == "exp1");
}
