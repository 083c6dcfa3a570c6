#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pdiv/adapt.hpp"
#include "pdiv/datagen.hpp"
#include "pdiv/ensemble.hpp"
#include "pdiv/metrics.hpp"

namespace pdiv {

// Where the data for a run comes from: the synthetic generator or CSV files.
struct DataSpec {
    enum class Kind { generated, csv };
    Kind kind = Kind::generated;
    GeneratorSpec generator;                 // generated
    std::optional<std::uint64_t> data_seed;  // pin the pair across run seeds
    std::string source_csv;                  // csv
    std::string target_csv;
    ShiftSpec label_shift;  // applied to the target domain
};

struct EnsembleSpec {
    Topology topology = Topology::DBA;
    std::vector<ArchSpec> archs;
};

struct ExperimentConfig {
    DataSpec data;
    EnsembleSpec ensemble;
    SourceTrainConfig source_training;
    AdaptationConfig adaptation;
    int weak_hypothesis_index = -1;  // >= 0: permute that member's classifier before adaptation
    std::vector<std::uint64_t> seeds;
    std::string out_dir = "out";
    bool save_snapshots = true;
    int jobs = 1;

    // For shift-report: per-domain transforms over a common base draw.
    std::vector<Transform> domains;
    std::vector<std::string> domain_names;

    void validate() const;
};

ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config(const std::string& json_text);

// Content-addressed hash over the canonicalized (key-sorted) config fields;
// stable under field reordering in the file.
std::string config_hash(const std::string& json_text);

struct RunRecord {
    std::string config_hash;
    std::uint64_t seed = 0;
    std::string strategy;
    std::string status = "ok";  // "ok" | "error"
    std::string error;
    double source_only_accuracy = 0.0;
    EvalReport source_only;
    EvalReport adapted;
    std::string trace_path;
    double wall_time_s = 0.0;

    std::string to_json() const;
};

// End-to-end pipeline per seed: data -> build -> train_source -> source-only
// metrics -> adapt -> final metrics. Records append to <out>/runs.jsonl;
// completed (hash, seed, strategy) triples are skipped on re-runs.
std::vector<RunRecord> run(const ExperimentConfig& cfg);

struct AnchorAblation {
    std::vector<std::string> strategies;  // fixed, random, ensemble, whp
    std::vector<double> mean_accuracy;
    std::vector<std::vector<double>> per_seed;  // [strategy][seed]
};

// Same seeds under all four anchor strategies. With weak injection enabled,
// the fixed strategy anchors on the corrupted member.
AnchorAblation ablate_anchor(const ExperimentConfig& cfg);
void write_anchor_csv(const AnchorAblation& table, const std::string& path);

struct BetaSweep {
    std::vector<double> betas;
    std::vector<double> mean_accuracy;
    std::vector<std::vector<double>> per_seed;  // [beta][seed]
};

BetaSweep sweep_beta(const ExperimentConfig& cfg, const std::vector<double>& betas);
void write_beta_csv(const BetaSweep& sweep, const std::string& path);

struct ShiftRow {
    std::string source;
    std::uint64_t run_seed = 0;
    std::string target;
    CIResult ci;
};

// Pairwise accuracy CIs between each source's own domain and every other
// domain, per seed. Domains share one base draw per seed and differ only in
// their transform.
std::vector<ShiftRow> shift_report(const ExperimentConfig& cfg);
void write_shift_csv(const std::vector<ShiftRow>& rows, const std::string& path);

// Resolves cfg.out_dir: absolute paths kept, relative ones placed under the
// PDIV_OUT_ROOT env var when set.
std::string resolve_out_dir(const std::string& out_dir);

// Materializes the (source, target) pair for one run seed, label shift
// included.
std::pair<Dataset, Dataset> materialize_data(const DataSpec& spec, std::uint64_t run_seed);

}  // namespace pdiv
