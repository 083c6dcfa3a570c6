#include "pdiv/harness.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "pdiv/errors.hpp"

namespace pdiv {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

Transform transform_from_json(const json& j) {
    const std::string kind = j.value("kind", "none");
    if (kind == "none") return Transform::none();
    if (kind == "rotation") {
        if (!j.contains("angle_deg")) throw ConfigError("rotation transform needs angle_deg");
        return Transform::rotation(j.at("angle_deg").get<double>());
    }
    if (kind == "noise") {
        if (!j.contains("sigma")) throw ConfigError("noise transform needs sigma");
        return Transform::noise(j.at("sigma").get<double>());
    }
    if (kind == "affine") {
        const auto rows = j.at("matrix").get<std::vector<std::vector<double>>>();
        const auto off = j.at("offset").get<std::vector<double>>();
        const int d = static_cast<int>(rows.size());
        Matrix a(d, d);
        for (int r = 0; r < d; ++r) {
            if (static_cast<int>(rows[r].size()) != d) throw ConfigError("affine matrix must be square");
            for (int c = 0; c < d; ++c) a(r, c) = rows[r][c];
        }
        Vector b(d);
        if (static_cast<int>(off.size()) != d) throw ConfigError("affine offset size mismatch");
        for (int r = 0; r < d; ++r) b(r) = off[r];
        return Transform::affine(std::move(a), std::move(b));
    }
    throw ConfigError("unknown transform kind: " + kind);
}

ShiftSpec shift_from_json(const json& j) {
    ShiftSpec s;
    const std::string kind = j.value("kind", "none");
    if (kind == "none") {
        s.kind = ShiftSpec::Kind::none;
    } else if (kind == "tweak_one") {
        s.kind = ShiftSpec::Kind::tweak_one;
        s.k = 1;
    } else if (kind == "minority_class") {
        s.kind = ShiftSpec::Kind::minority_class;
        s.k = j.value("k", 1);
    } else {
        throw ConfigError("unknown label shift kind: " + kind);
    }
    s.p = j.value("p", 1.0);
    return s;
}

ArchSpec arch_from_json(const json& j) {
    ArchSpec a;
    a.feature_widths = j.value("feature_widths", std::vector<int>{});
    a.bottleneck = j.value("bottleneck", 16);
    a.classifier_widths = j.at("classifier_widths").get<std::vector<int>>();
    return a;
}

}  // namespace

void ExperimentConfig::validate() const {
    if (seeds.empty()) throw ConfigError("config: seeds must be non-empty");
    std::set<std::uint64_t> uniq(seeds.begin(), seeds.end());
    if (uniq.size() != seeds.size()) throw ConfigError("config: seeds must be distinct");
    if (ensemble.archs.empty()) throw ConfigError("config: ensemble needs at least one arch");
    for (const auto& a : ensemble.archs) a.validate();
    const int m = static_cast<int>(ensemble.archs.size());
    if (adaptation.anchor_strategy == AnchorStrategy::whp && m < 3) {
        throw ConfigError("config: whp anchor requires at least 3 hypotheses");
    }
    if (m < 2 && adaptation.beta > 0.0) {
        throw ConfigError("config: hypothesis disparity needs at least 2 hypotheses (set beta=0)");
    }
    if (adaptation.anchor_strategy == AnchorStrategy::fixed &&
        (adaptation.anchor_index < 0 || adaptation.anchor_index >= m)) {
        throw ConfigError("config: fixed anchor requires anchor_index in [0, M)");
    }
    if (weak_hypothesis_index >= m) throw ConfigError("config: weak_hypothesis_index out of range");
    if (data.kind == DataSpec::Kind::csv) {
        if (!fs::exists(data.source_csv)) throw ConfigError("config: missing file " + data.source_csv);
        if (!fs::exists(data.target_csv)) throw ConfigError("config: missing file " + data.target_csv);
    }
    if (jobs < 1) throw ConfigError("config: jobs must be >= 1");
}

ExperimentConfig parse_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }

    ExperimentConfig cfg;
    try {
        const json& d = j.at("data");
        const std::string kind = d.value("kind", "generated");
        if (kind == "generated") {
            cfg.data.kind = DataSpec::Kind::generated;
            auto& g = cfg.data.generator;
            g.n = d.value("n_per_domain", g.n);
            g.dims = d.value("dims", g.dims);
            g.classes = d.value("classes", g.classes);
            g.clusters_per_class = d.value("clusters_per_class", g.clusters_per_class);
            g.center_radius = d.value("center_radius", g.center_radius);
            g.cluster_sigma = d.value("cluster_sigma", g.cluster_sigma);
            if (d.contains("transform")) g.transforms.push_back(transform_from_json(d.at("transform")));
            if (d.contains("transforms")) {
                for (const auto& t : d.at("transforms")) g.transforms.push_back(transform_from_json(t));
            }
            if (d.contains("seed")) cfg.data.data_seed = d.at("seed").get<std::uint64_t>();
        } else if (kind == "csv") {
            cfg.data.kind = DataSpec::Kind::csv;
            cfg.data.source_csv = d.at("source_csv").get<std::string>();
            cfg.data.target_csv = d.at("target_csv").get<std::string>();
        } else {
            throw ConfigError("unknown data kind: " + kind);
        }
        if (d.contains("label_shift")) cfg.data.label_shift = shift_from_json(d.at("label_shift"));

        const json& e = j.at("ensemble");
        cfg.ensemble.topology = topology_from_string(e.value("topology", "DBA"));
        for (const auto& a : e.at("archs")) cfg.ensemble.archs.push_back(arch_from_json(a));

        if (j.contains("source_training")) {
            const json& s = j.at("source_training");
            cfg.source_training.epochs = s.value("epochs", cfg.source_training.epochs);
            cfg.source_training.lr = s.value("lr", cfg.source_training.lr);
            cfg.source_training.batch_size = s.value("batch_size", cfg.source_training.batch_size);
            cfg.source_training.momentum = s.value("momentum", cfg.source_training.momentum);
        }

        if (j.contains("adaptation")) {
            const json& a = j.at("adaptation");
            auto& ad = cfg.adaptation;
            ad.alpha = a.value("alpha", ad.alpha);
            ad.beta = a.value("beta", ad.beta);
            ad.lr = a.value("lr", ad.lr);
            ad.iterations = a.value("iterations", ad.iterations);
            ad.batch_size = a.value("batch_size", ad.batch_size);
            ad.momentum = a.value("momentum", ad.momentum);
            ad.anchor_strategy = anchor_strategy_from_string(a.value("anchor_strategy", "whp"));
            ad.anchor_index = a.value("anchor_index", ad.anchor_index);
            ad.proportion_mode = proportion_mode_from_string(a.value("proportion_mode", "uniform"));
            ad.proportion_refresh_interval =
                a.value("proportion_refresh_interval", ad.proportion_refresh_interval);
            const std::string cm = a.value("cosine_mode", "per_sample");
            if (cm == "per_sample") {
                ad.cosine_mode = CosineMode::per_sample;
            } else if (cm == "flattened") {
                ad.cosine_mode = CosineMode::flattened;
            } else {
                throw ConfigError("unknown cosine_mode: " + cm);
            }
            ad.full_marginal = a.value("full_marginal", ad.full_marginal);
            ad.log_interval = a.value("log_interval", ad.log_interval);
        }

        cfg.weak_hypothesis_index = j.value("weak_hypothesis_index", -1);
        cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
        cfg.out_dir = j.value("out_dir", cfg.out_dir);
        cfg.save_snapshots = j.value("save_snapshots", cfg.save_snapshots);
        cfg.jobs = j.value("jobs", 1);

        if (j.contains("domains")) {
            for (const auto& dj : j.at("domains")) {
                cfg.domains.push_back(transform_from_json(dj));
                cfg.domain_names.push_back(
                    dj.value("name", "d" + std::to_string(cfg.domains.size() - 1)));
            }
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config field error: ") + e.what());
    }

    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open config: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config(ss.str());
}

std::string config_hash(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    // nlohmann::json objects iterate in sorted key order, so dump() is a
    // canonical form independent of the file's field order.
    const std::string canonical = j.dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const char c : canonical) {
        h ^= static_cast<std::uint8_t>(c);
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

std::string RunRecord::to_json() const {
    json j{{"config_hash", config_hash},
           {"seed", seed},
           {"strategy", strategy},
           {"status", status},
           {"wall_time_s", wall_time_s}};
    if (status == "ok") {
        j["source_only_accuracy"] = source_only_accuracy;
        j["source_only"] = json::parse(source_only.to_json());
        j["adapted"] = json::parse(adapted.to_json());
        j["trace_path"] = trace_path;
    } else {
        j["error"] = error;
    }
    return j.dump();
}

std::string resolve_out_dir(const std::string& out_dir) {
    fs::path p(out_dir);
    if (p.is_absolute()) return p.string();
    if (const char* root = std::getenv("PDIV_OUT_ROOT")) return (fs::path(root) / p).string();
    return p.string();
}

std::pair<Dataset, Dataset> materialize_data(const DataSpec& spec, std::uint64_t run_seed) {
    Dataset source, target;
    if (spec.kind == DataSpec::Kind::generated) {
        GeneratorSpec g = spec.generator;
        g.seed = spec.data_seed.value_or(substream(run_seed, "data").next_u64());
        auto pair = make_shifted_pair(g);
        source = std::move(pair.first);
        target = std::move(pair.second);
    } else {
        source = load_csv(spec.source_csv);
        target = load_csv(spec.target_csv, source.classes);
        target.classes = source.classes;
    }
    if (spec.label_shift.kind != ShiftSpec::Kind::none) {
        ShiftSpec s = spec.label_shift;
        s.seed = substream(run_seed, "shift").next_u64();
        target = apply_label_shift(target, s);
    }
    return {std::move(source), std::move(target)};
}

namespace {

std::string config_identity(const ExperimentConfig& cfg) {
    // Hash over the fields that define a run's outcome (seeds excluded so a
    // resumed sweep with more seeds keeps its completed entries).
    json j;
    j["data_kind"] = cfg.data.kind == DataSpec::Kind::generated ? "generated" : "csv";
    if (cfg.data.kind == DataSpec::Kind::generated) {
        const auto& g = cfg.data.generator;
        j["n"] = g.n;
        j["dims"] = g.dims;
        j["classes"] = g.classes;
        j["clusters_per_class"] = g.clusters_per_class;
        j["center_radius"] = g.center_radius;
        j["cluster_sigma"] = g.cluster_sigma;
        for (const auto& t : g.transforms) {
            j["transforms"].push_back({{"kind", static_cast<int>(t.kind)},
                                       {"angle", t.angle_deg},
                                       {"noise", t.noise_sigma}});
        }
        if (cfg.data.data_seed) j["data_seed"] = *cfg.data.data_seed;
    } else {
        j["source_csv"] = cfg.data.source_csv;
        j["target_csv"] = cfg.data.target_csv;
    }
    j["shift_kind"] = static_cast<int>(cfg.data.label_shift.kind);
    j["shift_p"] = cfg.data.label_shift.p;
    j["shift_k"] = cfg.data.label_shift.k;
    j["topology"] = to_string(cfg.ensemble.topology);
    for (const auto& a : cfg.ensemble.archs) {
        json aj{{"f", a.feature_widths}, {"b", a.bottleneck}, {"c", a.classifier_widths}};
        j["archs"].push_back(aj);
    }
    j["src_epochs"] = cfg.source_training.epochs;
    j["src_lr"] = cfg.source_training.lr;
    j["src_bs"] = cfg.source_training.batch_size;
    j["src_mom"] = cfg.source_training.momentum;
    const auto& a = cfg.adaptation;
    j["alpha"] = a.alpha;
    j["beta"] = a.beta;
    j["ad_lr"] = a.lr;
    j["iters"] = a.iterations;
    j["ad_bs"] = a.batch_size;
    j["ad_mom"] = a.momentum;
    j["anchor_index"] = a.anchor_index;
    j["proportion_mode"] = to_string(a.proportion_mode);
    j["refresh"] = a.proportion_refresh_interval;
    j["cosine"] = a.cosine_mode == CosineMode::per_sample ? "per_sample" : "flattened";
    j["full_marginal"] = a.full_marginal;
    j["weak"] = cfg.weak_hypothesis_index;
    return config_hash(j.dump());
}

std::set<std::string> completed_keys(const std::string& results_path) {
    std::set<std::string> done;
    std::ifstream f(results_path, std::ios::binary);
    if (!f) return done;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        try {
            const json j = json::parse(line);
            if (j.value("status", "") != "ok") continue;
            done.insert(j.at("config_hash").get<std::string>() + "/" +
                        std::to_string(j.at("seed").get<std::uint64_t>()) + "/" +
                        j.at("strategy").get<std::string>());
        } catch (const json::exception&) {
            continue;  // tolerate foreign lines in the results file
        }
    }
    return done;
}

// One full seed: data, source training, adaptation, metrics.
RunRecord run_one_seed(const ExperimentConfig& cfg, std::uint64_t seed, const std::string& hash,
                       const std::string& out_dir) {
    const auto t0 = std::chrono::steady_clock::now();
    RunRecord rec;
    rec.config_hash = hash;
    rec.seed = seed;
    rec.strategy = to_string(cfg.adaptation.anchor_strategy);
    try {
        auto [source, target] = materialize_data(cfg.data, seed);

        Ensemble ens = build_ensemble(cfg.ensemble.topology, cfg.ensemble.archs, source.dims(),
                                      substream(seed, "init-root").next_u64());
        train_source(ens, source, cfg.source_training, seed);

        const EnsemblePrediction before = predict(ens, target.x);
        rec.source_only = evaluate(before, target.y, target.classes);
        rec.source_only_accuracy = rec.source_only.accuracy;

        if (cfg.weak_hypothesis_index >= 0) {
            permute_classifier_outputs(ens.hypotheses[cfg.weak_hypothesis_index]);
        }

        AdaptationConfig ad = cfg.adaptation;
        ad.seed = seed;
        const AdaptationResult ares = adapt_target(ens, target.x, ad, &target.y);

        const EnsemblePrediction after = predict(ens, target.x);
        rec.adapted = evaluate(after, target.y, target.classes);

        rec.trace_path = (fs::path(out_dir) /
                          ("trace_" + rec.strategy + "_seed" + std::to_string(seed) + ".jsonl"))
                             .string();
        write_trace_jsonl(ares.trace, rec.trace_path);
        if (cfg.save_snapshots) {
            save_snapshot(ens, (fs::path(out_dir) / ("snapshot_seed" + std::to_string(seed) + ".txt"))
                                   .string());
        }
    } catch (const std::exception& e) {
        rec.status = "error";
        rec.error = e.what();
    }
    rec.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rec;
}

class ResultsAppender {
public:
    explicit ResultsAppender(const std::string& path) : path_(path) {}

    void append(const RunRecord& rec) {
        std::lock_guard<std::mutex> lock(mu_);
        std::ofstream f(path_, std::ios::binary | std::ios::app);
        if (!f) throw ParseError("cannot append to " + path_);
        f << rec.to_json() << "\n";
    }

private:
    std::string path_;
    std::mutex mu_;
};

std::vector<RunRecord> run_all_seeds(const ExperimentConfig& cfg) {
    const std::string out_dir = resolve_out_dir(cfg.out_dir);
    fs::create_directories(out_dir);
    const std::string hash = config_identity(cfg);
    const std::string results_path = (fs::path(out_dir) / "runs.jsonl").string();
    const std::set<std::string> done = completed_keys(results_path);
    ResultsAppender appender(results_path);

    std::vector<std::uint64_t> pending;
    for (const auto seed : cfg.seeds) {
        const std::string key =
            hash + "/" + std::to_string(seed) + "/" + to_string(cfg.adaptation.anchor_strategy);
        if (!done.count(key)) pending.push_back(seed);
    }

    std::vector<RunRecord> records(pending.size());
    if (cfg.jobs <= 1 || pending.size() <= 1) {
        for (std::size_t i = 0; i < pending.size(); ++i) {
            records[i] = run_one_seed(cfg, pending[i], hash, out_dir);
            appender.append(records[i]);
        }
    } else {
        std::vector<std::thread> workers;
        std::mutex next_mu;
        std::size_t next = 0;
        const int n_workers = std::min<int>(cfg.jobs, static_cast<int>(pending.size()));
        for (int w = 0; w < n_workers; ++w) {
            workers.emplace_back([&] {
                while (true) {
                    std::size_t i;
                    {
                        std::lock_guard<std::mutex> lock(next_mu);
                        if (next >= pending.size()) return;
                        i = next++;
                    }
                    records[i] = run_one_seed(cfg, pending[i], hash, out_dir);
                    appender.append(records[i]);
                }
            });
        }
        for (auto& t : workers) t.join();
    }
    return records;
}

}  // namespace

std::vector<RunRecord> run(const ExperimentConfig& cfg) {
    cfg.validate();
    return run_all_seeds(cfg);
}

AnchorAblation ablate_anchor(const ExperimentConfig& cfg) {
    cfg.validate();
    AnchorAblation table;
    table.strategies = {"fixed", "random", "ensemble", "whp"};
    for (const auto& name : table.strategies) {
        ExperimentConfig c = cfg;
        c.adaptation.anchor_strategy = anchor_strategy_from_string(name);
        if (c.adaptation.anchor_strategy == AnchorStrategy::fixed) {
            // with weak injection the fixed strategy anchors on the corrupted
            // member; otherwise member 0
            c.adaptation.anchor_index =
                cfg.weak_hypothesis_index >= 0 ? cfg.weak_hypothesis_index
                                               : std::max(0, cfg.adaptation.anchor_index);
        }
        const auto records = run(c);
        std::vector<double> accs;
        double total = 0.0;
        for (const auto& r : records) {
            if (r.status != "ok") throw NumericError("ablate_anchor: seed " + std::to_string(r.seed) +
                                                     " failed: " + r.error);
            accs.push_back(r.adapted.accuracy);
            total += r.adapted.accuracy;
        }
        table.per_seed.push_back(std::move(accs));
        table.mean_accuracy.push_back(records.empty() ? 0.0 : total / records.size());
    }
    return table;
}

void write_anchor_csv(const AnchorAblation& table, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ParseError("cannot open for writing: " + path);
    char buf[64];
    for (std::size_t i = 0; i < table.strategies.size(); ++i) {
        f << table.strategies[i] << (i + 1 == table.strategies.size() ? "\n" : ",");
    }
    for (std::size_t i = 0; i < table.mean_accuracy.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g", table.mean_accuracy[i]);
        f << buf << (i + 1 == table.mean_accuracy.size() ? "\n" : ",");
    }
}

BetaSweep sweep_beta(const ExperimentConfig& cfg, const std::vector<double>& betas) {
    cfg.validate();
    if (betas.empty()) throw ConfigError("sweep_beta: beta list must be non-empty");
    std::set<double> uniq(betas.begin(), betas.end());
    if (uniq.size() != betas.size()) throw ConfigError("sweep_beta: duplicate beta values");
    for (const double b : betas) {
        if (b < 0.0) throw ConfigError("sweep_beta: beta must be >= 0");
    }

    BetaSweep sweep;
    sweep.betas = betas;
    for (const double beta : betas) {
        ExperimentConfig c = cfg;
        c.adaptation.beta = beta;
        const auto records = run(c);
        std::vector<double> accs;
        double total = 0.0;
        for (const auto& r : records) {
            if (r.status != "ok") throw NumericError("sweep_beta: seed " + std::to_string(r.seed) +
                                                     " failed: " + r.error);
            accs.push_back(r.adapted.accuracy);
            total += r.adapted.accuracy;
        }
        sweep.per_seed.push_back(std::move(accs));
        sweep.mean_accuracy.push_back(records.empty() ? 0.0 : total / records.size());
    }
    return sweep;
}

void write_beta_csv(const BetaSweep& sweep, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ParseError("cannot open for writing: " + path);
    f << "beta,mean_accuracy\n";
    char buf[64];
    for (std::size_t i = 0; i < sweep.betas.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g", sweep.betas[i]);
        f << buf << ",";
        std::snprintf(buf, sizeof(buf), "%.17g", sweep.mean_accuracy[i]);
        f << buf << "\n";
    }
}

std::vector<ShiftRow> shift_report(const ExperimentConfig& cfg) {
    if (cfg.domains.size() < 2) throw ConfigError("shift_report: need at least 2 domains");
    if (cfg.data.kind != DataSpec::Kind::generated) {
        throw ConfigError("shift_report: generated data required");
    }
    cfg.validate();

    const int d = static_cast<int>(cfg.domains.size());
    std::vector<ShiftRow> rows;
    for (const auto seed : cfg.seeds) {
        // one base draw per seed; domains differ only in their transform
        GeneratorSpec base = cfg.data.generator;
        base.transforms.clear();
        base.seed = cfg.data.data_seed.value_or(substream(seed, "data").next_u64());
        auto [train_base, eval_base] = make_shifted_pair(base);

        std::vector<Dataset> train_domains(d), eval_domains(d);
        for (int k = 0; k < d; ++k) {
            Rng noise_train = substream(base.seed, "domain-noise", 2 * k);
            Rng noise_eval = substream(base.seed, "domain-noise", 2 * k + 1);
            train_domains[k] = train_base;
            train_domains[k].x = apply_transform(cfg.domains[k], train_base.x, noise_train);
            train_domains[k].domain_tag = cfg.domain_names[k];
            eval_domains[k] = eval_base;
            eval_domains[k].x = apply_transform(cfg.domains[k], eval_base.x, noise_eval);
            eval_domains[k].domain_tag = cfg.domain_names[k];
        }

        for (int s = 0; s < d; ++s) {
            Ensemble ens = build_ensemble(cfg.ensemble.topology, cfg.ensemble.archs,
                                          train_domains[s].dims(),
                                          substream(seed, "init-root", s).next_u64());
            train_source(ens, train_domains[s], cfg.source_training, seed);
            std::vector<double> accs(d);
            for (int t = 0; t < d; ++t) {
                const EnsemblePrediction pred = predict(ens, eval_domains[t].x);
                accs[t] = accuracy(pred.labels, eval_domains[t].y);
            }
            for (int t = 0; t < d; ++t) {
                if (t == s) continue;
                ShiftRow row;
                row.source = cfg.domain_names[s];
                row.run_seed = seed;
                row.target = cfg.domain_names[t];
                row.ci = ci_difference(accs[s], eval_domains[s].rows(), accs[t],
                                       eval_domains[t].rows());
                rows.push_back(std::move(row));
            }
        }
    }
    return rows;
}

void write_shift_csv(const std::vector<ShiftRow>& rows, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ParseError("cannot open for writing: " + path);
    f << "source,run,target,p_diff,se_diff,lo,hi,overlaps_zero\n";
    char buf[64];
    for (const auto& r : rows) {
        f << r.source << "," << r.run_seed << "," << r.target << ",";
        std::snprintf(buf, sizeof(buf), "%.17g", r.ci.p_diff);
        f << buf << ",";
        std::snprintf(buf, sizeof(buf), "%.17g", r.ci.se_diff);
        f << buf << ",";
        std::snprintf(buf, sizeof(buf), "%.17g", r.ci.lo);
        f << buf << ",";
        std::snprintf(buf, sizeof(buf), "%.17g", r.ci.hi);
        f << buf << ",";
        f << (r.ci.overlaps_zero ? "1" : "0") << "\n";
    }
}

}  // namespace pdiv
