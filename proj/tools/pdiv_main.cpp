// pdiv: desk-scale source-free domain adaptation experiments with
// penalized-diversity ensembles.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "pdiv/errors.hpp"
#include "pdiv/harness.hpp"

namespace fs = std::filesystem;
using namespace pdiv;

namespace {

struct CommonOpts {
    std::string config_path;
    std::string out_override;
    std::string seed_override;
    std::string strategy_override;
};

ExperimentConfig load_with_overrides(const CommonOpts& opts) {
    ExperimentConfig cfg = load_config(opts.config_path);
    if (!opts.out_override.empty()) cfg.out_dir = opts.out_override;
    if (!opts.seed_override.empty()) {
        std::vector<std::uint64_t> seeds;
        std::stringstream ss(opts.seed_override);
        std::string tok;
        while (std::getline(ss, tok, ',')) seeds.push_back(std::stoull(tok));
        cfg.seeds = seeds;
    }
    if (!opts.strategy_override.empty()) {
        cfg.adaptation.anchor_strategy = anchor_strategy_from_string(opts.strategy_override);
    }
    cfg.validate();
    return cfg;
}

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("-c,--config", opts.config_path, "experiment config (JSON)")->required();
    cmd->add_option("-o,--out", opts.out_override, "override output directory");
    cmd->add_option("--seed", opts.seed_override, "override seed list (comma separated)");
}

int report_records(const std::vector<RunRecord>& records) {
    int failures = 0;
    for (const auto& r : records) {
        if (r.status == "ok") {
            std::cout << "seed " << r.seed << " [" << r.strategy << "]"
                      << "  source-only " << r.source_only_accuracy << "  adapted "
                      << r.adapted.accuracy << "  (" << r.wall_time_s << " s)\n";
        } else {
            std::cout << "seed " << r.seed << " FAILED: " << r.error << "\n";
            ++failures;
        }
    }
    return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"penalized-diversity source-free domain adaptation (desk scale)"};
    app.require_subcommand(1);

    CommonOpts run_opts, ablate_opts, sweep_opts, shift_opts, gen_opts;
    std::string betas_arg;
    std::string snapshot_path, data_path, eval_out;

    auto* cmd_gen = app.add_subcommand("gen-data", "generate a source/target CSV pair");
    add_common(cmd_gen, gen_opts);

    auto* cmd_run = app.add_subcommand("run", "full pipeline over the config's seeds");
    add_common(cmd_run, run_opts);
    cmd_run->add_option("--strategy", run_opts.strategy_override,
                        "override anchor strategy (fixed|random|ensemble|whp)");

    auto* cmd_ablate = app.add_subcommand("ablate-anchor", "compare the four anchor strategies");
    add_common(cmd_ablate, ablate_opts);

    auto* cmd_sweep = app.add_subcommand("sweep-beta", "sweep the disparity weight");
    add_common(cmd_sweep, sweep_opts);
    cmd_sweep->add_option("--betas", betas_arg, "comma separated beta values")->required();

    auto* cmd_shift = app.add_subcommand("shift-report", "pairwise domain-shift CI table");
    add_common(cmd_shift, shift_opts);

    auto* cmd_eval = app.add_subcommand("eval", "evaluate a snapshot on a CSV dataset");
    cmd_eval->add_option("-s,--snapshot", snapshot_path, "ensemble snapshot file")->required();
    cmd_eval->add_option("-d,--data", data_path, "labeled CSV dataset")->required();
    cmd_eval->add_option("-o,--out", eval_out, "write the report JSON here as well");

    CLI11_PARSE(app, argc, argv);

    try {
        if (cmd_gen->parsed()) {
            ExperimentConfig cfg = load_with_overrides(gen_opts);
            const std::string out = resolve_out_dir(cfg.out_dir);
            fs::create_directories(out);
            auto [source, target] = materialize_data(cfg.data, cfg.seeds.front());
            save_csv(source, (fs::path(out) / "source.csv").string());
            save_csv(target, (fs::path(out) / "target.csv").string());
            std::cout << "wrote " << out << "/source.csv (" << source.rows() << " rows), " << out
                      << "/target.csv (" << target.rows() << " rows)\n";
            return 0;
        }
        if (cmd_run->parsed()) {
            ExperimentConfig cfg = load_with_overrides(run_opts);
            return report_records(run(cfg));
        }
        if (cmd_ablate->parsed()) {
            ExperimentConfig cfg = load_with_overrides(ablate_opts);
            const AnchorAblation table = ablate_anchor(cfg);
            const std::string out = resolve_out_dir(cfg.out_dir);
            fs::create_directories(out);
            const std::string path = (fs::path(out) / "ablate_anchor.csv").string();
            write_anchor_csv(table, path);
            for (std::size_t i = 0; i < table.strategies.size(); ++i) {
                std::cout << table.strategies[i] << " mean accuracy " << table.mean_accuracy[i]
                          << "\n";
            }
            std::cout << "wrote " << path << "\n";
            return 0;
        }
        if (cmd_sweep->parsed()) {
            ExperimentConfig cfg = load_with_overrides(sweep_opts);
            std::vector<double> betas;
            std::stringstream ss(betas_arg);
            std::string tok;
            while (std::getline(ss, tok, ',')) betas.push_back(std::stod(tok));
            const BetaSweep sweep = sweep_beta(cfg, betas);
            const std::string out = resolve_out_dir(cfg.out_dir);
            fs::create_directories(out);
            const std::string path = (fs::path(out) / "sweep_beta.csv").string();
            write_beta_csv(sweep, path);
            for (std::size_t i = 0; i < sweep.betas.size(); ++i) {
                std::cout << "beta " << sweep.betas[i] << " mean accuracy "
                          << sweep.mean_accuracy[i] << "\n";
            }
            std::cout << "wrote " << path << "\n";
            return 0;
        }
        if (cmd_shift->parsed()) {
            ExperimentConfig cfg = load_with_overrides(shift_opts);
            const auto rows = shift_report(cfg);
            const std::string out = resolve_out_dir(cfg.out_dir);
            fs::create_directories(out);
            const std::string path = (fs::path(out) / "shift_report.csv").string();
            write_shift_csv(rows, path);
            int non_overlap = 0;
            for (const auto& r : rows) non_overlap += r.ci.overlaps_zero ? 0 : 1;
            std::cout << rows.size() << " domain-pair rows, " << non_overlap
                      << " with intervals excluding zero\n";
            std::cout << "wrote " << path << "\n";
            return 0;
        }
        if (cmd_eval->parsed()) {
            const Ensemble ens = load_snapshot(snapshot_path);
            const Dataset data = load_csv(data_path, ens.classes);
            const EnsemblePrediction pred = predict(ens, data.x);
            const EvalReport report = evaluate(pred, data.y, ens.classes);
            std::cout << report.to_json() << "\n";
            if (!eval_out.empty()) {
                std::ofstream f(eval_out, std::ios::binary);
                f << report.to_json() << "\n";
            }
            return 0;
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
