// Experiment driver for the stochastic smoothing accelerated gradient
// toolkit: single runs, batch-size pilots, noise estimation, multi-seed
// benchmarks, and plot-ready CSV emission.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "ssag/harness.hpp"

namespace {

constexpr int kExitRunFailure = 1;
constexpr int kExitConfigError = 2;
constexpr int kExitDataError = 3;

struct CommonFlags {
  std::string config_path;
  std::string out_dir;
  std::string seeds;
  std::int64_t seed = -1;
  double budget_time = 0.0;
  std::int64_t budget_sfo = 0;
  double epsilon = 0.0;
};

void add_common(CLI::App* cmd, CommonFlags& flags, bool config_required = true) {
  auto* opt = cmd->add_option("--config", flags.config_path, "experiment config file");
  if (config_required) opt->required();
  cmd->add_option("--out", flags.out_dir, "output directory (overrides config)");
  cmd->add_option("--seed", flags.seed, "single seed (overrides config)");
  cmd->add_option("--seeds", flags.seeds, "seed list A,B,... or range A..B (overrides config)");
  cmd->add_option("--budget-time", flags.budget_time, "wall-clock budget per run, seconds");
  cmd->add_option("--budget-sfo", flags.budget_sfo, "stochastic-oracle call budget per run");
  cmd->add_option("--epsilon", flags.epsilon, "target accuracy (overrides config)");
}

ssag::ExperimentConfig load_config(const CommonFlags& flags) {
  ssag::ExperimentConfig cfg = ssag::ExperimentConfig::parse_file(flags.config_path);
  if (!flags.out_dir.empty()) cfg.out_dir = flags.out_dir;
  if (flags.seed >= 0) cfg.seeds = {static_cast<std::uint64_t>(flags.seed)};
  if (!flags.seeds.empty()) cfg.seeds = ssag::detail::parse_seed_list(flags.seeds);
  if (flags.budget_time > 0.0) cfg.max_seconds = flags.budget_time;
  if (flags.budget_sfo > 0) cfg.max_sfo = flags.budget_sfo;
  if (flags.epsilon > 0.0) cfg.epsilon = flags.epsilon;
  return cfg;
}

int run_guarded(const std::function<int()>& body) {
  try {
    return body();
  } catch (const ssag::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfigError;
  } catch (const ssag::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitDataError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRunFailure;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stochastic smoothing accelerated gradient toolkit"};
  app.require_subcommand(1);

  CommonFlags solve_flags, bench_flags, select_flags, sigma_flags, plot_flags;
  std::string plot_mode = "obj_vs_sfo";
  std::vector<std::string> plot_inputs;
  std::string plot_output;

  CLI::App* solve = app.add_subcommand("solve", "run one seeded optimization");
  add_common(solve, solve_flags);

  CLI::App* select = app.add_subcommand("select-batch", "pilot-select the batch size");
  add_common(select, select_flags);

  CLI::App* sigma = app.add_subcommand("estimate-sigma", "estimate the gradient noise level");
  add_common(sigma, sigma_flags);

  CLI::App* bench = app.add_subcommand("bench", "run all seeds and summarize");
  add_common(bench, bench_flags);

  CLI::App* plot = app.add_subcommand("plot-data", "emit seed-averaged curves as CSV");
  add_common(plot, plot_flags, /*config_required=*/false);
  plot->add_option("--mode", plot_mode, "obj_vs_time | obj_vs_sfo | acc_vs_time");
  plot->add_option("records", plot_inputs, "run record CSV files (default: scan --out)");
  plot->add_option("--output", plot_output, "write curve CSV here instead of stdout");

  CLI11_PARSE(app, argc, argv);

  if (solve->parsed()) {
    return run_guarded([&] {
      ssag::ExperimentConfig cfg = load_config(solve_flags);
      if (cfg.seeds.size() > 1) cfg.seeds.resize(1);
      const auto table = ssag::run_experiment(cfg);
      const auto& row = table.rows.front();
      std::cout << "solver=" << row.solver << " seed=" << cfg.seeds.front()
                << " objective=" << ssag::detail::format_double(row.obj_mean);
      if (row.acc_mean) std::cout << " accuracy=" << ssag::detail::format_double(*row.acc_mean);
      std::cout << " records=" << cfg.out_dir << '\n';
      return 0;
    });
  }

  if (select->parsed()) {
    return run_guarded([&] {
      ssag::ExperimentConfig cfg = load_config(select_flags);
      cfg.validate();
      const auto bundle = ssag::make_problem_bundle(cfg);
      const int m = ssag::select_batch_size(cfg, bundle, cfg.batch_candidates, cfg.pilot_seconds,
                                            cfg.pilots_per_candidate);
      std::cout << m << '\n';
      return 0;
    });
  }

  if (sigma->parsed()) {
    return run_guarded([&] {
      ssag::ExperimentConfig cfg = load_config(sigma_flags);
      cfg.validate();
      const auto bundle = ssag::make_problem_bundle(cfg);
      std::cout << ssag::detail::format_double(ssag::resolve_sigma_sq(cfg, bundle)) << '\n';
      return 0;
    });
  }

  if (bench->parsed()) {
    return run_guarded([&] {
      ssag::ExperimentConfig cfg = load_config(bench_flags);
      const auto table = ssag::run_experiment(cfg);
      std::cout << table.to_csv();
      return 0;
    });
  }

  if (plot->parsed()) {
    return run_guarded([&] {
      std::vector<std::string> paths = plot_inputs;
      if (paths.empty()) {
        if (plot_flags.out_dir.empty())
          throw ssag::ConfigError("plot-data needs record paths or --out to scan");
        for (const auto& entry : std::filesystem::directory_iterator(plot_flags.out_dir)) {
          const std::string name = entry.path().filename().string();
          if (name.rfind("run_", 0) == 0 && entry.path().extension() == ".csv")
            paths.push_back(entry.path().string());
        }
        std::sort(paths.begin(), paths.end());
      }
      if (paths.empty()) throw ssag::ConfigError("plot-data found no run records");
      std::vector<ssag::RunRecord> records;
      for (const auto& p : paths) {
        if (!std::filesystem::exists(p)) throw ssag::DataError("record not found: " + p);
        records.push_back(ssag::read_run_record(p));
      }
      const ssag::PlotMode mode = ssag::parse_plot_mode(plot_mode);
      if (!plot_output.empty()) {
        std::ofstream out(plot_output);
        if (!out) throw ssag::RunError("cannot open " + plot_output);
        ssag::emit_plot_data(records, mode, out);
      } else {
        ssag::emit_plot_data(records, mode, std::cout);
      }
      return 0;
    });
  }

  return kExitConfigError;
}
