#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "ssag/data_io.hpp"
#include "ssag/problems.hpp"
#include "ssag/schedule.hpp"
#include "ssag/solver.hpp"

namespace ssag {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct RunError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flat key = value experiment description. '#' starts a comment; unknown
// keys are rejected. A fully resolved copy (auto values replaced) is
// written next to the results.
struct ExperimentConfig {
  // problem selection and data
  std::string problem = "synthetic-max";  // drsvm | drpo | synthetic-max
  std::string data_path;                  // LIBSVM file (drsvm); empty -> synthetic dataset
  std::string returns_path;               // returns CSV (drpo); empty -> synthetic returns
  bool csv_has_header = false;
  bool csv_date_column = false;
  int drpo_assets = 0;     // 0 -> all columns
  int drpo_scenarios = 0;  // 0 -> all rows
  double tau = 0.005;
  double eps_hat = 0.1;
  double kappa_hat = 1.0;
  double gamma1 = 0.1;
  double gamma2 = 1.1;
  int synth_samples = 200;
  std::uint64_t synth_seed = 7;
  double train_fraction = 0.0;  // 0 -> train and score on the full set
  std::uint64_t split_seed = 1;

  // solver
  std::string solver = "ssag";  // ssag | subgrad
  double epsilon = 0.01;
  double mu0 = 1.0;
  std::string mode = "diminishing";  // diminishing | fixed
  double fixed_mu = 0.0;             // 0 -> epsilon / (4 kappa)
  int batch_size = 0;                // 0 -> auto (pilot selection)
  double subgrad_c = 0.0;            // 0 -> 5-point pilot grid
  std::string subgrad_rule = "inv_sqrt_k";  // inv_sqrt_k | fixed_step

  // run control
  std::vector<std::uint64_t> seeds;
  std::int64_t max_iters = 0;  // 0 -> from iteration_limit
  std::int64_t max_sfo = 0;    // 0 -> m * N
  double max_seconds = 0.0;    // 0 -> unlimited
  std::string stop_rule = "budget";  // budget | epsilon_gap
  double reference_value = std::numeric_limits<double>::quiet_NaN();  // NaN -> auto
  std::int64_t reference_iters = 10000;
  std::int64_t log_every = 0;
  bool record_time = false;  // measured time breaks byte-reproducibility; opt in
  std::string out_dir = "out";

  // auto-resolution knobs
  double sigma_sq = -1.0;  // < 0 -> estimate
  int sigma_points = 100;
  int sigma_draws = 0;  // 0 -> max(2, ceil(data count / 100))
  double pilot_seconds = 2.0;
  std::int64_t pilot_sfo = 20000;  // > 0 -> deterministic pilot budget; 0 -> time cap
  int pilots_per_candidate = 5;
  std::vector<int> batch_candidates = {1, 10, 100, 1000, 2000, 3000};

  static ExperimentConfig parse(std::istream& in);
  static ExperimentConfig parse_file(const std::string& path);
  void validate() const;
  std::string to_text() const;
};

namespace detail {

inline bool parse_bool(const std::string& v, bool& out) {
  if (v == "true" || v == "1") {
    out = true;
    return true;
  }
  if (v == "false" || v == "0") {
    out = false;
    return true;
  }
  return false;
}

inline std::vector<std::uint64_t> parse_seed_list(const std::string& v) {
  std::vector<std::uint64_t> seeds;
  const std::size_t dots = v.find("..");
  if (dots != std::string::npos) {
    const std::uint64_t a = std::stoull(v.substr(0, dots));
    const std::uint64_t b = std::stoull(v.substr(dots + 2));
    if (b < a) throw ConfigError("seeds: descending range " + v);
    for (std::uint64_t s = a; s <= b; ++s) seeds.push_back(s);
    return seeds;
  }
  std::stringstream ls(v);
  std::string tok;
  while (std::getline(ls, tok, ',')) {
    tok = trim(tok);
    if (!tok.empty()) seeds.push_back(std::stoull(tok));
  }
  return seeds;
}

inline std::string seeds_to_text(const std::vector<std::uint64_t>& seeds) {
  std::ostringstream out;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    if (i) out << ',';
    out << seeds[i];
  }
  return out.str();
}

}  // namespace detail

inline ExperimentConfig ExperimentConfig::parse(std::istream& in) {
  ExperimentConfig cfg;
  std::string line;
  std::size_t line_no = 0;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (!seen.insert(key).second)
      throw ConfigError("config line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    try {
      if (key == "problem") cfg.problem = value;
      else if (key == "data_path") cfg.data_path = value;
      else if (key == "returns_path") cfg.returns_path = value;
      else if (key == "csv_has_header") { if (!detail::parse_bool(value, cfg.csv_has_header)) throw ConfigError("bad bool"); }
      else if (key == "csv_date_column") { if (!detail::parse_bool(value, cfg.csv_date_column)) throw ConfigError("bad bool"); }
      else if (key == "drpo_assets") cfg.drpo_assets = std::stoi(value);
      else if (key == "drpo_scenarios") cfg.drpo_scenarios = std::stoi(value);
      else if (key == "tau") cfg.tau = std::stod(value);
      else if (key == "eps_hat") cfg.eps_hat = std::stod(value);
      else if (key == "kappa_hat") cfg.kappa_hat = std::stod(value);
      else if (key == "gamma1") cfg.gamma1 = std::stod(value);
      else if (key == "gamma2") cfg.gamma2 = std::stod(value);
      else if (key == "synth_samples") cfg.synth_samples = std::stoi(value);
      else if (key == "synth_seed") cfg.synth_seed = std::stoull(value);
      else if (key == "train_fraction") cfg.train_fraction = std::stod(value);
      else if (key == "split_seed") cfg.split_seed = std::stoull(value);
      else if (key == "solver") cfg.solver = value;
      else if (key == "epsilon") cfg.epsilon = std::stod(value);
      else if (key == "mu0") cfg.mu0 = std::stod(value);
      else if (key == "mode") cfg.mode = value;
      else if (key == "fixed_mu") cfg.fixed_mu = std::stod(value);
      else if (key == "batch_size") cfg.batch_size = value == "auto" ? 0 : std::stoi(value);
      else if (key == "subgrad_c") cfg.subgrad_c = std::stod(value);
      else if (key == "subgrad_rule") cfg.subgrad_rule = value;
      else if (key == "seeds") cfg.seeds = detail::parse_seed_list(value);
      else if (key == "max_iters") cfg.max_iters = std::stoll(value);
      else if (key == "max_sfo") cfg.max_sfo = std::stoll(value);
      else if (key == "max_seconds") cfg.max_seconds = std::stod(value);
      else if (key == "stop_rule") cfg.stop_rule = value;
      else if (key == "reference_value") cfg.reference_value = std::stod(value);
      else if (key == "reference_iters") cfg.reference_iters = std::stoll(value);
      else if (key == "log_every") cfg.log_every = std::stoll(value);
      else if (key == "record_time") { if (!detail::parse_bool(value, cfg.record_time)) throw ConfigError("bad bool"); }
      else if (key == "out_dir") cfg.out_dir = value;
      else if (key == "sigma_sq") cfg.sigma_sq = std::stod(value);
      else if (key == "sigma_points") cfg.sigma_points = std::stoi(value);
      else if (key == "sigma_draws") cfg.sigma_draws = std::stoi(value);
      else if (key == "pilot_seconds") cfg.pilot_seconds = std::stod(value);
      else if (key == "pilot_sfo") cfg.pilot_sfo = std::stoll(value);
      else if (key == "pilots_per_candidate") cfg.pilots_per_candidate = std::stoi(value);
      else if (key == "batch_candidates") {
        cfg.batch_candidates.clear();
        std::stringstream vs(value);
        std::string tok;
        while (std::getline(vs, tok, ','))
          if (!detail::trim(tok).empty()) cfg.batch_candidates.push_back(std::stoi(detail::trim(tok)));
      } else {
        throw ConfigError("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
      }
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError("config line " + std::to_string(line_no) + ": bad value for '" + key +
                        "': " + e.what());
    }
  }
  return cfg;
}

inline ExperimentConfig ExperimentConfig::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  return parse(in);
}

inline void ExperimentConfig::validate() const {
  if (problem != "drsvm" && problem != "drpo" && problem != "synthetic-max")
    throw ConfigError("problem must be drsvm, drpo or synthetic-max");
  if (solver != "ssag" && solver != "subgrad") throw ConfigError("solver must be ssag or subgrad");
  if (mode != "diminishing" && mode != "fixed") throw ConfigError("mode must be diminishing or fixed");
  if (subgrad_rule != "inv_sqrt_k" && subgrad_rule != "fixed_step")
    throw ConfigError("subgrad_rule must be inv_sqrt_k or fixed_step");
  if (stop_rule != "budget" && stop_rule != "epsilon_gap")
    throw ConfigError("stop_rule must be budget or epsilon_gap");
  if (seeds.empty()) throw ConfigError("seeds must list at least one seed");
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
  if (!(mu0 > 0.0)) throw ConfigError("mu0 must be positive");
  if (batch_size < 0) throw ConfigError("batch_size must be positive or auto");
  if (batch_size == 0 && batch_candidates.empty())
    throw ConfigError("batch_size auto needs batch_candidates");
  if (max_iters < 0 || max_sfo < 0) throw ConfigError("budgets must be nonnegative");
  if (out_dir.empty()) throw ConfigError("out_dir must be set");
  if (pilots_per_candidate < 1) throw ConfigError("pilots_per_candidate must be >= 1");
  if (train_fraction < 0.0 || train_fraction >= 1.0)
    throw ConfigError("train_fraction must lie in [0, 1)");
}

inline std::string ExperimentConfig::to_text() const {
  std::ostringstream out;
  out << "problem = " << problem << '\n';
  out << "data_path = " << data_path << '\n';
  out << "returns_path = " << returns_path << '\n';
  out << "csv_has_header = " << (csv_has_header ? "true" : "false") << '\n';
  out << "csv_date_column = " << (csv_date_column ? "true" : "false") << '\n';
  out << "drpo_assets = " << drpo_assets << '\n';
  out << "drpo_scenarios = " << drpo_scenarios << '\n';
  out << "tau = " << detail::format_double(tau) << '\n';
  out << "eps_hat = " << detail::format_double(eps_hat) << '\n';
  out << "kappa_hat = " << detail::format_double(kappa_hat) << '\n';
  out << "gamma1 = " << detail::format_double(gamma1) << '\n';
  out << "gamma2 = " << detail::format_double(gamma2) << '\n';
  out << "synth_samples = " << synth_samples << '\n';
  out << "synth_seed = " << synth_seed << '\n';
  out << "train_fraction = " << detail::format_double(train_fraction) << '\n';
  out << "split_seed = " << split_seed << '\n';
  out << "solver = " << solver << '\n';
  out << "epsilon = " << detail::format_double(epsilon) << '\n';
  out << "mu0 = " << detail::format_double(mu0) << '\n';
  out << "mode = " << mode << '\n';
  out << "fixed_mu = " << detail::format_double(fixed_mu) << '\n';
  out << "batch_size = " << batch_size << '\n';
  out << "subgrad_c = " << detail::format_double(subgrad_c) << '\n';
  out << "subgrad_rule = " << subgrad_rule << '\n';
  out << "seeds = " << detail::seeds_to_text(seeds) << '\n';
  out << "max_iters = " << max_iters << '\n';
  out << "max_sfo = " << max_sfo << '\n';
  out << "max_seconds = " << detail::format_double(max_seconds) << '\n';
  out << "stop_rule = " << stop_rule << '\n';
  out << "reference_value = " << detail::format_double(reference_value) << '\n';
  out << "reference_iters = " << reference_iters << '\n';
  out << "log_every = " << log_every << '\n';
  out << "record_time = " << (record_time ? "true" : "false") << '\n';
  out << "out_dir = " << out_dir << '\n';
  out << "sigma_sq = " << detail::format_double(sigma_sq) << '\n';
  out << "sigma_points = " << sigma_points << '\n';
  out << "sigma_draws = " << sigma_draws << '\n';
  out << "pilot_seconds = " << detail::format_double(pilot_seconds) << '\n';
  out << "pilot_sfo = " << pilot_sfo << '\n';
  out << "pilots_per_candidate = " << pilots_per_candidate << '\n';
  out << "batch_candidates = ";
  for (std::size_t i = 0; i < batch_candidates.size(); ++i)
    out << (i ? "," : "") << batch_candidates[i];
  out << '\n';
  return out.str();
}

// A loaded problem plus the bits the resolution steps need.
struct ProblemBundle {
  ProblemInstance problem;
  double kappa = 0.0;
  Index data_count = 1;  // sample count driving the sigma-draw default
  std::string fingerprint;
};

inline ProblemBundle make_problem_bundle(const ExperimentConfig& cfg) {
  ProblemBundle bundle;
  if (cfg.problem == "synthetic-max") {
    bundle.problem = make_synthetic_max_problem(cfg.mu0);
    bundle.data_count = 3;
    bundle.fingerprint = "synthetic-max";
  } else if (cfg.problem == "drsvm") {
    SparseDataset ds;
    if (cfg.data_path.empty()) {
      const auto data = make_separable_dataset(cfg.synth_samples, cfg.synth_seed);
      ds.n_samples = static_cast<int>(data.features.rows());
      ds.n_features = static_cast<int>(data.features.cols());
      for (Index i = 0; i < data.features.rows(); ++i) {
        SparseRow row;
        for (Index j = 0; j < data.features.cols(); ++j) {
          row.idx.push_back(static_cast<int>(j));
          row.val.push_back(data.features(i, j));
        }
        ds.labels.push_back(data.labels[i]);
        ds.rows.push_back(std::move(row));
      }
      bundle.fingerprint = "drsvm|synthetic|" + std::to_string(cfg.synth_samples) + "|" +
                           std::to_string(cfg.synth_seed);
    } else {
      if (!std::filesystem::exists(cfg.data_path))
        throw DataError("drsvm data file not found: " + cfg.data_path);
      ds = load_libsvm(cfg.data_path);
      bundle.fingerprint = "drsvm|" + cfg.data_path;
    }
    // optional held-out split: train on one part, score accuracy on the other
    Matrix features, score_features;
    Vector labels, score_labels;
    if (cfg.train_fraction > 0.0) {
      const auto [train, test] = split_train_test(ds, cfg.train_fraction, cfg.split_seed);
      features = train.to_dense();
      labels = train.labels_vector();
      score_features = test.to_dense();
      score_labels = test.labels_vector();
      bundle.fingerprint += "|split=" + detail::format_double(cfg.train_fraction) + "@" +
                            std::to_string(cfg.split_seed);
    } else {
      features = ds.to_dense();
      labels = ds.labels_vector();
      score_features = features;
      score_labels = labels;
    }
    DrsvmInstance inst;
    inst.z_hat = features.array().colwise() * labels.array();
    inst.tau = cfg.tau;
    inst.eps_hat = cfg.eps_hat;
    inst.kappa_hat = cfg.kappa_hat;
    inst.mu_bar = cfg.mu0;
    bundle.problem = inst.make_problem();
    const Index d = features.cols();
    bundle.problem.accuracy = [score_features, score_labels, d](const Vector& v) {
      return drsvm_accuracy(score_features, score_labels, v.head(d));
    };
    bundle.data_count = features.rows();
    bundle.fingerprint += "|tau=" + detail::format_double(cfg.tau);
  } else if (cfg.problem == "drpo") {
    Matrix returns;
    if (cfg.returns_path.empty()) {
      // synthetic returns around a drifted mean, q scenarios x d assets
      const Index d = cfg.drpo_assets > 0 ? cfg.drpo_assets : 3;
      const Index q = cfg.drpo_scenarios > 0 ? cfg.drpo_scenarios : 50;
      Rng rng(cfg.synth_seed);
      std::normal_distribution<double> normal(0.0, 1.0);
      returns.resize(q, d);
      for (Index i = 0; i < q; ++i)
        for (Index j = 0; j < d; ++j)
          returns(i, j) = 1.0 + 0.001 * static_cast<double>(j + 1) + 0.02 * normal(rng);
      bundle.fingerprint = "drpo|synthetic|" + std::to_string(q) + "x" + std::to_string(d) + "|" +
                           std::to_string(cfg.synth_seed);
    } else {
      if (!std::filesystem::exists(cfg.returns_path))
        throw DataError("drpo returns file not found: " + cfg.returns_path);
      const ReturnsTable table =
          load_returns_csv(cfg.returns_path, cfg.csv_has_header, cfg.csv_date_column);
      returns = table.returns;
      if (cfg.drpo_assets > 0 && cfg.drpo_assets < returns.cols())
        returns = returns.leftCols(cfg.drpo_assets).eval();
      if (cfg.drpo_scenarios > 0 && cfg.drpo_scenarios < returns.rows())
        returns = returns.topRows(cfg.drpo_scenarios).eval();
      bundle.fingerprint = "drpo|" + cfg.returns_path + "|" + std::to_string(returns.rows()) + "x" +
                           std::to_string(returns.cols());
    }
    DrpoInstance inst(std::move(returns), cfg.gamma1, cfg.gamma2, cfg.mu0);
    bundle.data_count = inst.n_scenarios();
    bundle.problem = inst.make_problem();
  } else {
    throw ConfigError("unknown problem " + cfg.problem);
  }
  bundle.kappa = bundle.problem.smoother->params().kappa;
  return bundle;
}

// Random feasible points for the sigma^2 estimate: projected unit Gaussians.
inline std::vector<Vector> sample_feasible_points(const ProblemInstance& prob, int count, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Vector> points;
  points.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    Vector x(prob.feasible.dim());
    for (Index j = 0; j < x.size(); ++j) x[j] = normal(rng);
    points.push_back(prob.feasible.project(x));
  }
  return points;
}

inline double resolve_sigma_sq(const ExperimentConfig& cfg, const ProblemBundle& bundle) {
  if (cfg.sigma_sq >= 0.0) return cfg.sigma_sq;
  Rng rng(0x5157a9u);
  const int draws = cfg.sigma_draws > 0
                        ? cfg.sigma_draws
                        : std::max<int>(2, static_cast<int>((bundle.data_count + 99) / 100));
  const auto points = sample_feasible_points(bundle.problem, cfg.sigma_points, rng);
  return estimate_sigma_sq(*bundle.problem.smoother, points, draws, cfg.mu0, rng);
}

// Batch-size pilot selection: for each candidate, a few short seeded runs
// under the pilot budget; keep the candidate with the lowest mean final
// objective, ties toward the smaller batch.
inline int select_batch_size(const ExperimentConfig& cfg, const ProblemBundle& bundle,
                             const std::vector<int>& candidates, double pilot_seconds,
                             int pilots_per_candidate) {
  if (candidates.empty()) throw ConfigError("select_batch_size: no candidates");
  if (candidates.size() == 1) return candidates.front();
  std::vector<int> order = candidates;
  std::sort(order.begin(), order.end());  // ties then resolve toward smaller m
  double best_mean = std::numeric_limits<double>::infinity();
  int best_m = 0;
  for (const int m : order) {
    if (m < 1) throw ConfigError("select_batch_size: candidate batch sizes must be >= 1");
    double total = 0.0;
    int ok = 0;
    for (int p = 0; p < pilots_per_candidate; ++p) {
      StoppingPolicy stop;
      if (cfg.pilot_sfo > 0)
        stop.max_sfo = cfg.pilot_sfo;
      else
        stop.max_seconds = pilot_seconds;
      SolveOptions opts;
      opts.record_time = false;
      opts.log_every = std::numeric_limits<std::int64_t>::max();  // final point only
      try {
        const auto res = ssag_run(bundle.problem,
                                  bundle.problem.make_schedule(cfg.mu0, m, SmoothingMode::kDiminishing),
                                  stop, 0x9e3779b9u + static_cast<std::uint64_t>(p), opts);
        total += res.record.back().objective;
        ++ok;
      } catch (const std::exception&) {
      }
    }
    if (ok == 0) continue;
    const double mean = total / ok;
    if (mean < best_mean) {
      best_mean = mean;
      best_m = m;
    }
  }
  if (best_m == 0) throw RunError("select_batch_size: all pilot runs failed");
  return best_m;
}

struct SummaryRow {
  std::string solver;
  double epsilon = 0.0;
  int seeds = 0;
  double obj_mean = 0.0;
  double obj_var = 0.0;
  std::optional<double> acc_mean;
  std::optional<double> acc_var;
  std::optional<double> cpu_mean;
  std::int64_t sfo_budget = 0;
  int batch_size = 0;
  std::string mu_policy;
};

struct SummaryTable {
  std::vector<SummaryRow> rows;

  static constexpr const char* kHeader =
      "solver,epsilon,seeds,obj_mean,obj_var,acc_mean,acc_var,cpu_mean,sfo_budget,batch_size,mu_policy";

  std::string to_csv() const {
    std::ostringstream out;
    out << kHeader << '\n';
    for (const auto& r : rows) {
      out << r.solver << ',' << detail::format_double(r.epsilon) << ',' << r.seeds << ','
          << detail::format_double(r.obj_mean) << ',' << detail::format_double(r.obj_var) << ',';
      if (r.acc_mean) out << detail::format_double(*r.acc_mean);
      out << ',';
      if (r.acc_var) out << detail::format_double(*r.acc_var);
      out << ',';
      if (r.cpu_mean) out << detail::format_double(*r.cpu_mean);
      out << ',' << r.sfo_budget << ',' << r.batch_size << ',' << r.mu_policy << '\n';
    }
    return out.str();
  }
};

// Statistics over final logged points of completed runs. Variance is the
// unbiased sample variance (0 for a single seed).
inline SummaryRow summarize_records(const std::vector<RunRecord>& records, const std::string& solver,
                                    double epsilon, std::int64_t sfo_budget, int batch_size,
                                    const std::string& mu_policy) {
  SummaryRow row;
  row.solver = solver;
  row.epsilon = epsilon;
  row.seeds = static_cast<int>(records.size());
  row.sfo_budget = sfo_budget;
  row.batch_size = batch_size;
  row.mu_policy = mu_policy;
  if (records.empty()) return row;
  auto moments = [](const std::vector<double>& xs) {
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double var = 0.0;
    if (xs.size() > 1) {
      for (double x : xs) var += (x - mean) * (x - mean);
      var /= static_cast<double>(xs.size() - 1);
    }
    return std::pair<double, double>{mean, var};
  };
  std::vector<double> objs, accs, cpus;
  for (const auto& rec : records) {
    objs.push_back(rec.back().objective);
    if (rec.back().accuracy) accs.push_back(*rec.back().accuracy);
    if (rec.back().cpu_seconds) cpus.push_back(*rec.back().cpu_seconds);
  }
  std::tie(row.obj_mean, row.obj_var) = moments(objs);
  if (accs.size() == records.size()) {
    const auto [m, v] = moments(accs);
    row.acc_mean = m;
    row.acc_var = v;
  }
  if (cpus.size() == records.size() && !cpus.empty()) row.cpu_mean = moments(cpus).first;
  return row;
}

namespace detail {

inline double tune_subgrad_c(const ExperimentConfig& cfg, const ProblemBundle& bundle,
                             std::int64_t budget_iters) {
  static const double kGrid[] = {0.01, 0.1, 1.0, 10.0, 100.0};
  double best_val = std::numeric_limits<double>::infinity();
  double best_c = 1.0;
  for (const double c : kGrid) {
    StepRule rule;
    rule.kind = cfg.subgrad_rule == "fixed_step" ? StepRule::Kind::kFixed
                                                 : StepRule::Kind::kInvSqrtK;
    rule.c = c;
    rule.batch = std::max(1, cfg.batch_size);
    StoppingPolicy stop;
    stop.max_iters = std::max<std::int64_t>(100, budget_iters);
    SolveOptions opts;
    opts.record_time = false;
    try {
      const auto res = subgrad_run(bundle.problem, rule, stop, 999, opts);
      const double val = bundle.problem.true_objective(res.y);  // best-so-far iterate
      if (val < best_val) {
        best_val = val;
        best_c = c;
      }
    } catch (const std::exception&) {
    }
  }
  return best_c;
}

inline double resolve_reference(const ExperimentConfig& cfg, const ProblemBundle& bundle,
                                double subgrad_c) {
  if (!std::isnan(cfg.reference_value)) return cfg.reference_value;
  // cached per problem/dataset fingerprint next to the results
  const std::filesystem::path cache = std::filesystem::path(cfg.out_dir) / "reference.txt";
  if (std::filesystem::exists(cache)) {
    std::ifstream in(cache);
    std::string fp;
    double value;
    if (std::getline(in, fp) && fp == bundle.fingerprint && (in >> value)) return value;
  }
  StepRule rule;
  rule.kind = StepRule::Kind::kInvSqrtK;
  rule.c = subgrad_c;
  rule.batch = std::max(1, cfg.batch_size);
  StoppingPolicy stop;
  stop.max_iters = cfg.reference_iters;
  SolveOptions opts;
  opts.record_time = false;
  const auto res = subgrad_run(bundle.problem, rule, stop, 424242, opts);
  const double value = bundle.problem.true_objective(res.y);
  std::ofstream out(cache);
  out << bundle.fingerprint << '\n' << format_double(value) << '\n';
  return value;
}

inline int worker_limit() {
  if (const char* env = std::getenv("SSAG_WORKERS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return 1;
}

}  // namespace detail

// Runs every configured seed, writes one RunRecord per seed plus the
// summary and the resolved config, and returns the summary.
inline SummaryTable run_experiment(ExperimentConfig cfg) {
  cfg.validate();
  ProblemBundle bundle = make_problem_bundle(cfg);

  // resolve auto values; the resolved copy lands next to the results
  if (cfg.sigma_sq < 0.0) cfg.sigma_sq = resolve_sigma_sq(cfg, bundle);
  const double sigma = std::sqrt(std::max(0.0, cfg.sigma_sq));
  if (cfg.batch_size == 0)
    cfg.batch_size = select_batch_size(cfg, bundle, cfg.batch_candidates, cfg.pilot_seconds,
                                       cfg.pilots_per_candidate);
  if (cfg.max_iters == 0)
    cfg.max_iters = iteration_limit(cfg.epsilon, bundle.kappa, cfg.mu0, sigma, cfg.batch_size);
  if (cfg.max_sfo == 0) cfg.max_sfo = cfg.batch_size * cfg.max_iters;
  if (cfg.mode == "fixed" && cfg.fixed_mu == 0.0)
    cfg.fixed_mu = cfg.epsilon / (4.0 * std::max(bundle.kappa, 1e-12));
  if (cfg.solver == "subgrad" && cfg.subgrad_c == 0.0)
    cfg.subgrad_c = detail::tune_subgrad_c(cfg, bundle, cfg.max_iters / 5);

  double reference = std::numeric_limits<double>::quiet_NaN();
  std::error_code ec;
  std::filesystem::create_directories(cfg.out_dir, ec);
  if (ec) throw RunError("cannot create output directory " + cfg.out_dir);
  if (cfg.stop_rule == "epsilon_gap") {
    const double c = cfg.subgrad_c > 0.0 ? cfg.subgrad_c
                                         : detail::tune_subgrad_c(cfg, bundle, cfg.max_iters / 5);
    reference = detail::resolve_reference(cfg, bundle, c);
    cfg.reference_value = reference;
  }

  {
    std::ofstream out(std::filesystem::path(cfg.out_dir) / "config_resolved.txt");
    if (!out) throw RunError("cannot write resolved config in " + cfg.out_dir);
    out << cfg.to_text();
  }

  StoppingPolicy stop;
  stop.max_iters = cfg.max_iters;
  if (cfg.max_sfo > 0) stop.max_sfo = cfg.max_sfo;
  if (cfg.max_seconds > 0.0) stop.max_seconds = cfg.max_seconds;
  if (cfg.stop_rule == "epsilon_gap") {
    stop.epsilon_gap = cfg.epsilon;
    stop.reference_value = reference;
  }

  SolveOptions opts;
  opts.log_every = cfg.log_every;
  opts.record_time = cfg.record_time;
  if (!std::isnan(reference)) opts.gap_reference = reference;

  const std::size_t n_seeds = cfg.seeds.size();
  std::vector<RunRecord> records(n_seeds);
  std::vector<std::string> errors(n_seeds);
  auto run_one = [&](std::size_t i) {
    try {
      SolveResult res;
      if (cfg.solver == "ssag") {
        const SmoothingMode mode =
            cfg.mode == "fixed" ? SmoothingMode::kFixed : SmoothingMode::kDiminishing;
        res = ssag_run(bundle.problem,
                       bundle.problem.make_schedule(cfg.mu0, cfg.batch_size, mode, cfg.fixed_mu),
                       stop, cfg.seeds[i], opts);
      } else {
        StepRule rule;
        rule.kind = cfg.subgrad_rule == "fixed_step" ? StepRule::Kind::kFixed
                                                     : StepRule::Kind::kInvSqrtK;
        rule.c = cfg.subgrad_c;
        rule.batch = cfg.batch_size;
        res = subgrad_run(bundle.problem, rule, stop, cfg.seeds[i], opts);
      }
      records[i] = std::move(res.record);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  };

  const int workers = std::min<int>(detail::worker_limit(), static_cast<int>(n_seeds));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n_seeds; ++i) run_one(i);
  } else {
    std::vector<std::thread> pool;
    std::atomic<std::size_t> next{0};
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < n_seeds; i = next.fetch_add(1)) run_one(i);
      });
    for (auto& t : pool) t.join();
  }

  std::vector<RunRecord> completed;
  std::string first_error;
  for (std::size_t i = 0; i < n_seeds; ++i) {
    if (!errors[i].empty()) {
      if (first_error.empty()) first_error = errors[i];
      continue;
    }
    std::ostringstream name;
    name << "run_" << cfg.solver << "_seed" << cfg.seeds[i] << ".csv";
    write_run_record(records[i], (std::filesystem::path(cfg.out_dir) / name.str()).string());
    completed.push_back(records[i]);
  }

  SummaryTable table;
  const std::string mu_policy = cfg.solver != "ssag" ? "none"
                                : cfg.mode == "fixed"
                                    ? "fixed(" + detail::format_double(cfg.fixed_mu) + ")"
                                    : "diminishing(mu0=" + detail::format_double(cfg.mu0) + ")";
  table.rows.push_back(summarize_records(completed, cfg.solver, cfg.epsilon, cfg.max_sfo,
                                         cfg.batch_size, mu_policy));
  {
    std::ofstream out(std::filesystem::path(cfg.out_dir) / "summary.csv");
    if (!out) throw RunError("cannot write summary in " + cfg.out_dir);
    out << table.to_csv();
  }
  if (!first_error.empty())
    throw RunError("run failure (partial outputs in " + cfg.out_dir + "): " + first_error);
  return table;
}

enum class PlotMode { kObjVsTime, kObjVsSfo, kAccVsTime };

inline PlotMode parse_plot_mode(const std::string& s) {
  if (s == "obj_vs_time") return PlotMode::kObjVsTime;
  if (s == "obj_vs_sfo") return PlotMode::kObjVsSfo;
  if (s == "acc_vs_time") return PlotMode::kAccVsTime;
  throw ConfigError("plot mode must be obj_vs_time, obj_vs_sfo or acc_vs_time");
}

// Seed-averaged curve on the union grid of the records' stamps, with
// min/max envelope columns. Objective curves are best-so-far; accuracy
// curves carry the last observed value forward.
inline void emit_plot_data(const std::vector<RunRecord>& records, PlotMode mode, std::ostream& out) {
  if (records.empty()) throw ConfigError("emit_plot_data: no records");
  const bool needs_time = mode != PlotMode::kObjVsSfo;
  const bool needs_acc = mode == PlotMode::kAccVsTime;
  for (const auto& rec : records) {
    if (rec.empty()) throw ConfigError("emit_plot_data: empty record");
    for (const auto& p : rec.points) {
      if (needs_time && !p.cpu_seconds)
        throw ConfigError("emit_plot_data: record lacks time stamps");
      if (needs_acc && !p.accuracy)
        throw ConfigError("emit_plot_data: incompatible records (no accuracy column)");
    }
  }
  const bool acc_mismatch = [&] {
    const bool first = static_cast<bool>(records.front().points.front().accuracy);
    for (const auto& rec : records)
      if (static_cast<bool>(rec.points.front().accuracy) != first) return true;
    return false;
  }();
  if (acc_mismatch) throw ConfigError("emit_plot_data: incompatible records (mixed schemas)");

  auto axis_of = [&](const RunPoint& p) {
    return needs_time ? *p.cpu_seconds : static_cast<double>(p.sfo_calls);
  };
  std::set<double> grid_set;
  for (const auto& rec : records)
    for (const auto& p : rec.points) grid_set.insert(axis_of(p));
  const std::vector<double> grid(grid_set.begin(), grid_set.end());

  auto value_of = [&](const RunPoint& p) { return needs_acc ? *p.accuracy : p.objective; };

  std::vector<std::vector<double>> curves;
  for (const auto& rec : records) {
    std::vector<double> curve;
    curve.reserve(grid.size());
    std::size_t j = 0;
    double current = value_of(rec.points.front());
    double best = current;
    for (const double g : grid) {
      while (j < rec.points.size() && axis_of(rec.points[j]) <= g) {
        current = value_of(rec.points[j]);
        best = std::min(best, current);
        ++j;
      }
      curve.push_back(needs_acc ? current : best);
    }
    curves.push_back(std::move(curve));
  }

  out << (needs_time ? "cpu_seconds" : "sfo_calls") << ','
      << (needs_acc ? "accuracy_mean,accuracy_min,accuracy_max"
                    : "objective_mean,objective_min,objective_max")
      << '\n';
  for (std::size_t gi = 0; gi < grid.size(); ++gi) {
    double mean = 0.0, lo = curves[0][gi], hi = curves[0][gi];
    for (const auto& c : curves) {
      mean += c[gi];
      lo = std::min(lo, c[gi]);
      hi = std::max(hi, c[gi]);
    }
    mean /= static_cast<double>(curves.size());
    out << detail::format_double(grid[gi]) << ',' << detail::format_double(mean) << ','
        << detail::format_double(lo) << ',' << detail::format_double(hi) << '\n';
  }
}

}  // namespace ssag
