#include <catch_amalgamated.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ssag/harness.hpp"

using namespace ssag;

namespace {

std::filesystem::path temp_dir(const std::string& tag) {
  const auto dir = std::filesystem::temp_directory_path() / ("ssag_harness_" + tag);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

ExperimentConfig small_synthetic_config(const std::string& out_dir) {
  ExperimentConfig cfg;
  cfg.problem = "synthetic-max";
  cfg.solver = "ssag";
  cfg.epsilon = 0.05;
  cfg.batch_size = 1;
  cfg.seeds = {0, 1, 2};
  cfg.max_iters = 300;
  cfg.sigma_sq = 1.0;
  cfg.log_every = 50;
  cfg.record_time = false;
  cfg.out_dir = out_dir;
  return cfg;
}

}  // namespace

TEST_CASE("config parsing accepts the documented grammar") {
  std::istringstream in(
      "# comment\n"
      "problem = synthetic-max\n"
      "epsilon = 0.02\n"
      "seeds = 3..5\n"
      "batch_size = auto\n"
      "batch_candidates = 1, 4,16\n"
      "record_time = false\n");
  const auto cfg = ExperimentConfig::parse(in);
  REQUIRE(cfg.problem == "synthetic-max");
  REQUIRE(cfg.epsilon == 0.02);
  REQUIRE(cfg.seeds == std::vector<std::uint64_t>{3, 4, 5});
  REQUIRE(cfg.batch_size == 0);
  REQUIRE(cfg.batch_candidates == std::vector<int>{1, 4, 16});
  REQUIRE_FALSE(cfg.record_time);
}

TEST_CASE("config parsing rejects unknown keys and bad values") {
  std::istringstream unknown("problem = drsvm\nnot_a_key = 1\n");
  REQUIRE_THROWS_WITH(ExperimentConfig::parse(unknown),
                      Catch::Matchers::ContainsSubstring("unknown key"));
  std::istringstream dup("epsilon = 1\nepsilon = 2\n");
  REQUIRE_THROWS_WITH(ExperimentConfig::parse(dup),
                      Catch::Matchers::ContainsSubstring("duplicate"));
  std::istringstream bad("epsilon = fast\n");
  REQUIRE_THROWS_AS(ExperimentConfig::parse(bad), ConfigError);
}

TEST_CASE("config validation catches empty seed lists") {
  ExperimentConfig cfg;
  cfg.seeds.clear();
  REQUIRE_THROWS_WITH(cfg.validate(), Catch::Matchers::ContainsSubstring("seeds"));
  cfg.seeds = {1};
  cfg.solver = "gradient-descent";
  REQUIRE_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("config round trips through its text form") {
  ExperimentConfig cfg = small_synthetic_config("somewhere");
  cfg.batch_candidates = {1, 16};
  std::istringstream in(cfg.to_text());
  const auto back = ExperimentConfig::parse(in);
  REQUIRE(back.to_text() == cfg.to_text());
}

TEST_CASE("drsvm train/test split hook scores accuracy on the held-out part") {
  ExperimentConfig cfg;
  cfg.problem = "drsvm";
  cfg.seeds = {0};
  cfg.synth_samples = 120;
  cfg.train_fraction = 0.5;
  cfg.split_seed = 3;
  const auto bundle = make_problem_bundle(cfg);
  REQUIRE(bundle.data_count == 60);  // training half only
  REQUIRE(bundle.fingerprint.find("split=0.5") != std::string::npos);
  // a direction separating the generator's classes scores the held-out half
  Vector w(3);
  w << 1.0, 0.7, 0.0;
  REQUIRE(bundle.problem.accuracy(w) == 1.0);

  cfg.train_fraction = 1.0;
  REQUIRE_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("time budgets are honored within one iteration") {
  ExperimentConfig cfg = small_synthetic_config("unused");
  const auto bundle = make_problem_bundle(cfg);
  StoppingPolicy stop;
  stop.max_seconds = 0.05;
  SolveOptions opts;
  opts.record_time = false;
  const auto start = std::chrono::steady_clock::now();
  const auto res = ssag_run(bundle.problem,
                            bundle.problem.make_schedule(1.0, 1, SmoothingMode::kDiminishing),
                            stop, 0, opts);
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  REQUIRE(res.stop_reason == "max_time");
  REQUIRE(elapsed < 0.5);  // one synthetic-max iteration is microseconds
}

TEST_CASE("missing data files raise data errors") {
  ExperimentConfig cfg;
  cfg.problem = "drsvm";
  cfg.data_path = "/nonexistent/a8a.libsvm";
  cfg.seeds = {0};
  REQUIRE_THROWS_AS(make_problem_bundle(cfg), DataError);

  cfg.problem = "drpo";
  cfg.data_path.clear();
  cfg.returns_path = "/nonexistent/returns.csv";
  REQUIRE_THROWS_AS(make_problem_bundle(cfg), DataError);
}

TEST_CASE("run_experiment writes records, summary and resolved config") {
  const auto dir = temp_dir("run");
  auto cfg = small_synthetic_config(dir.string());
  const auto table = run_experiment(cfg);
  REQUIRE(table.rows.size() == 1);
  REQUIRE(table.rows[0].seeds == 3);
  REQUIRE(table.rows[0].obj_mean > 0.4);
  REQUIRE(std::filesystem::exists(dir / "run_ssag_seed0.csv"));
  REQUIRE(std::filesystem::exists(dir / "run_ssag_seed1.csv"));
  REQUIRE(std::filesystem::exists(dir / "run_ssag_seed2.csv"));
  REQUIRE(std::filesystem::exists(dir / "summary.csv"));
  REQUIRE(std::filesystem::exists(dir / "config_resolved.txt"));

  // the resolved copy parses and carries the resolved budget
  const auto resolved = ExperimentConfig::parse_file((dir / "config_resolved.txt").string());
  REQUIRE(resolved.max_iters == 300);
  REQUIRE(resolved.max_sfo == 300);
  REQUIRE(resolved.batch_size == 1);

  // summary statistics equal an independent recomputation from the records
  std::vector<RunRecord> records;
  for (int s = 0; s < 3; ++s)
    records.push_back(read_run_record((dir / ("run_ssag_seed" + std::to_string(s) + ".csv")).string()));
  double mean = 0.0;
  for (const auto& r : records) mean += r.back().objective;
  mean /= 3.0;
  double var = 0.0;
  for (const auto& r : records) var += (r.back().objective - mean) * (r.back().objective - mean);
  var /= 2.0;
  REQUIRE(table.rows[0].obj_mean == Catch::Approx(mean).epsilon(1e-15));
  REQUIRE(table.rows[0].obj_var == Catch::Approx(var).epsilon(1e-12));
  std::filesystem::remove_all(dir);
}

TEST_CASE("rerunning an identical experiment is byte-identical") {
  const auto dir_a = temp_dir("repro_a");
  const auto dir_b = temp_dir("repro_b");
  auto cfg = small_synthetic_config(dir_a.string());
  run_experiment(cfg);
  cfg.out_dir = dir_b.string();
  run_experiment(cfg);
  for (const auto& name :
       {"run_ssag_seed0.csv", "run_ssag_seed1.csv", "run_ssag_seed2.csv", "summary.csv"}) {
    REQUIRE(slurp(dir_a / name) == slurp(dir_b / name));
  }
  std::filesystem::remove_all(dir_a);
  std::filesystem::remove_all(dir_b);
}

TEST_CASE("subgrad solver path produces records through the harness") {
  const auto dir = temp_dir("subgrad");
  auto cfg = small_synthetic_config(dir.string());
  cfg.solver = "subgrad";
  cfg.subgrad_c = 0.5;
  const auto table = run_experiment(cfg);
  REQUIRE(table.rows[0].solver == "subgrad");
  REQUIRE(std::filesystem::exists(dir / "run_subgrad_seed0.csv"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("auto-resolved experiment meets its accuracy target") {
  // sigma^2, N and the SFO budget all resolve from the config
  const auto dir = temp_dir("auto");
  ExperimentConfig cfg;
  cfg.problem = "synthetic-max";
  cfg.solver = "ssag";
  cfg.epsilon = 0.05;
  cfg.batch_size = 1;
  cfg.seeds.clear();
  for (std::uint64_t s = 0; s < 20; ++s) cfg.seeds.push_back(s);
  cfg.record_time = false;
  cfg.out_dir = dir.string();
  const auto table = run_experiment(cfg);
  REQUIRE(table.rows[0].obj_mean - 0.5 <= cfg.epsilon);  // grid optimum is 0.5

  const auto resolved = ExperimentConfig::parse_file((dir / "config_resolved.txt").string());
  REQUIRE(resolved.sigma_sq > 0.0);
  REQUIRE(resolved.max_iters > 0);
  REQUIRE(resolved.max_sfo == resolved.max_iters * resolved.batch_size);
  std::filesystem::remove_all(dir);
}

TEST_CASE("batch selection reports total pilot failure") {
  ExperimentConfig cfg = small_synthetic_config("unused");
  ProblemBundle broken = make_problem_bundle(cfg);
  broken.problem.start = Vector::Constant(2, 5.0);  // infeasible: every pilot throws
  REQUIRE_THROWS_AS(select_batch_size(cfg, broken, {1, 2}, 0.1, 2), RunError);
}

TEST_CASE("batch selection fast path and tie rule") {
  ExperimentConfig cfg = small_synthetic_config("unused");
  const auto bundle = make_problem_bundle(cfg);

  // single candidate returns without pilots
  REQUIRE(select_batch_size(cfg, bundle, {7}, 10.0, 5) == 7);

  // deterministic problem, generous pilot budget: every candidate converges
  // to the same objective, so the tie resolves to the smallest m
  ExperimentConfig det = cfg;
  det.pilot_sfo = 6000;
  ProblemBundle exact = bundle;
  exact.problem.smoother = std::make_shared<ExactGradientOracle>(bundle.problem.smoother);
  REQUIRE(select_batch_size(det, exact, {2, 1, 3}, 10.0, 2) == 1);
}

TEST_CASE("batch selection favors larger batches when the value pass dominates") {
  // wide random max: every draw shares the q-component value pass, so at a
  // fixed time cap larger batches harvest far more draws per second and
  // settle at a lower noise floor
  ExperimentConfig cfg;
  cfg.problem = "synthetic-max";
  cfg.seeds = {0};
  cfg.mu0 = 1.0;
  cfg.pilot_sfo = 0;  // time-capped pilots
  ProblemBundle bundle;
  bundle.problem = make_random_max_problem(20, 2000, 77);
  bundle.kappa = bundle.problem.smoother->params().kappa;
  int larger = 0;
  const int reps = 20;
  for (int r = 0; r < reps; ++r) {
    const int m = select_batch_size(cfg, bundle, {1, 64}, 0.012, 3);
    if (m == 64) ++larger;
  }
  REQUIRE(larger >= reps * 8 / 10);
}

TEST_CASE("plot data emission") {
  RunRecord a, b;
  a.points.push_back({1, 10, 0.1, 1.0, std::nullopt, 0.5});
  a.points.push_back({2, 20, 0.2, 0.8, std::nullopt, 0.75});
  a.points.push_back({3, 30, 0.3, 0.9, std::nullopt, 1.0});
  b.points.push_back({1, 15, 0.15, 0.6, std::nullopt, 0.5});
  b.points.push_back({2, 25, 0.25, 0.5, std::nullopt, 0.5});

  SECTION("single record equals its own best-so-far curve") {
    std::ostringstream out;
    emit_plot_data({a}, PlotMode::kObjVsSfo, out);
    REQUIRE(out.str() ==
            "sfo_calls,objective_mean,objective_min,objective_max\n"
            "10,1,1,1\n20,0.80000000000000004,0.80000000000000004,0.80000000000000004\n"
            "30,0.80000000000000004,0.80000000000000004,0.80000000000000004\n");
  }

  SECTION("two identical records have zero envelope width") {
    std::ostringstream out;
    emit_plot_data({a, a}, PlotMode::kObjVsTime, out);
    std::istringstream in(out.str());
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
      std::stringstream ls(line);
      std::string grid, mean, lo, hi;
      std::getline(ls, grid, ',');
      std::getline(ls, mean, ',');
      std::getline(ls, lo, ',');
      std::getline(ls, hi, ',');
      REQUIRE(lo == hi);
      REQUIRE(mean == lo);
    }
  }

  SECTION("multi-record objective column is monotone nonincreasing") {
    std::ostringstream out;
    emit_plot_data({a, b}, PlotMode::kObjVsSfo, out);
    std::istringstream in(out.str());
    std::string line;
    std::getline(in, line);
    double prev = 1e300;
    while (std::getline(in, line)) {
      std::stringstream ls(line);
      std::string grid, mean;
      std::getline(ls, grid, ',');
      std::getline(ls, mean, ',');
      const double v = std::stod(mean);
      REQUIRE(v <= prev + 1e-15);
      prev = v;
    }
  }

  SECTION("accuracy mode carries forward the last observed value") {
    std::ostringstream out;
    emit_plot_data({a}, PlotMode::kAccVsTime, out);
    REQUIRE(out.str() ==
            "cpu_seconds,accuracy_mean,accuracy_min,accuracy_max\n"
            "0.10000000000000001,0.5,0.5,0.5\n0.20000000000000001,0.75,0.75,0.75\n"
            "0.29999999999999999,1,1,1\n");
  }

  SECTION("records without the needed columns are rejected") {
    RunRecord no_time;
    no_time.points.push_back({1, 10, std::nullopt, 1.0, std::nullopt, std::nullopt});
    std::ostringstream out;
    REQUIRE_THROWS_AS(emit_plot_data({no_time}, PlotMode::kObjVsTime, out), ConfigError);
    REQUIRE_THROWS_AS(emit_plot_data({no_time}, PlotMode::kAccVsTime, out), ConfigError);
    REQUIRE_THROWS_AS(emit_plot_data({}, PlotMode::kObjVsSfo, out), ConfigError);
  }
}
