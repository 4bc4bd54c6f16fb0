#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>

#include "ssag/projections.hpp"
#include "ssag/run_record.hpp"
#include "ssag/schedule.hpp"
#include "ssag/smoothing.hpp"
#include "ssag/types.hpp"

namespace ssag {

// Smooth component f of the composite objective psi = f + h.
struct SmoothPart {
  std::function<double(const Vector&)> value;
  std::function<Vector(const Vector&)> grad;
  double lipschitz = 0.0;  // L_f
};

// A solvable instance: feasible set, smooth part, smoothed nonsmooth part,
// and whatever the true-objective and baseline paths need.
struct ProblemInstance {
  FeasibleSet feasible = FeasibleSet::full_space(1);
  SmoothPart smooth;
  std::shared_ptr<const SmoothedOracle> smoother;
  Vector start;

  // Subgradient access for the baseline method. A null stochastic callable
  // makes the baseline fall back to the full subgradient.
  std::function<Vector(const Vector&, Rng&)> psi_stoch_subgrad;
  std::function<Vector(const Vector&)> psi_subgrad;
  std::int64_t full_subgrad_cost = 1;  // SFO calls charged per full subgradient

  // Optional classification metric evaluated at logged iterates.
  std::function<double(const Vector&)> accuracy;

  double f_value(const Vector& x) const { return smooth.value ? smooth.value(x) : 0.0; }

  Vector f_grad(const Vector& x) const {
    return smooth.grad ? smooth.grad(x) : Vector(Vector::Zero(x.size()));
  }

  double true_objective(const Vector& x) const {
    return f_value(x) + smoother->nonsmooth_value(x);
  }

  double smoothed_objective(const Vector& x, double mu) const {
    return f_value(x) + smoother->value(x, mu);
  }

  // Composite smoothness constant L_mu = L_f + K + L_h / mu enters the
  // schedule through these two pieces.
  double schedule_l_const() const { return smooth.lipschitz + smoother->params().k_const; }
  double schedule_l_scaled() const { return smoother->params().l_h; }

  ScheduleState make_schedule(double mu0, int m, SmoothingMode mode, double fixed_mu = 0.0) const {
    return ScheduleState::initial(mu0, m, mode, schedule_l_const(), schedule_l_scaled(), fixed_mu);
  }
};

struct StoppingPolicy {
  std::optional<std::int64_t> max_iters;
  std::optional<std::int64_t> max_sfo;
  std::optional<double> max_seconds;
  std::optional<double> epsilon_gap;      // stop once objective - reference <= epsilon_gap
  std::optional<double> reference_value;  // psi at the reference point

  void validate() const {
    if (!max_iters && !max_sfo && !max_seconds && !epsilon_gap)
      throw std::invalid_argument("StoppingPolicy: at least one criterion must be set");
    if (epsilon_gap && !reference_value)
      throw std::invalid_argument("StoppingPolicy: epsilon_gap needs a reference value");
  }
};

struct SolveOptions {
  std::int64_t log_every = 0;  // 0 -> max(1, expected iterations / 200)
  bool record_time = true;
  std::optional<double> gap_reference;  // fills the gap column when set
  // Test hook, called at every logged iteration.
  std::function<void(std::int64_t k, const Vector& x, const Vector& y, const Vector& z)> on_log;
};

struct SolveResult {
  Vector y;
  RunRecord record;
  std::int64_t iterations = 0;
  std::int64_t sfo_calls = 0;
  std::string stop_reason;
};

namespace detail {

inline double process_cpu_seconds() {
#if defined(CLOCK_PROCESS_CPUTIME_ID)
  timespec ts{};
  if (clock_gettime(CLOCK_PROCESS_CPUTIME_ID, &ts) == 0)
    return static_cast<double>(ts.tv_sec) + 1e-9 * static_cast<double>(ts.tv_nsec);
#endif
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

class RunClock {
 public:
  RunClock() : wall_start_(std::chrono::steady_clock::now()), cpu_start_(process_cpu_seconds()) {}
  double wall() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start_).count();
  }
  double cpu() const { return process_cpu_seconds() - cpu_start_; }

 private:
  std::chrono::steady_clock::time_point wall_start_;
  double cpu_start_;
};

inline std::int64_t resolve_cadence(const SolveOptions& opts, const StoppingPolicy& stop, int m) {
  if (opts.log_every > 0) return opts.log_every;
  if (stop.max_iters) return std::max<std::int64_t>(1, *stop.max_iters / 200);
  if (stop.max_sfo) return std::max<std::int64_t>(1, *stop.max_sfo / m / 200);
  return 100;
}

}  // namespace detail

// Stochastic smoothing accelerated gradient method. Per iteration k:
//   x_k = alpha_{k-1} z_{k-1} + (1 - alpha_{k-1}) y_{k-1}
//   g   = grad f(x_k) + mean of m stochastic smoothed-gradient draws at mu_k
//   y_k = Proj_X(x_k - g / beta_k)
//   z_k = Proj_X(z_{k-1} - g / theta_k)
// The projected steps are the closed forms of the quadratic argmins over X.
inline SolveResult ssag_run(const ProblemInstance& prob, ScheduleState schedule,
                            const StoppingPolicy& stop, std::uint64_t seed,
                            const SolveOptions& opts = {}) {
  stop.validate();
  if (!prob.smoother) throw std::invalid_argument("ssag_run: problem has no smoother");
  if (!prob.feasible.contains(prob.start, 1e-9))
    throw std::invalid_argument("ssag_run: start point is infeasible");

  Rng rng(seed);
  Vector y = prob.start;
  Vector z = prob.start;
  const int m = schedule.batch_size();
  const std::int64_t cadence = detail::resolve_cadence(opts, stop, m);

  SolveResult result;
  result.y = y;
  detail::RunClock clock;
  std::int64_t sfo = 0;
  std::int64_t logged_iter = -1;

  auto log_point = [&](std::int64_t k, const Vector& x) {
    RunPoint pt;
    pt.iter = k;
    pt.sfo_calls = sfo;
    if (opts.record_time) pt.cpu_seconds = clock.cpu();
    pt.objective = prob.true_objective(y);
    if (opts.gap_reference) pt.gap = pt.objective - *opts.gap_reference;
    if (prob.accuracy) pt.accuracy = prob.accuracy(y);
    result.record.points.push_back(pt);
    logged_iter = k;
    if (opts.on_log) opts.on_log(k, x, y, z);
    return pt.objective;
  };

  std::string reason;
  std::int64_t k = 0;
  while (true) {
    if (stop.max_iters && k >= *stop.max_iters) {
      reason = "max_iters";
      break;
    }
    ++k;
    const double mu = schedule.mu();
    const double beta = schedule.beta();
    const double theta = schedule.theta();
    // the supplied schedule must majorize the problem's own smoothness
    const double l_mu = prob.schedule_l_const() +
                        (prob.schedule_l_scaled() > 0.0 ? prob.schedule_l_scaled() / mu : 0.0);
    if (beta <= l_mu) {
      std::ostringstream msg;
      msg << "ssag_run: schedule violation at k=" << k << " (beta=" << beta << " <= L_mu=" << l_mu
          << ", mu=" << mu << ")";
      throw std::runtime_error(msg.str());
    }

    const Vector x = schedule.alpha_prev() * z + (1.0 - schedule.alpha_prev()) * y;
    Vector g = minibatch_grad(*prob.smoother, x, mu, m, rng);
    if (prob.smooth.grad) g += prob.smooth.grad(x);
    sfo += m;

    y = prob.feasible.project(x - g / beta);
    z = prob.feasible.project(z - g / theta);
    schedule.advance();

    const bool final_by_iters = stop.max_iters && k >= *stop.max_iters;
    if (k % cadence == 0 || final_by_iters) {
      const double obj = log_point(k, x);
      if (stop.epsilon_gap && obj - *stop.reference_value <= *stop.epsilon_gap) {
        reason = "epsilon_gap";
        break;
      }
    }
    if (stop.max_sfo && sfo >= *stop.max_sfo) {
      reason = "max_sfo";
      break;
    }
    if (stop.max_seconds && clock.wall() >= *stop.max_seconds) {
      reason = "max_time";
      break;
    }
  }

  if (logged_iter != k) log_point(k, y);
  result.y = y;
  result.iterations = k;
  result.sfo_calls = sfo;
  result.stop_reason = reason.empty() ? "max_iters" : reason;
  return result;
}

struct StepRule {
  enum class Kind { kInvSqrtK, kFixed };
  Kind kind = Kind::kInvSqrtK;
  double c = 1.0;
  int batch = 1;
};

// Projected stochastic subgradient baseline:
//   x_{k+1} = Proj_X(x_k - gamma_k g_k),  gamma_k = c / sqrt(k) or c.
// Tracks and returns the best-objective iterate seen at logged points.
inline SolveResult subgrad_run(const ProblemInstance& prob, const StepRule& rule,
                               const StoppingPolicy& stop, std::uint64_t seed,
                               const SolveOptions& opts = {}) {
  stop.validate();
  if (rule.batch < 1) throw std::invalid_argument("subgrad_run: batch size must be >= 1");
  if (!prob.feasible.contains(prob.start, 1e-9))
    throw std::invalid_argument("subgrad_run: start point is infeasible");
  if (!prob.psi_stoch_subgrad && !prob.psi_subgrad)
    throw std::invalid_argument("subgrad_run: problem provides no subgradient");

  Rng rng(seed);
  Vector x = prob.start;
  const bool stochastic = static_cast<bool>(prob.psi_stoch_subgrad);
  const int m = stochastic ? rule.batch : 1;
  const std::int64_t cadence = detail::resolve_cadence(opts, stop, std::max(1, m));

  SolveResult result;
  detail::RunClock clock;
  std::int64_t sfo = 0;
  std::int64_t logged_iter = -1;
  double best_val = std::numeric_limits<double>::infinity();
  Vector best_x = x;

  auto log_point = [&](std::int64_t k) {
    RunPoint pt;
    pt.iter = k;
    pt.sfo_calls = sfo;
    if (opts.record_time) pt.cpu_seconds = clock.cpu();
    pt.objective = prob.true_objective(x);
    if (pt.objective < best_val) {
      best_val = pt.objective;
      best_x = x;
    }
    if (opts.gap_reference) pt.gap = pt.objective - *opts.gap_reference;
    if (prob.accuracy) pt.accuracy = prob.accuracy(x);
    result.record.points.push_back(pt);
    logged_iter = k;
    if (opts.on_log) opts.on_log(k, x, x, x);
  };

  std::string reason;
  std::int64_t k = 0;
  while (true) {
    if (stop.max_iters && k >= *stop.max_iters) {
      reason = "max_iters";
      break;
    }
    ++k;
    Vector g;
    if (stochastic) {
      g = prob.psi_stoch_subgrad(x, rng);
      for (int i = 1; i < rule.batch; ++i) g += prob.psi_stoch_subgrad(x, rng);
      g /= static_cast<double>(rule.batch);
      sfo += rule.batch;
    } else {
      g = prob.psi_subgrad(x);
      sfo += prob.full_subgrad_cost;
    }
    const double step =
        rule.kind == StepRule::Kind::kInvSqrtK ? rule.c / std::sqrt(static_cast<double>(k)) : rule.c;
    x = prob.feasible.project(x - step * g);

    const bool final_by_iters = stop.max_iters && k >= *stop.max_iters;
    if (k % cadence == 0 || final_by_iters) {
      log_point(k);
      if (stop.epsilon_gap && best_val - *stop.reference_value <= *stop.epsilon_gap) {
        reason = "epsilon_gap";
        break;
      }
    }
    if (stop.max_sfo && sfo >= *stop.max_sfo) {
      reason = "max_sfo";
      break;
    }
    if (stop.max_seconds && clock.wall() >= *stop.max_seconds) {
      reason = "max_time";
      break;
    }
  }

  if (logged_iter != k) log_point(k);
  result.y = best_x;
  result.iterations = k;
  result.sfo_calls = sfo;
  result.stop_reason = reason.empty() ? "max_iters" : reason;
  return result;
}

}  // namespace ssag
