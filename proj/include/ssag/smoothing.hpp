#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "ssag/types.hpp"

namespace ssag {

// Constants certifying a smoothing family h~_mu of a nonsmooth convex h:
//   |h~_mu1(x) - h~_mu2(x)| <= kappa * |mu1 - mu2|      for all mu in (0, mu_bar],
//   h~_mu is (k_const + l_h / mu)-smooth.
struct SmoothingParams {
  double kappa = 0.0;
  double k_const = 0.0;
  double l_h = 0.0;
  double mu_bar = 1.0;

  double smoothness_at(double mu) const { return k_const + l_h / mu; }

  void validate() const {
    if (!(kappa >= 0.0) || !(k_const >= 0.0) || !(l_h >= 0.0))
      throw std::invalid_argument("SmoothingParams: kappa, k_const, l_h must be nonnegative");
    if (!(mu_bar > 0.0)) throw std::invalid_argument("SmoothingParams: mu_bar must be positive");
    if (!std::isfinite(smoothness_at(mu_bar)))
      throw std::invalid_argument("SmoothingParams: smoothness constant not finite");
  }
};

// Contract for a smoothed nonsmooth term. Implementations are immutable
// after construction and safe to share across threads; every evaluation
// stream owns its rng.
class SmoothedOracle {
 public:
  virtual ~SmoothedOracle() = default;

  virtual const SmoothingParams& params() const = 0;

  // h~_mu(x)
  virtual double value(const Vector& x, double mu) const = 0;

  // grad h~_mu(x)
  virtual Vector grad(const Vector& x, double mu) const = 0;

  // One stochastic gradient draw, unbiased for grad(x, mu).
  virtual Vector stoch_grad(const Vector& x, double mu, Rng& rng) const = 0;

  // The true nonsmooth h(x). Used for metrics, never inside the solver loop.
  virtual double nonsmooth_value(const Vector& x) const = 0;

  // Average of m draws at a shared point. Overrides may reuse per-point
  // work across draws but must consume the rng in draw order so results
  // are reproducible for a given seed.
  virtual Vector stoch_grad_batch(const Vector& x, double mu, int m, Rng& rng) const {
    Vector acc = stoch_grad(x, mu, rng);
    for (int i = 1; i < m; ++i) acc += stoch_grad(x, mu, rng);
    return acc / static_cast<double>(m);
  }
};

// Mini-batch stochastic gradient: the mean of m draws at x. Deterministic
// given the rng state; summation follows draw order.
inline Vector minibatch_grad(const SmoothedOracle& oracle, const Vector& x, double mu, int m,
                             Rng& rng) {
  if (m < 1) throw std::invalid_argument("minibatch_grad: batch size must be >= 1");
  if (!(mu > 0.0) || mu > oracle.params().mu_bar)
    throw std::invalid_argument("minibatch_grad: mu outside (0, mu_bar]");
  return oracle.stoch_grad_batch(x, mu, m, rng);
}

// Empirical second moment of the stochastic gradient noise: at each sample
// point, the trace of the draw covariance around the empirical mean
// (1/(n-1) normalization), averaged over points.
inline double estimate_sigma_sq(const SmoothedOracle& oracle, const std::vector<Vector>& sample_points,
                                int draws_per_point, double mu, Rng& rng) {
  if (sample_points.empty()) throw std::invalid_argument("estimate_sigma_sq: no sample points");
  if (draws_per_point < 2) throw std::invalid_argument("estimate_sigma_sq: need >= 2 draws per point");
  double total = 0.0;
  std::vector<Vector> draws(static_cast<std::size_t>(draws_per_point));
  for (const Vector& x : sample_points) {
    Vector mean = Vector::Zero(x.size());
    for (int i = 0; i < draws_per_point; ++i) {
      draws[static_cast<std::size_t>(i)] = oracle.stoch_grad(x, mu, rng);
      mean += draws[static_cast<std::size_t>(i)];
    }
    mean /= static_cast<double>(draws_per_point);
    double var = 0.0;
    for (int i = 0; i < draws_per_point; ++i)
      var += (draws[static_cast<std::size_t>(i)] - mean).squaredNorm();
    total += var / static_cast<double>(draws_per_point - 1);
  }
  return total / static_cast<double>(sample_points.size());
}

}  // namespace ssag
