#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace ssag {

// Acceleration sequence: alpha_0 = 1 and (1 - alpha_k) / alpha_k^2 = 1 / alpha_{k-1}^2,
// i.e. alpha_k is the positive root of a^2 + alpha_prev^2 a - alpha_prev^2 = 0.
// Satisfies alpha_k <= 2 / (k + 2).
inline double next_alpha(double alpha_prev) {
  if (!(alpha_prev > 0.0) || alpha_prev > 1.0)
    throw std::invalid_argument("next_alpha: alpha_prev must lie in (0, 1]");
  return 0.5 * alpha_prev * (std::sqrt(alpha_prev * alpha_prev + 4.0) - alpha_prev);
}

// Step-weight sequence: beta_1 = L_mu1 + 1/sqrt(m), then
// beta_{k+1} = max(beta_k, L_mu_{k+1} + 1 / (sqrt(m (k+1)) alpha_k^2)).
// Nondecreasing with beta_k > L_mu_k by construction.
inline double next_beta(double beta_prev, double l_mu_next, int m, std::int64_t k_next,
                        double alpha_k) {
  if (m < 1) throw std::invalid_argument("next_beta: batch size must be >= 1");
  if (k_next < 1) throw std::invalid_argument("next_beta: iteration index must be >= 1");
  const double candidate =
      l_mu_next + 1.0 / (std::sqrt(static_cast<double>(m) * static_cast<double>(k_next)) *
                         alpha_k * alpha_k);
  return std::max(beta_prev, candidate);
}

// Iteration limit delivering an epsilon-approximate solution:
//   N = ceil(24 kappa mu0 / eps + 8 sigma^4 / (m eps^2)) - 1, floored at 1.
inline std::int64_t iteration_limit(double epsilon, double kappa, double mu0, double sigma,
                                    std::int64_t m) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("iteration_limit: epsilon must be positive");
  if (m < 1) throw std::invalid_argument("iteration_limit: batch size must be >= 1");
  const double s2 = sigma * sigma;
  const double raw = 24.0 * kappa * mu0 / epsilon +
                     8.0 * s2 * s2 / (static_cast<double>(m) * epsilon * epsilon);
  const double n = std::ceil(raw) - 1.0;
  if (n < 1.0) return 1;
  return static_cast<std::int64_t>(n);
}

enum class SmoothingMode { kDiminishing, kFixed };

// Per-iteration scalars of the accelerated scheme. At index k the state
// holds alpha_{k-1}, mu_k, beta_k and theta_k = 2 alpha_{k-1} beta_k.
// Diminishing mode sets mu_k = mu0 * alpha_{k-1}; fixed mode keeps mu constant.
class ScheduleState {
 public:
  // Smoothness of the smoothed objective decomposes as
  // L_mu = l_const + l_scaled / mu with l_const = L_f + K and l_scaled = L_h.
  static ScheduleState initial(double mu0, int m, SmoothingMode mode, double l_const,
                               double l_scaled, double fixed_mu = 0.0) {
    if (!(mu0 > 0.0)) throw std::invalid_argument("ScheduleState: mu0 must be positive");
    if (m < 1) throw std::invalid_argument("ScheduleState: batch size must be >= 1");
    if (mode == SmoothingMode::kFixed && !(fixed_mu > 0.0))
      throw std::invalid_argument("ScheduleState: fixed mode needs a positive mu");
    ScheduleState s;
    s.mu0_ = mu0;
    s.m_ = m;
    s.mode_ = mode;
    s.l_const_ = l_const;
    s.l_scaled_ = l_scaled;
    s.fixed_mu_ = fixed_mu;
    s.k_ = 1;
    s.alpha_prev_ = 1.0;  // alpha_0
    s.mu_ = (mode == SmoothingMode::kFixed) ? fixed_mu : mu0;
    s.beta_ = s.smoothness_at(s.mu_) + 1.0 / std::sqrt(static_cast<double>(m));
    s.theta_ = 2.0 * s.alpha_prev_ * s.beta_;
    return s;
  }

  void advance() {
    const double alpha_k = next_alpha(alpha_prev_);
    ++k_;
    const double mu_next = (mode_ == SmoothingMode::kFixed) ? fixed_mu_ : mu0_ * alpha_k;
    beta_ = next_beta(beta_, smoothness_at(mu_next), m_, k_, alpha_k);
    alpha_prev_ = alpha_k;
    mu_ = mu_next;
    theta_ = 2.0 * alpha_prev_ * beta_;
  }

  double smoothness_at(double mu) const {
    return l_const_ + (l_scaled_ > 0.0 ? l_scaled_ / mu : 0.0);
  }

  std::int64_t k() const { return k_; }
  double alpha_prev() const { return alpha_prev_; }
  double mu() const { return mu_; }
  double beta() const { return beta_; }
  double theta() const { return theta_; }
  // L_{mu_k} for the current iterate
  double smoothness() const { return smoothness_at(mu_); }
  int batch_size() const { return m_; }
  double mu0() const { return mu0_; }
  SmoothingMode mode() const { return mode_; }

 private:
  ScheduleState() = default;

  double mu0_ = 1.0;
  int m_ = 1;
  SmoothingMode mode_ = SmoothingMode::kDiminishing;
  double l_const_ = 0.0;
  double l_scaled_ = 0.0;
  double fixed_mu_ = 0.0;
  std::int64_t k_ = 1;
  double alpha_prev_ = 1.0;
  double mu_ = 1.0;
  double beta_ = 1.0;
  double theta_ = 2.0;
};

}  // namespace ssag
