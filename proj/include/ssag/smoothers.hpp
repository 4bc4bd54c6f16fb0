#pragma once

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <utility>
#include <vector>

#include "ssag/projections.hpp"
#include "ssag/smoothing.hpp"
#include "ssag/types.hpp"

namespace ssag {

struct SmoothComponent {
  std::function<double(const Vector&)> value;
  std::function<Vector(const Vector&)> grad;
};

// Log-sum-exp smoothing of h(x) = max_xi h_xi(x):
//   h~_mu(x) = mu * ln(sum_xi exp(h_xi(x) / mu)).
// Evaluated with max subtraction; the raw formula overflows for small mu.
// Certified constants: kappa = ln q, K = max_xi L_{h_xi}, L_h = max ||grad h_xi||^2.
class LogSumExpMaxSmoother final : public SmoothedOracle {
 public:
  LogSumExpMaxSmoother(std::vector<SmoothComponent> components, std::vector<double> lips_each,
                       double grad_norm_sq_max, double mu_bar = 1.0)
      : components_(std::move(components)) {
    if (components_.empty()) throw std::invalid_argument("LogSumExpMaxSmoother: q must be >= 1");
    if (lips_each.size() != components_.size())
      throw std::invalid_argument("LogSumExpMaxSmoother: one smoothness constant per component");
    params_.kappa = std::log(static_cast<double>(components_.size()));
    params_.k_const = *std::max_element(lips_each.begin(), lips_each.end());
    params_.l_h = grad_norm_sq_max;
    params_.mu_bar = mu_bar;
    params_.validate();
  }

  const SmoothingParams& params() const override { return params_; }

  Vector component_values(const Vector& x) const {
    Vector v(static_cast<Index>(components_.size()));
    for (std::size_t i = 0; i < components_.size(); ++i)
      v[static_cast<Index>(i)] = components_[i].value(x);
    return v;
  }

  double value(const Vector& x, double mu) const override {
    require_mu(mu);
    return lse(component_values(x), mu);
  }

  Vector grad(const Vector& x, double mu) const override {
    require_mu(mu);
    const Vector p = softmax_weights(component_values(x), mu);
    Vector g = Vector::Zero(x.size());
    for (std::size_t i = 0; i < components_.size(); ++i) {
      const double w = p[static_cast<Index>(i)];
      if (w > 0.0) g += w * components_[i].grad(x);
    }
    return g;
  }

  // One draw per the index-sampling rule: xi ~ softmax(h(x)/mu), gradient of
  // that single component. Unbiased for grad(x, mu).
  Vector stoch_grad(const Vector& x, double mu, Rng& rng) const override {
    return components_[sample_index(x, mu, rng)].grad(x);
  }

  // All m draws at one point share the component-value pass, and the m
  // inverse-CDF lookups collapse into one sweep: draw the uniforms in order,
  // sort a copy, accumulate per-component multiplicities, then combine the
  // distinct gradients. Same joint law as m sequential draws; the batch mean
  // is permutation-invariant, so the result is unbiased with variance
  // sigma^2 / m as before.
  Vector stoch_grad_batch(const Vector& x, double mu, int m, Rng& rng) const override {
    require_mu(mu);
    const Vector p = softmax_weights(component_values(x), mu);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<double> us(static_cast<std::size_t>(m));
    for (double& u : us) u = unif(rng);
    std::sort(us.begin(), us.end());
    Vector acc = Vector::Zero(x.size());
    std::size_t j = 0;
    double cum = 0.0;
    for (Index i = 0; i < p.size() && j < us.size(); ++i) {
      cum += p[i];
      int count = 0;
      while (j < us.size() && us[j] < cum) {
        ++count;
        ++j;
      }
      if (count > 0) acc += static_cast<double>(count) * components_[static_cast<std::size_t>(i)].grad(x);
    }
    // fp stragglers past the accumulated mass land on the last component
    if (j < us.size())
      acc += static_cast<double>(us.size() - j) * components_.back().grad(x);
    return acc / static_cast<double>(m);
  }

  double nonsmooth_value(const Vector& x) const override {
    return component_values(x).maxCoeff();
  }

  std::size_t sample_index(const Vector& x, double mu, Rng& rng) const {
    require_mu(mu);
    return sample_from_weights(softmax_weights(component_values(x), mu), rng);
  }

  std::size_t q() const { return components_.size(); }

  static double lse(const Vector& vals, double mu) {
    const double m = vals.maxCoeff();
    double s = 0.0;
    for (Index i = 0; i < vals.size(); ++i) s += std::exp((vals[i] - m) / mu);
    return m + mu * std::log(s);
  }

  static Vector softmax_weights(const Vector& vals, double mu) {
    const double m = vals.maxCoeff();
    Vector w(vals.size());
    for (Index i = 0; i < vals.size(); ++i) w[i] = std::exp((vals[i] - m) / mu);
    return w / w.sum();
  }

 private:
  void require_mu(double mu) const {
    if (!(mu > 0.0)) throw std::invalid_argument("LogSumExpMaxSmoother: mu must be positive");
  }

  // Inverse-CDF draw; ties resolve to the lowest index.
  std::size_t sample_from_weights(const Vector& p, Rng& rng) const {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const double u = unif(rng);
    double cum = 0.0;
    for (Index i = 0; i < p.size(); ++i) {
      cum += p[i];
      if (u < cum) return static_cast<std::size_t>(i);
    }
    return static_cast<std::size_t>(p.size() - 1);
  }

  std::vector<SmoothComponent> components_;
  SmoothingParams params_;
};

// Nesterov smoothing of h(x) = max_{u in simplex} <A x + c, u> (a pointwise
// max of affine forms): subtract the prox term (mu/2) ||u - u0||^2 inside the
// max. The inner argmax is a simplex projection and the gradient is A^T u^.
// Constants: kappa = max_u (1/2)||u - u0||^2, K = 0, L_h = ||A||^2.
class NesterovSimplexMaxSmoother final : public SmoothedOracle {
 public:
  // prox_center empty -> uniform vector.
  NesterovSimplexMaxSmoother(Matrix rows, Vector offsets, Vector prox_center = Vector(),
                             double mu_bar = 1.0)
      : rows_(std::move(rows)), offsets_(std::move(offsets)) {
    const Index q = rows_.rows();
    if (q < 1 || offsets_.size() != q)
      throw std::invalid_argument("NesterovSimplexMaxSmoother: rows/offsets mismatch");
    prox_center_ = prox_center.size() == 0
                       ? Vector::Constant(q, 1.0 / static_cast<double>(q))
                       : std::move(prox_center);
    if (prox_center_.size() != q)
      throw std::invalid_argument("NesterovSimplexMaxSmoother: prox center dimension mismatch");
    // max of the convex prox term over the simplex is attained at a vertex
    double kappa = 0.0;
    for (Index i = 0; i < q; ++i) {
      Vector vertex = Vector::Zero(q);
      vertex[i] = 1.0;
      kappa = std::max(kappa, 0.5 * (vertex - prox_center_).squaredNorm());
    }
    params_.kappa = kappa;
    params_.k_const = 0.0;
    const double op_norm = rows_.jacobiSvd().singularValues()[0];
    params_.l_h = op_norm * op_norm;
    params_.mu_bar = mu_bar;
    params_.validate();
  }

  const SmoothingParams& params() const override { return params_; }

  std::pair<double, Vector> value_grad(const Vector& x, double mu) const {
    require_mu(mu);
    const Vector s = rows_ * x + offsets_;
    const Vector u = project_simplex(prox_center_ + s / mu);
    const double val = s.dot(u) - 0.5 * mu * (u - prox_center_).squaredNorm();
    return {val, rows_.transpose() * u};
  }

  double value(const Vector& x, double mu) const override {
    require_mu(mu);
    const Vector s = rows_ * x + offsets_;
    const Vector u = project_simplex(prox_center_ + s / mu);
    return s.dot(u) - 0.5 * mu * (u - prox_center_).squaredNorm();
  }

  Vector grad(const Vector& x, double mu) const override { return value_grad(x, mu).second; }

  // The smoothing is deterministic; the stochastic oracle is exact (sigma = 0).
  Vector stoch_grad(const Vector& x, double mu, Rng&) const override { return grad(x, mu); }

  double nonsmooth_value(const Vector& x) const override {
    return (rows_ * x + offsets_).maxCoeff();
  }

  Vector inner_argmax(const Vector& x, double mu) const {
    require_mu(mu);
    return project_simplex(prox_center_ + (rows_ * x + offsets_) / mu);
  }

 private:
  void require_mu(double mu) const {
    if (!(mu > 0.0)) throw std::invalid_argument("NesterovSimplexMaxSmoother: mu must be positive");
  }

  Matrix rows_;
  Vector offsets_;
  Vector prox_center_;
  SmoothingParams params_;
};

// Identically-zero nonsmooth part (kappa = 0, sigma = 0); lets purely
// smooth problems run through the same solver path.
class ZeroSmoother final : public SmoothedOracle {
 public:
  explicit ZeroSmoother(double mu_bar = 1.0) { params_.mu_bar = mu_bar; }
  const SmoothingParams& params() const override { return params_; }
  double value(const Vector&, double) const override { return 0.0; }
  Vector grad(const Vector& x, double) const override { return Vector::Zero(x.size()); }
  Vector stoch_grad(const Vector& x, double, Rng&) const override { return Vector::Zero(x.size()); }
  double nonsmooth_value(const Vector&) const override { return 0.0; }

 private:
  SmoothingParams params_;
};

// Wraps an oracle so its stochastic gradient is the exact one (sigma = 0).
class ExactGradientOracle final : public SmoothedOracle {
 public:
  explicit ExactGradientOracle(std::shared_ptr<const SmoothedOracle> inner)
      : inner_(std::move(inner)) {
    if (!inner_) throw std::invalid_argument("ExactGradientOracle: null inner oracle");
  }
  const SmoothingParams& params() const override { return inner_->params(); }
  double value(const Vector& x, double mu) const override { return inner_->value(x, mu); }
  Vector grad(const Vector& x, double mu) const override { return inner_->grad(x, mu); }
  Vector stoch_grad(const Vector& x, double mu, Rng&) const override { return inner_->grad(x, mu); }
  Vector stoch_grad_batch(const Vector& x, double mu, int, Rng&) const override {
    return inner_->grad(x, mu);
  }
  double nonsmooth_value(const Vector& x) const override { return inner_->nonsmooth_value(x); }

 private:
  std::shared_ptr<const SmoothedOracle> inner_;
};

struct HingeEnvelope {
  double value;
  double deriv;
};

// Moreau envelope of the scalar hinge t -> max(t, 0): quadratic on [0, mu],
// linear outside, globally C^1. Satisfies 0 <= hinge - envelope <= mu/2.
inline HingeEnvelope moreau_hinge(double t, double mu) {
  if (!(mu > 0.0)) throw std::invalid_argument("moreau_hinge: mu must be positive");
  if (t <= 0.0) return {0.0, 0.0};
  if (t < mu) return {t * t / (2.0 * mu), t / mu};
  return {t - 0.5 * mu, 1.0};
}

// The scalar hinge envelope packaged as a 1-D oracle, mostly so the generic
// smoothing-contract checks can run on it. Vector problems compose the
// kernel with their own affine maps instead.
class MoreauHingeSmoother final : public SmoothedOracle {
 public:
  explicit MoreauHingeSmoother(double mu_bar = 1.0) {
    params_.kappa = 0.5;
    params_.k_const = 0.0;
    params_.l_h = 1.0;
    params_.mu_bar = mu_bar;
    params_.validate();
  }

  const SmoothingParams& params() const override { return params_; }

  double value(const Vector& x, double mu) const override {
    require_scalar(x);
    return moreau_hinge(x[0], mu).value;
  }

  Vector grad(const Vector& x, double mu) const override {
    require_scalar(x);
    Vector g(1);
    g[0] = moreau_hinge(x[0], mu).deriv;
    return g;
  }

  Vector stoch_grad(const Vector& x, double mu, Rng&) const override { return grad(x, mu); }

  double nonsmooth_value(const Vector& x) const override {
    require_scalar(x);
    return std::max(x[0], 0.0);
  }

 private:
  static void require_scalar(const Vector& x) {
    if (x.size() != 1) throw std::invalid_argument("MoreauHingeSmoother: scalar oracle");
  }

  SmoothingParams params_;
};

}  // namespace ssag
