#pragma once

#include <Eigen/Eigenvalues>

#include <cmath>
#include <memory>
#include <stdexcept>
#include <utility>
#include <vector>

#include "ssag/projections.hpp"
#include "ssag/smoothers.hpp"
#include "ssag/solver.hpp"
#include "ssag/types.hpp"

namespace ssag {

// ---------------------------------------------------------------------------
// Wasserstein distributionally robust SVM.
//
// Variables v = (w, lambda) in R^{d+1}, feasible set ||w|| <= lambda.
//   psi(v) = lambda eps_hat + (tau/2)||w||^2
//            + mean_i max{1 - w'z_i, 1 + w'z_i - lambda kap_hat, 0},
// with z_i = y_i x_i. The nonsmooth mean-of-max term is smoothed per sample
// by the three-term log-sum-exp, giving kappa = ln 3, K = 0 and
// L_h = lambda_max(mean_i [[2 z z', -kap z], [-kap z', (3/4) kap^2]]).
// ---------------------------------------------------------------------------

class DrsvmSmoother final : public SmoothedOracle {
 public:
  DrsvmSmoother(Matrix z_hat, double kappa_hat, double mu_bar) : z_(std::move(z_hat)), kap_(kappa_hat) {
    if (z_.rows() < 1) throw std::invalid_argument("DrsvmSmoother: empty dataset");
    const Index d = z_.cols();
    Matrix block = Matrix::Zero(d + 1, d + 1);
    for (Index i = 0; i < z_.rows(); ++i) {
      const Vector zi = z_.row(i);
      block.topLeftCorner(d, d) += 2.0 * zi * zi.transpose();
      block.topRightCorner(d, 1) -= kap_ * zi;
      block.bottomLeftCorner(1, d) -= kap_ * zi.transpose();
      block(d, d) += 0.75 * kap_ * kap_;
    }
    block /= static_cast<double>(z_.rows());
    Eigen::SelfAdjointEigenSolver<Matrix> eig(block);
    params_.kappa = std::log(3.0);
    params_.k_const = 0.0;
    params_.l_h = eig.eigenvalues().maxCoeff();
    params_.mu_bar = mu_bar;
    params_.validate();
  }

  const SmoothingParams& params() const override { return params_; }

  double value(const Vector& v, double mu) const override {
    double total = 0.0;
    for (Index i = 0; i < z_.rows(); ++i) total += sample_value(i, v, mu);
    return total / static_cast<double>(z_.rows());
  }

  Vector grad(const Vector& v, double mu) const override {
    Vector g = Vector::Zero(v.size());
    for (Index i = 0; i < z_.rows(); ++i) add_sample_grad(i, v, mu, 1.0 / static_cast<double>(z_.rows()), g);
    return g;
  }

  // Uniformly sampled data term, gradient of its smoothed three-way max.
  Vector stoch_grad(const Vector& v, double mu, Rng& rng) const override {
    std::uniform_int_distribution<Index> pick(0, z_.rows() - 1);
    Vector g = Vector::Zero(v.size());
    add_sample_grad(pick(rng), v, mu, 1.0, g);
    return g;
  }

  double nonsmooth_value(const Vector& v) const override {
    const Vector w = v.head(v.size() - 1);
    const double lam = v[v.size() - 1];
    double total = 0.0;
    for (Index i = 0; i < z_.rows(); ++i) {
      const double s = z_.row(i).dot(w);
      total += std::max({1.0 - s, 1.0 + s - lam * kap_, 0.0});
    }
    return total / static_cast<double>(z_.rows());
  }

  Index n_samples() const { return z_.rows(); }

 private:
  double sample_value(Index i, const Vector& v, double mu) const {
    const double s = z_.row(i).dot(v.head(v.size() - 1));
    const double lam = v[v.size() - 1];
    const double a = 1.0 - s, b = 1.0 + s - lam * kap_;
    const double top = std::max({a, b, 0.0});
    return top + mu * std::log(std::exp((a - top) / mu) + std::exp((b - top) / mu) +
                               std::exp(-top / mu));
  }

  void add_sample_grad(Index i, const Vector& v, double mu, double weight, Vector& g) const {
    const Index d = v.size() - 1;
    const double s = z_.row(i).dot(v.head(d));
    const double lam = v[d];
    const double a = (1.0 - s) / mu, b = (1.0 + s - lam * kap_) / mu;
    const double top = std::max({a, b, 0.0});
    const double ea = std::exp(a - top), eb = std::exp(b - top), ec = std::exp(-top);
    const double den = ea + eb + ec;
    const double p1 = ea / den, p2 = eb / den;
    g.head(d) += (weight * (p2 - p1)) * z_.row(i).transpose();
    g[d] -= weight * kap_ * p2;
  }

  Matrix z_;
  double kap_;
  SmoothingParams params_;
};

struct DrsvmInstance {
  Matrix z_hat;            // signed samples y_i x_i, one row per sample
  double tau = 0.0;        // ridge weight on w
  double eps_hat = 0.1;    // Wasserstein radius
  double kappa_hat = 1.0;  // label-flip cost
  double mu_bar = 1.0;

  Index dim() const { return z_hat.cols() + 1; }

  std::shared_ptr<DrsvmSmoother> make_smoother() const {
    return std::make_shared<DrsvmSmoother>(z_hat, kappa_hat, mu_bar);
  }

  double true_objective(const Vector& w, double lam) const {
    double hinge = 0.0;
    for (Index i = 0; i < z_hat.rows(); ++i) {
      const double s = z_hat.row(i).dot(w);
      hinge += std::max({1.0 - s, 1.0 + s - lam * kappa_hat, 0.0});
    }
    hinge /= static_cast<double>(z_hat.rows());
    return lam * eps_hat + 0.5 * tau * w.squaredNorm() + hinge;
  }

  ProblemInstance make_problem() const {
    const Index d = z_hat.cols();
    ProblemInstance prob;
    prob.feasible = FeasibleSet::second_order_cone(d + 1);
    const double tau_c = tau, eps_c = eps_hat;
    prob.smooth.value = [tau_c, eps_c, d](const Vector& v) {
      return v[d] * eps_c + 0.5 * tau_c * v.head(d).squaredNorm();
    };
    prob.smooth.grad = [tau_c, eps_c, d](const Vector& v) {
      Vector g(v.size());
      g.head(d) = tau_c * v.head(d);
      g[d] = eps_c;
      return g;
    };
    prob.smooth.lipschitz = tau;
    prob.smoother = make_smoother();
    prob.start = Vector::Zero(d + 1);
    prob.full_subgrad_cost = z_hat.rows();

    // hinge subgradient of one uniformly drawn sample term, plus grad f
    const Matrix z = z_hat;
    const double kap = kappa_hat;
    prob.psi_stoch_subgrad = [z, kap, tau_c, eps_c, d](const Vector& v, Rng& rng) {
      std::uniform_int_distribution<Index> pick(0, z.rows() - 1);
      const Index i = pick(rng);
      const double s = z.row(i).dot(v.head(d));
      const double lam = v[d];
      Vector g(v.size());
      g.head(d) = tau_c * v.head(d);
      g[d] = eps_c;
      const double b1 = 1.0 - s, b2 = 1.0 + s - lam * kap;
      if (b1 >= b2 && b1 >= 0.0) {
        g.head(d) -= z.row(i).transpose();
      } else if (b2 > b1 && b2 >= 0.0) {
        g.head(d) += z.row(i).transpose();
        g[d] -= kap;
      }
      return g;
    };
    prob.psi_subgrad = [z, kap, tau_c, eps_c, d](const Vector& v) {
      const double lam = v[d];
      Vector g(v.size());
      g.head(d) = tau_c * v.head(d);
      g[d] = eps_c;
      for (Index i = 0; i < z.rows(); ++i) {
        const double s = z.row(i).dot(v.head(d));
        const double b1 = 1.0 - s, b2 = 1.0 + s - lam * kap;
        const double inv_n = 1.0 / static_cast<double>(z.rows());
        if (b1 >= b2 && b1 >= 0.0) {
          g.head(d) -= inv_n * z.row(i).transpose();
        } else if (b2 > b1 && b2 >= 0.0) {
          g.head(d) += inv_n * z.row(i).transpose();
          g[d] -= inv_n * kap;
        }
      }
      return g;
    };
    return prob;
  }
};

// Classification accuracy of w on (features, labels); sign(0) counts as +1.
inline double drsvm_accuracy(const Matrix& features, const Vector& labels, const Vector& w) {
  if (features.rows() == 0) throw std::invalid_argument("drsvm_accuracy: empty test set");
  if (features.rows() != labels.size())
    throw std::invalid_argument("drsvm_accuracy: feature/label count mismatch");
  Index correct = 0;
  for (Index i = 0; i < features.rows(); ++i) {
    const double pred = features.row(i).dot(w) >= 0.0 ? 1.0 : -1.0;
    if (pred == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(features.rows());
}

// ---------------------------------------------------------------------------
// Distributionally robust portfolio optimization (moment ambiguity set,
// discretized dual). Variables (x, Lambda1, Lambda2) with x in the simplex
// and Lambda1, Lambda2 PSD, packed as [x | svec(Lambda1) | svec(Lambda2)].
// Each scenario contributes the affine component
//   h_xi = -<zeta_xi, x> - <Lambda1, phi1(zeta_xi)> - <Lambda2, phi2(zeta_xi)>
// and the objective is their max, smoothed by log-sum-exp.
// ---------------------------------------------------------------------------

// Sample mean and covariance (1/(q-1)); covariance symmetrized and clipped
// to the PSD cone to absorb fp drift.
inline std::pair<Vector, Matrix> estimate_moments(const Matrix& returns) {
  const Index q = returns.rows();
  if (q < 2) throw std::invalid_argument("estimate_moments: need at least 2 samples");
  const Vector mean = returns.colwise().mean();
  const Matrix centered = returns.rowwise() - mean.transpose();
  Matrix cov = centered.transpose() * centered / static_cast<double>(q - 1);
  cov = project_psd(cov);
  return {mean, cov};
}

class DrpoInstance {
 public:
  DrpoInstance(Matrix returns, double gamma1 = 0.1, double gamma2 = 1.1, double mu_bar = 1.0)
      : returns_(std::move(returns)), gamma1_(gamma1), gamma2_(gamma2), mu_bar_(mu_bar) {
    std::tie(mean_, cov_) = estimate_moments(returns_);
    build_component_grads();
  }

  Index n_assets() const { return returns_.cols(); }
  Index n_scenarios() const { return returns_.rows(); }
  const Vector& mean() const { return mean_; }
  const Matrix& covariance() const { return cov_; }

  Index dim() const {
    const Index d = n_assets();
    return d + packed_dim(d + 1) + packed_dim(d);
  }

  // phi1(zeta) = [[-Sigma0, mu0 - zeta], [(mu0 - zeta)', -gamma1]]
  Matrix phi1(const Vector& zeta) const {
    const Index d = n_assets();
    Matrix out(d + 1, d + 1);
    out.topLeftCorner(d, d) = -cov_;
    out.topRightCorner(d, 1) = mean_ - zeta;
    out.bottomLeftCorner(1, d) = (mean_ - zeta).transpose();
    out(d, d) = -gamma1_;
    return out;
  }

  // phi2(zeta) = (zeta - mu0)(zeta - mu0)' - gamma2 Sigma0
  Matrix phi2(const Vector& zeta) const {
    const Vector diff = zeta - mean_;
    return diff * diff.transpose() - gamma2_ * cov_;
  }

  // Affine component value at a packed point; matrix inner products are
  // Frobenius products, which the packing preserves.
  double component_value(Index xi, const Vector& point) const {
    if (xi < 0 || xi >= n_scenarios()) throw std::out_of_range("DrpoInstance: scenario index");
    if (point.size() != dim()) throw std::invalid_argument("DrpoInstance: point dimension");
    return grads_.row(xi).dot(point);
  }

  double true_objective(const Vector& point) const {
    return (grads_ * point).maxCoeff();
  }

  FeasibleSet feasible_set() const {
    const Index d = n_assets();
    std::vector<FeasibleSet> blocks;
    blocks.push_back(FeasibleSet::simplex(d));
    blocks.push_back(FeasibleSet::psd_cone(d + 1));
    blocks.push_back(FeasibleSet::psd_cone(d));
    return FeasibleSet::product(std::move(blocks));
  }

  std::shared_ptr<LogSumExpMaxSmoother> make_smoother() const {
    auto grads = std::make_shared<Matrix>(grads_);
    std::vector<SmoothComponent> comps;
    comps.reserve(static_cast<std::size_t>(grads->rows()));
    double grad_norm_sq_max = 0.0;
    for (Index xi = 0; xi < grads->rows(); ++xi) {
      SmoothComponent c;
      c.value = [grads, xi](const Vector& v) { return grads->row(xi).dot(v); };
      c.grad = [grads, xi](const Vector& v) {
        (void)v;
        return Vector(grads->row(xi));
      };
      comps.push_back(std::move(c));
      grad_norm_sq_max = std::max(grad_norm_sq_max, grads->row(xi).squaredNorm());
    }
    // components are affine, so their gradients (and hence L_h) are exact
    std::vector<double> lips(static_cast<std::size_t>(grads->rows()), 0.0);
    return std::make_shared<LogSumExpMaxSmoother>(std::move(comps), std::move(lips),
                                                  grad_norm_sq_max, mu_bar_);
  }

  ProblemInstance make_problem() const {
    ProblemInstance prob;
    prob.feasible = feasible_set();
    prob.smoother = make_smoother();
    prob.smooth.lipschitz = 0.0;
    const Index d = n_assets();
    Vector start = Vector::Zero(dim());
    start.head(d).setConstant(1.0 / static_cast<double>(d));
    prob.start = start;
    prob.full_subgrad_cost = n_scenarios();
    // deterministic max-component subgradient for the baseline
    auto grads = std::make_shared<Matrix>(grads_);
    prob.psi_subgrad = [grads](const Vector& v) {
      Index best = 0;
      (grads->operator*(v)).maxCoeff(&best);
      return Vector(grads->row(best));
    };
    return prob;
  }

 private:
  void build_component_grads() {
    const Index d = n_assets();
    grads_.resize(n_scenarios(), dim());
    for (Index xi = 0; xi < n_scenarios(); ++xi) {
      const Vector zeta = returns_.row(xi);
      Vector g(dim());
      g.head(d) = -zeta;
      g.segment(d, packed_dim(d + 1)) = -pack_symmetric(phi1(zeta));
      g.tail(packed_dim(d)) = -pack_symmetric(phi2(zeta));
      grads_.row(xi) = g;
    }
  }

  Matrix returns_;
  double gamma1_;
  double gamma2_;
  double mu_bar_;
  Vector mean_;
  Matrix cov_;
  Matrix grads_;  // one packed component gradient per scenario
};

// ---------------------------------------------------------------------------
// Synthetic piecewise-linear benchmarks over the simplex.
// ---------------------------------------------------------------------------

// max(x1, x2, -x1 - x2 + 0.3) over the 2-simplex; optimum 0.5 at (0.5, 0.5).
inline ProblemInstance make_synthetic_max_problem(double mu_bar = 1.0) {
  Matrix a(3, 2);
  a << 1.0, 0.0, 0.0, 1.0, -1.0, -1.0;
  Vector b(3);
  b << 0.0, 0.0, 0.3;
  auto rows = std::make_shared<Matrix>(a);
  auto offs = std::make_shared<Vector>(b);
  std::vector<SmoothComponent> comps;
  double gmax = 0.0;
  for (Index i = 0; i < 3; ++i) {
    SmoothComponent c;
    c.value = [rows, offs, i](const Vector& x) { return rows->row(i).dot(x) + (*offs)[i]; };
    c.grad = [rows, i](const Vector&) { return Vector(rows->row(i)); };
    comps.push_back(std::move(c));
    gmax = std::max(gmax, a.row(i).squaredNorm());
  }
  ProblemInstance prob;
  prob.feasible = FeasibleSet::simplex(2);
  prob.smoother = std::make_shared<LogSumExpMaxSmoother>(std::move(comps),
                                                         std::vector<double>(3, 0.0), gmax, mu_bar);
  prob.start = Vector::Zero(2);
  prob.start[0] = 1.0;
  prob.full_subgrad_cost = 3;
  prob.psi_subgrad = [rows, offs](const Vector& x) {
    Index best = 0;
    (*rows * x + *offs).maxCoeff(&best);
    return Vector(rows->row(best));
  };
  return prob;
}

// Random affine max over the simplex: q components in dimension d. Used by
// batch-size selection checks, where a wide value pass rewards batching.
inline ProblemInstance make_random_max_problem(Index d, Index q, std::uint64_t seed,
                                               double mu_bar = 1.0) {
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto rows = std::make_shared<Matrix>(q, d);
  auto offs = std::make_shared<Vector>(q);
  for (Index i = 0; i < q; ++i) {
    for (Index j = 0; j < d; ++j) (*rows)(i, j) = normal(rng);
    (*offs)[i] = 0.1 * normal(rng);
  }
  std::vector<SmoothComponent> comps;
  double gmax = 0.0;
  for (Index i = 0; i < q; ++i) {
    SmoothComponent c;
    c.value = [rows, offs, i](const Vector& x) { return rows->row(i).dot(x) + (*offs)[i]; };
    c.grad = [rows, i](const Vector&) { return Vector(rows->row(i)); };
    comps.push_back(std::move(c));
    gmax = std::max(gmax, rows->row(i).squaredNorm());
  }
  ProblemInstance prob;
  prob.feasible = FeasibleSet::simplex(d);
  prob.smoother = std::make_shared<LogSumExpMaxSmoother>(
      std::move(comps), std::vector<double>(static_cast<std::size_t>(q), 0.0), gmax, mu_bar);
  prob.start = Vector::Constant(d, 1.0 / static_cast<double>(d));
  prob.full_subgrad_cost = q;
  prob.psi_subgrad = [rows, offs](const Vector& x) {
    Index best = 0;
    (*rows * x + *offs).maxCoeff(&best);
    return Vector(rows->row(best));
  };
  return prob;
}

// Deterministic separable 2-D classification set with a few far (but
// correctly labeled) samples; the heavy tail is what separates the
// annealed accelerated method from a tuned subgradient baseline.
struct SyntheticDrsvmData {
  Matrix features;
  Vector labels;
};

inline SyntheticDrsvmData make_separable_dataset(Index n, std::uint64_t seed,
                                                 double outlier_frac = 0.05,
                                                 double outlier_scale = 6.0) {
  Rng rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector dir(2);
  dir << 1.0, 0.7;
  dir.normalize();
  Vector perp(2);
  perp << -dir[1], dir[0];
  SyntheticDrsvmData data;
  data.features.resize(n, 2);
  data.labels.resize(n);
  const Index n_out = std::max<Index>(1, static_cast<Index>(outlier_frac * static_cast<double>(n)));
  for (Index i = 0; i < n; ++i) {
    const double y = unif(rng) < 0.5 ? 1.0 : -1.0;
    double along, across;
    if (i < n_out) {
      along = outlier_scale * (0.7 + 0.3 * unif(rng));
      across = 0.5 * normal(rng);
    } else {
      along = 1.0 + unif(rng);
      across = 0.15 * normal(rng);
    }
    data.features.row(i) = y * along * dir + across * perp;
    data.labels[i] = y;
  }
  return data;
}

}  // namespace ssag
