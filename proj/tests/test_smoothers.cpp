#include <catch_amalgamated.hpp>

#include <cmath>
#include <memory>
#include <vector>

#include "ssag/smoothers.hpp"
#include "test_util.hpp"

using namespace ssag;

namespace {

// q affine components h_i(x) = <a_i, x> + b_i
LogSumExpMaxSmoother make_affine_lse(const Matrix& a, const Vector& b, double mu_bar = 1.0) {
  auto rows = std::make_shared<Matrix>(a);
  auto offs = std::make_shared<Vector>(b);
  std::vector<SmoothComponent> comps;
  double gmax = 0.0;
  for (Index i = 0; i < a.rows(); ++i) {
    comps.push_back({[rows, offs, i](const Vector& x) { return rows->row(i).dot(x) + (*offs)[i]; },
                     [rows, i](const Vector&) { return Vector(rows->row(i)); }});
    gmax = std::max(gmax, a.row(i).squaredNorm());
  }
  return LogSumExpMaxSmoother(std::move(comps),
                              std::vector<double>(static_cast<std::size_t>(a.rows()), 0.0), gmax,
                              mu_bar);
}

// constant-valued components, for closed-form softmax cases
LogSumExpMaxSmoother make_constant_lse(const Vector& values) {
  std::vector<SmoothComponent> comps;
  for (Index i = 0; i < values.size(); ++i) {
    const double v = values[i];
    comps.push_back({[v](const Vector&) { return v; }, [](const Vector& x) {
                       return Vector(Vector::Zero(x.size()));
                     }});
  }
  return LogSumExpMaxSmoother(std::move(comps),
                              std::vector<double>(static_cast<std::size_t>(values.size()), 0.0),
                              0.0);
}

// unstabilized log-sum-exp in extended precision
long double lse_reference(const Vector& vals, long double mu) {
  long double s = 0.0L;
  for (Index i = 0; i < vals.size(); ++i) s += expl(static_cast<long double>(vals[i]) / mu);
  return mu * logl(s);
}

}  // namespace

TEST_CASE("log-sum-exp value closed forms") {
  const Vector x = Vector::Zero(1);

  auto equal2 = make_constant_lse(Vector::Zero(2));
  REQUIRE(equal2.value(x, 1.0) == Catch::Approx(std::log(2.0)).epsilon(1e-12));

  Vector v(2);
  v << 1.0, 0.0;
  auto dom = make_constant_lse(v);
  REQUIRE(dom.value(x, 0.01) == Catch::Approx(1.0).margin(1e-12));

  Vector w(3);
  w << 0.3, -0.1, 0.2;
  auto three = make_constant_lse(w);
  const double got = three.value(x, 0.5);
  REQUIRE(got >= 0.3);
  REQUIRE(got <= 0.3 + 0.5 * std::log(3.0));
  REQUIRE(got == Catch::Approx(static_cast<double>(lse_reference(w, 0.5L))).epsilon(1e-14));
}

TEST_CASE("log-sum-exp gradient") {
  Rng rng(1);
  Matrix a(5, 3);
  Vector b(5);
  for (Index i = 0; i < 5; ++i) {
    for (Index j = 0; j < 3; ++j) a(i, j) = test::random_vector(1, rng)[0];
    b[i] = test::random_vector(1, rng)[0];
  }
  auto lse = make_affine_lse(a, b);

  // all components equal -> mean of gradients
  auto equal = make_affine_lse(Matrix::Ones(4, 3), Vector::Zero(4));
  const Vector x0 = test::random_vector(3, rng);
  REQUIRE((equal.grad(x0, 0.7) - Vector::Ones(3)).norm() < 1e-12);

  // strict maximizer at tiny mu -> one-hot weights
  Vector vals = a * x0 + b;
  Index argmax;
  vals.maxCoeff(&argmax);
  REQUIRE((lse.grad(x0, 1e-8) - a.row(argmax).transpose()).norm() < 1e-6);

  // finite differences at moderate mu
  for (int rep = 0; rep < 20; ++rep) {
    const Vector x = test::random_vector(3, rng);
    const Vector g = lse.grad(x, 0.3);
    const Vector fd =
        test::fd_gradient([&](const Vector& p) { return lse.value(p, 0.3); }, x);
    REQUIRE((g - fd).norm() <= 1e-6 * (1.0 + g.norm()));
  }
}

TEST_CASE("log-sum-exp index sampling") {
  Rng rng(2024);
  const Vector x = Vector::Zero(1);

  // uniform case: frequencies within 3-sigma multinomial bounds
  auto equal = make_constant_lse(Vector::Zero(4));
  std::vector<int> counts(4, 0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) ++counts[equal.sample_index(x, 1.0, rng)];
  for (int c : counts) {
    const double p = 0.25;
    const double sd = std::sqrt(n * p * (1 - p));
    REQUIRE(std::abs(c - n * p) <= 3.0 * sd);
  }

  // two components at (mu ln 3, 0): probabilities (3/4, 1/4)
  const double mu = 0.2;
  Vector v(2);
  v << mu * std::log(3.0), 0.0;
  auto skew = make_constant_lse(v);
  int first = 0;
  for (int i = 0; i < n; ++i)
    if (skew.sample_index(x, mu, rng) == 0) ++first;
  const double sd = std::sqrt(n * 0.75 * 0.25);
  REQUIRE(std::abs(first - n * 0.75) <= 3.0 * sd);

  // single component: always index 0
  auto one = make_constant_lse(Vector::Zero(1));
  for (int i = 0; i < 100; ++i) REQUIRE(one.sample_index(x, 1.0, rng) == 0);
}

TEST_CASE("log-sum-exp batched draws share the law of sequential draws") {
  Rng rng(64);
  Matrix a(5, 3);
  Vector b(5);
  for (Index i = 0; i < 5; ++i) {
    for (Index j = 0; j < 3; ++j) a(i, j) = test::random_vector(1, rng)[0];
    b[i] = test::random_vector(1, rng)[0];
  }
  auto lse = make_affine_lse(a, b);
  const Vector x = test::random_vector(3, rng);

  // a batch of one consumes the rng exactly like a single draw
  Rng ra(9), rb(9);
  REQUIRE((lse.stoch_grad_batch(x, 0.4, 1, ra) - lse.stoch_grad(x, 0.4, rb)).norm() == 0.0);

  // unbiased, with variance shrinking like 1/m
  const Vector exact = lse.grad(x, 0.4);
  const int reps = 20000;
  double var1 = 0.0, var16 = 0.0;
  Vector mean16 = Vector::Zero(3);
  for (int r = 0; r < reps; ++r) {
    var1 += (lse.stoch_grad_batch(x, 0.4, 1, rng) - exact).squaredNorm();
    const Vector g = lse.stoch_grad_batch(x, 0.4, 16, rng);
    mean16 += g;
    var16 += (g - exact).squaredNorm();
  }
  var1 /= reps;
  var16 /= reps;
  mean16 /= reps;
  REQUIRE((mean16 - exact).norm() <= 3.0 * std::sqrt(var16 / reps));
  REQUIRE(var16 * 16.0 / var1 == Catch::Approx(1.0).margin(0.2));
}

TEST_CASE("log-sum-exp stays finite for huge component spreads") {
  Vector v(3);
  v << -1e6, 0.0, 1e6;
  auto wide = make_constant_lse(v);
  const Vector x = Vector::Zero(1);
  const double val = wide.value(x, 1e-3);
  REQUIRE(std::isfinite(val));
  REQUIRE(val == Catch::Approx(1e6).margin(1e-6));
  REQUIRE(std::isfinite(wide.grad(x, 1e-3)[0]));
  const Vector p = LogSumExpMaxSmoother::softmax_weights(v, 1e-3);
  REQUIRE(p.sum() == Catch::Approx(1.0).epsilon(1e-12));
  REQUIRE(p.minCoeff() >= 0.0);
}

TEST_CASE("nesterov smoothing of a linear max over the simplex") {
  Rng rng(7);

  // zero data -> value 0, gradient 0
  auto zero = NesterovSimplexMaxSmoother(Matrix::Zero(3, 2), Vector::Zero(3));
  const Vector x0 = test::random_vector(2, rng);
  REQUIRE(zero.value(x0, 0.5) == Catch::Approx(0.0).margin(1e-15));
  REQUIRE(zero.grad(x0, 0.5).norm() < 1e-15);

  // q=2 with scores (1, 0): cross-check against a dense grid over the simplex
  Matrix a(2, 2);
  a << 1.0, 0.0, 0.0, 0.0;
  Vector c(2);
  c << 0.0, 0.0;
  auto two = NesterovSimplexMaxSmoother(a, c);
  Vector x(2);
  x << 1.0, 0.0;  // scores s = (1, 0)
  for (double mu : {4.0, 1.0, 0.3}) {
    double best = -1e100;
    const Vector center = Vector::Constant(2, 0.5);
    for (double t = 0.0; t <= 1.0; t += 1e-4) {
      Vector u(2);
      u << t, 1.0 - t;
      best = std::max(best, u[0] - 0.5 * mu * (u - center).squaredNorm());
    }
    REQUIRE(two.value(x, mu) == Catch::Approx(best).margin(1e-7));
  }

  // mu -> 0 recovers the exact max
  REQUIRE(two.value(x, 1e-8) == Catch::Approx(1.0).margin(1e-6));

  // gradients match finite differences
  Matrix a5(5, 3);
  Vector c5(5);
  for (Index i = 0; i < 5; ++i) {
    for (Index j = 0; j < 3; ++j) a5(i, j) = test::random_vector(1, rng)[0];
    c5[i] = test::random_vector(1, rng)[0];
  }
  auto smoother = NesterovSimplexMaxSmoother(a5, c5);
  for (int rep = 0; rep < 20; ++rep) {
    const Vector p = test::random_vector(3, rng);
    const auto [val, g] = smoother.value_grad(p, 0.4);
    REQUIRE(val == Catch::Approx(smoother.value(p, 0.4)));
    const Vector fd =
        test::fd_gradient([&](const Vector& q) { return smoother.value(q, 0.4); }, p);
    REQUIRE((g - fd).norm() <= 2e-6 * (1.0 + g.norm()));
  }

  // kappa for the uniform prox center is (1 - 1/q)/2 <= 1
  REQUIRE(smoother.params().kappa == Catch::Approx(0.5 * (1.0 - 0.2)));
  REQUIRE(smoother.params().kappa <= 1.0);
}

TEST_CASE("moreau hinge envelope branches") {
  const auto neg = moreau_hinge(-1.0, 0.3);
  REQUIRE(neg.value == 0.0);
  REQUIRE(neg.deriv == 0.0);

  for (double mu : {0.2, 1.0, 3.0}) {
    const auto mid = moreau_hinge(mu / 2.0, mu);
    REQUIRE(mid.value == Catch::Approx(mu / 8.0));
    REQUIRE(mid.deriv == Catch::Approx(0.5));
  }

  const auto lin = moreau_hinge(2.0, 1.0);
  REQUIRE(lin.value == Catch::Approx(1.5));
  REQUIRE(lin.deriv == 1.0);

  REQUIRE_THROWS_AS(moreau_hinge(1.0, 0.0), std::invalid_argument);
}

TEST_CASE("moreau hinge envelope equals the scalar inf-convolution") {
  // envelope(t) = min_y max(y, 0) + (t - y)^2 / (2 mu), checked on a fine grid
  for (double mu : {0.5, 1.0}) {
    for (double t : {-0.7, 0.1, mu / 2.0, 0.9 * mu, 1.1 * mu, 2.0}) {
      double best = 1e100;
      for (double y = -3.0; y <= 3.0; y += 1e-4)
        best = std::min(best, std::max(y, 0.0) + (t - y) * (t - y) / (2.0 * mu));
      REQUIRE(moreau_hinge(t, mu).value == Catch::Approx(best).margin(1e-7));
    }
  }
}

TEST_CASE("smoothing contract: sandwich, mu-lipschitz, descent lemma") {
  Rng rng(99);
  Matrix a(4, 3);
  Vector b(4);
  for (Index i = 0; i < 4; ++i) {
    for (Index j = 0; j < 3; ++j) a(i, j) = test::random_vector(1, rng)[0];
    b[i] = test::random_vector(1, rng)[0];
  }
  auto lse = std::make_shared<LogSumExpMaxSmoother>(make_affine_lse(a, b));
  auto nest = std::make_shared<NesterovSimplexMaxSmoother>(a, b);
  auto moreau = std::make_shared<MoreauHingeSmoother>();

  struct Case {
    std::shared_ptr<SmoothedOracle> oracle;
    Index dim;
    double lower_gap;  // h - lower_gap*mu <= h~ <= h + upper_gap*mu
    double upper_gap;
  };
  const std::vector<Case> cases = {
      {lse, 3, 0.0, std::log(4.0)},
      {nest, 3, nest->params().kappa, 0.0},
      {moreau, 1, 0.5, 0.0},
  };

  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (const auto& c : cases) {
    const double kappa = c.oracle->params().kappa;
    for (int rep = 0; rep < 300; ++rep) {
      const Vector x = test::random_vector(c.dim, rng, 2.0);
      const double h = c.oracle->nonsmooth_value(x);
      for (double mu : {1.0, 0.1, 0.01}) {
        const double hv = c.oracle->value(x, mu);
        REQUIRE(hv >= h - c.lower_gap * mu - 1e-9);
        REQUIRE(hv <= h + c.upper_gap * mu + 1e-9);
        // |h~_mu1 - h~_mu2| <= kappa |mu1 - mu2|
        const double mu2 = mu * (0.25 + unif(rng));
        REQUIRE(std::abs(hv - c.oracle->value(x, mu2)) <= kappa * std::abs(mu - mu2) + 1e-9);
        // descent lemma with constant K + L_h / mu
        const double l = c.oracle->params().smoothness_at(mu);
        const Vector y = x + test::random_vector(c.dim, rng, 0.3);
        const double rhs = hv + c.oracle->grad(x, mu).dot(y - x) + 0.5 * l * (y - x).squaredNorm();
        REQUIRE(c.oracle->value(y, mu) <= rhs + 1e-9 * (1.0 + std::abs(rhs)));
        // convexity along a random chord
        const double t = unif(rng);
        const double mid = c.oracle->value(t * x + (1.0 - t) * y, mu);
        REQUIRE(mid <= t * hv + (1.0 - t) * c.oracle->value(y, mu) + 1e-9);
      }
    }
  }
}
