#pragma once

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <utility>
#include <vector>

#include "ssag/types.hpp"

namespace ssag {

// Euclidean projection onto the probability simplex {x >= 0, sum x = 1},
// via sort and threshold.
inline Vector project_simplex(const Vector& v) {
  const Index d = v.size();
  if (d == 0) throw std::invalid_argument("project_simplex: empty vector");
  std::vector<double> u(v.data(), v.data() + d);
  std::sort(u.begin(), u.end(), std::greater<double>());
  double css = 0.0, tau = 0.0;
  Index rho = 0;
  for (Index j = 0; j < d; ++j) {
    css += u[static_cast<std::size_t>(j)];
    const double t = (css - 1.0) / static_cast<double>(j + 1);
    if (u[static_cast<std::size_t>(j)] - t > 0.0) {
      rho = j;
      tau = t;
    }
  }
  (void)rho;
  Vector out(d);
  for (Index i = 0; i < d; ++i) out[i] = std::max(v[i] - tau, 0.0);
  return out;
}

// Projection onto the second-order cone {(w, lambda): ||w|| <= lambda}.
inline std::pair<Vector, double> project_soc(const Vector& w, double lambda) {
  const double nw = w.norm();
  if (nw <= lambda) return {w, lambda};
  if (nw <= -lambda) return {Vector::Zero(w.size()), 0.0};
  const double t = 0.5 * (lambda + nw);
  return {(t / nw) * w, t};
}

// Projection onto the PSD cone: symmetrize, clip negative eigenvalues.
inline Matrix project_psd(const Matrix& m) {
  if (m.rows() != m.cols()) throw std::invalid_argument("project_psd: matrix not square");
  const Matrix sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(sym);
  if (eig.info() != Eigen::Success) throw std::runtime_error("project_psd: eigendecomposition failed");
  Vector ev = eig.eigenvalues().cwiseMax(0.0);
  return eig.eigenvectors() * ev.asDiagonal() * eig.eigenvectors().transpose();
}

// Packed symmetric storage: row-major upper triangle with off-diagonals
// scaled by sqrt(2), so the packed Euclidean norm equals the Frobenius norm.
inline Index packed_dim(Index n) { return n * (n + 1) / 2; }

inline Vector pack_symmetric(const Matrix& m) {
  const Index n = m.rows();
  if (m.cols() != n) throw std::invalid_argument("pack_symmetric: matrix not square");
  static const double kRoot2 = std::sqrt(2.0);
  Vector out(packed_dim(n));
  Index p = 0;
  for (Index i = 0; i < n; ++i) {
    out[p++] = m(i, i);
    for (Index j = i + 1; j < n; ++j) out[p++] = kRoot2 * 0.5 * (m(i, j) + m(j, i));
  }
  return out;
}

inline Matrix unpack_symmetric(const Vector& v, Index n) {
  if (v.size() != packed_dim(n)) throw std::invalid_argument("unpack_symmetric: length mismatch");
  static const double kInvRoot2 = 1.0 / std::sqrt(2.0);
  Matrix out(n, n);
  Index p = 0;
  for (Index i = 0; i < n; ++i) {
    out(i, i) = v[p++];
    for (Index j = i + 1; j < n; ++j) {
      const double x = kInvRoot2 * v[p++];
      out(i, j) = x;
      out(j, i) = x;
    }
  }
  return out;
}

// Feasible sets used by the solver's projected steps. Matrix cones act on
// packed symmetric blocks (see pack_symmetric), second-order cones treat
// the last coordinate as the cone height.
class FeasibleSet {
 public:
  static FeasibleSet full_space(Index d) { return FeasibleSet(Kind::FullSpace, d); }

  static FeasibleSet simplex(Index d) {
    if (d < 1) throw std::invalid_argument("FeasibleSet::simplex: dimension must be >= 1");
    return FeasibleSet(Kind::Simplex, d);
  }

  static FeasibleSet second_order_cone(Index ambient_dim) {
    if (ambient_dim < 2) throw std::invalid_argument("FeasibleSet::second_order_cone: need dim >= 2");
    return FeasibleSet(Kind::SecondOrderCone, ambient_dim);
  }

  static FeasibleSet psd_cone(Index n) {
    if (n < 1) throw std::invalid_argument("FeasibleSet::psd_cone: order must be >= 1");
    FeasibleSet s(Kind::PsdCone, packed_dim(n));
    s.order_ = n;
    return s;
  }

  static FeasibleSet ball(Vector center, double radius) {
    if (radius < 0.0) throw std::invalid_argument("FeasibleSet::ball: negative radius");
    FeasibleSet s(Kind::Ball, center.size());
    s.center_ = std::move(center);
    s.radius_ = radius;
    return s;
  }

  static FeasibleSet product(std::vector<FeasibleSet> blocks) {
    if (blocks.empty()) throw std::invalid_argument("FeasibleSet::product: no blocks");
    Index d = 0;
    for (const auto& b : blocks) d += b.dim();
    FeasibleSet s(Kind::Product, d);
    s.blocks_ = std::move(blocks);
    return s;
  }

  Index dim() const { return dim_; }

  Vector project(const Vector& x) const {
    if (x.size() != dim_) throw std::invalid_argument("FeasibleSet::project: dimension mismatch");
    switch (kind_) {
      case Kind::FullSpace:
        return x;
      case Kind::Simplex:
        return project_simplex(x);
      case Kind::SecondOrderCone: {
        auto [w, lam] = project_soc(x.head(dim_ - 1), x[dim_ - 1]);
        Vector out(dim_);
        out.head(dim_ - 1) = w;
        out[dim_ - 1] = lam;
        return out;
      }
      case Kind::PsdCone:
        return pack_symmetric(project_psd(unpack_symmetric(x, order_)));
      case Kind::Ball: {
        const Vector diff = x - center_;
        const double n = diff.norm();
        if (n <= radius_) return x;
        return center_ + (radius_ / n) * diff;
      }
      case Kind::Product: {
        Vector out(dim_);
        Index off = 0;
        for (const auto& b : blocks_) {
          out.segment(off, b.dim()) = b.project(x.segment(off, b.dim()));
          off += b.dim();
        }
        return out;
      }
    }
    throw std::logic_error("FeasibleSet::project: unreachable");
  }

  bool contains(const Vector& x, double tol = 1e-9) const {
    if (x.size() != dim_) return false;
    switch (kind_) {
      case Kind::FullSpace:
        return all_finite(x);
      case Kind::Simplex:
        return x.minCoeff() >= -tol && std::abs(x.sum() - 1.0) <= tol;
      case Kind::SecondOrderCone:
        return x.head(dim_ - 1).norm() <= x[dim_ - 1] + tol;
      case Kind::PsdCone: {
        Eigen::SelfAdjointEigenSolver<Matrix> eig(unpack_symmetric(x, order_));
        return eig.info() == Eigen::Success && eig.eigenvalues().minCoeff() >= -tol;
      }
      case Kind::Ball:
        return (x - center_).norm() <= radius_ + tol;
      case Kind::Product: {
        Index off = 0;
        for (const auto& b : blocks_) {
          if (!b.contains(x.segment(off, b.dim()), tol)) return false;
          off += b.dim();
        }
        return true;
      }
    }
    return false;
  }

 private:
  enum class Kind { FullSpace, Simplex, SecondOrderCone, PsdCone, Ball, Product };

  FeasibleSet(Kind kind, Index dim) : kind_(kind), dim_(dim) {}

  Kind kind_;
  Index dim_;
  Index order_ = 0;  // PSD block side length
  Vector center_;
  double radius_ = 0.0;
  std::vector<FeasibleSet> blocks_;
};

}  // namespace ssag
