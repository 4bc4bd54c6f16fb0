#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <random>

namespace ssag {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

// Single RNG type project-wide so seeded runs are reproducible bit-for-bit.
using Rng = std::mt19937_64;

inline bool all_finite(const Vector& v) { return v.allFinite(); }

}  // namespace ssag
