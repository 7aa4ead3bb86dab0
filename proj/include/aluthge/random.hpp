#pragma once

// Seeded random ensembles. All generators take the engine by reference so a
// caller-owned std::mt19937_64 fixes the whole experiment.

#include <cmath>
#include <cstdint>
#include <random>

#include "aluthge/operator.hpp"

namespace aluthge::random {

using Engine = std::mt19937_64;

/// Engine for trial `trial` of an experiment seeded with `seed`. Independent of
/// the order in which trials are executed.
inline Engine trialEngine(std::uint64_t seed, std::uint64_t trial) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(trial), static_cast<std::uint32_t>(trial >> 32)};
  return Engine(seq);
}

/// i.i.d. standard complex Gaussian entries scaled by 1/sqrt(N).
inline Operator ginibre(Index n, Engine& rng) {
  std::normal_distribution<double> g(0.0, std::sqrt(0.5));
  Matrix m(n, n);
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < n; ++i) m(i, j) = Complex(g(rng), g(rng));
  return Operator(m / std::sqrt(static_cast<double>(n)));
}

/// Haar unitary: QR of a Ginibre matrix with the phases of R divided out.
inline Operator haarUnitary(Index n, Engine& rng) {
  const Matrix z = ginibre(n, rng).matrix();
  Eigen::HouseholderQR<Matrix> qr(z);
  Matrix q = qr.householderQ();
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Index j = 0; j < n; ++j) {
    const double a = std::abs(r(j, j));
    if (a > 0.0) q.col(j) *= r(j, j) / a;
  }
  return Operator(q);
}

/// V diag(lambda) V^* with Haar V and standard complex Gaussian eigenvalues.
inline Operator randomNormal(Index n, Engine& rng) {
  std::normal_distribution<double> g(0.0, std::sqrt(0.5));
  Vector d(n);
  for (Index i = 0; i < n; ++i) d(i) = Complex(g(rng), g(rng));
  const Matrix v = haarUnitary(n, rng).matrix();
  return Operator(v * d.asDiagonal() * v.adjoint());
}

/// Ginibre matrix rescaled to operator norm `radius`.
inline Operator ginibreWithNorm(Index n, double radius, Engine& rng) {
  const Operator z = ginibre(n, rng);
  return Operator(z.matrix() * (radius / opNorm(z)));
}

/// Complex Ginibre direction normalized to unit operator norm.
inline Operator unitContraction(Index n, Engine& rng) { return ginibreWithNorm(n, 1.0, rng); }

inline Vector gaussianVector(Index n, Engine& rng) {
  std::normal_distribution<double> g(0.0, std::sqrt(0.5));
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = Complex(g(rng), g(rng));
  return v;
}

}  // namespace aluthge::random
