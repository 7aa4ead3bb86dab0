#pragma once

// Binomially weighted ergodic averages
//   H_n(v) = 2^{-n} sum_k C(n,k) T^k v,      h_n(b) = 2^{-n} sum_k C(n,k) b o alpha^k,
// their Cesaro counterparts, and the binomial discrepancy that controls the
// convergence H_n(v) -> Pv on ran(T - I).

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "aluthge/binomial.hpp"
#include "aluthge/crossed_product.hpp"
#include "aluthge/errors.hpp"
#include "aluthge/operator.hpp"

namespace aluthge {

struct AveragingReport {
  int n = 0;
  Vector value;
  double residual = 0.0;  // Euclidean distance to Pv
};

/// Orthogonal projection onto ker(T - I), from the right singular vectors of
/// T - I whose singular values fall below tol (default 1e-10 max(1, ||T - I||)).
inline Operator fixedSpaceProjection(const Operator& t, std::optional<double> tol = std::nullopt) {
  const Index n = t.dim();
  const Matrix shifted = t.matrix() - Matrix::Identity(n, n);
  Eigen::JacobiSVD<Matrix> svd(shifted, Eigen::ComputeFullV);
  const RealVector s = svd.singularValues();
  const double cut = tol ? *tol : 1e-10 * std::max(1.0, s(0));
  Matrix proj = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    if (s(i) <= cut) proj += svd.matrixV().col(i) * svd.matrixV().col(i).adjoint();
  }
  return Operator(proj);
}

namespace detail {

inline void requireContraction(const Operator& t) {
  const double norm = opNorm(t);
  if (norm > 1.0 + 1e-10) {
    throw ContractViolation("binomial average requires ||T|| <= 1, got " + std::to_string(norm));
  }
}

// v <- (v + Tv)/2, one factor of (I + T)/2 = 2^{-1} sum_k C(1,k) T^k.
inline void halfStep(const Matrix& t, Vector& v) { v = 0.5 * (v + t * v); }

}  // namespace detail

/// H_n(v) = ((I + T)/2)^n v, applied factor by factor. This equals the
/// binomial sum of T^k v without forming powers, and is exact for T = -I.
/// Residual is taken against Pv with P = fixedSpaceProjection(T).
inline AveragingReport binomialAverage(const Operator& t, const Vector& v, int n) {
  if (n < 0) throw InvalidInput("binomialAverage: n must be >= 0");
  if (v.size() != t.dim()) throw DimensionError("binomialAverage: vector length mismatch");
  detail::requireContraction(t);
  Vector value = v;
  for (int k = 0; k < n; ++k) detail::halfStep(t.matrix(), value);
  const Vector target = fixedSpaceProjection(t).matrix() * v;
  return {n, value, (value - target).norm()};
}

/// binomialAverage at each n in ns, sharing one run of half-steps.
inline std::vector<AveragingReport> binomialAverageSweep(const Operator& t, const Vector& v,
                                                         const std::vector<int>& ns) {
  if (v.size() != t.dim()) throw DimensionError("binomialAverage: vector length mismatch");
  if (!std::is_sorted(ns.begin(), ns.end()) || (!ns.empty() && ns.front() < 0)) {
    throw InvalidInput("binomialAverageSweep: ns must be ascending and non-negative");
  }
  detail::requireContraction(t);
  const Vector target = fixedSpaceProjection(t).matrix() * v;
  std::vector<AveragingReport> out;
  Vector value = v;
  int done = 0;
  for (int n : ns) {
    for (; done < n; ++done) detail::halfStep(t.matrix(), value);
    out.push_back({n, value, (value - target).norm()});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Function averages on (X, mu)

struct FunctionalAveragingReport {
  int n = 0;
  LogWeightVector value;
  LogWeightVector target;  // E^alpha(b)
  // (sum mu d(h, c)^2)^{1/2} with d(-inf,-inf) = 0 and d(-inf, finite) = +inf.
  double residual = 0.0;
  double residualL1 = 0.0;
  // mu{ x : d(h(x), c(x)) > threshold }
  double mismatchMass = 0.0;
};

namespace detail {

inline double extendedDistance(double a, double b) {
  if (a == kNegInf && b == kNegInf) return 0.0;
  if (a == kNegInf || b == kNegInf) return std::numeric_limits<double>::infinity();
  return std::abs(a - b);
}

inline FunctionalAveragingReport functionalReport(int n, std::vector<double> values, const LogWeightVector& b,
                                                  const PermutationWeightOperator& p, double threshold) {
  FunctionalAveragingReport r;
  r.n = n;
  r.value = LogWeightVector(std::move(values));
  r.target = conditionalExpectation(b, p);
  double l2 = 0.0;
  for (std::size_t x = 0; x < p.size(); ++x) {
    const double d = extendedDistance(r.value[x], r.target[x]);
    l2 += p.mu()[x] * d * d;
    r.residualL1 += p.mu()[x] * d;
    if (d > threshold) r.mismatchMass += p.mu()[x];
  }
  r.residual = std::sqrt(l2);
  return r;
}

// sum_k c_k b(alpha^k x) with -inf absorbing (all c_k > 0).
inline std::vector<double> weightedOrbitSums(const LogWeightVector& b, const PermutationWeightOperator& p,
                                             const std::vector<double>& c) {
  std::vector<double> out(p.size());
  std::vector<double> terms(c.size());
  for (std::size_t x = 0; x < p.size(); ++x) {
    bool forced = false;
    std::size_t y = x;
    for (std::size_t k = 0; k < c.size(); ++k, y = p.alpha()[y]) {
      if (b[y] == kNegInf) {
        forced = true;
        break;
      }
      terms[k] = c[k] * b[y];
    }
    out[x] = forced ? kNegInf : compensatedSum(terms);
  }
  return out;
}

}  // namespace detail

/// h_n(b) = sum_k C(n,k)/2^n b o alpha^k. -inf is absorbed without forming
/// products, so underflowed tail weights at large n are harmless.
inline FunctionalAveragingReport functionalBinomialAverage(const LogWeightVector& b,
                                                           const PermutationWeightOperator& p, int n,
                                                           double threshold = 1e-9) {
  if (b.size() != p.size()) throw DimensionError("functionalBinomialAverage: length mismatch");
  return detail::functionalReport(n, detail::weightedOrbitSums(b, p, binomialWeights(n)), b, p, threshold);
}

/// (1/n) sum_{k=0}^{n-1} b o alpha^k.
inline FunctionalAveragingReport cesaroAverage(const LogWeightVector& b, const PermutationWeightOperator& p, int n,
                                               double threshold = 1e-9) {
  if (n < 1) throw InvalidInput("cesaroAverage: n must be >= 1");
  if (b.size() != p.size()) throw DimensionError("cesaroAverage: length mismatch");
  const std::vector<double> c(static_cast<std::size_t>(n), 1.0 / n);
  return detail::functionalReport(n, detail::weightedOrbitSums(b, p, c), b, p, threshold);
}

/// 2^{-n} sum_{k=1}^n |2k - n + 1| / k C(n,k).
inline double binomialDiscrepancy(int n) {
  if (n < 1) throw InvalidInput("binomialDiscrepancy: n must be >= 1");
  const auto c = binomialWeights(n);
  std::vector<double> terms;
  terms.reserve(static_cast<std::size_t>(n));
  for (int k = 1; k <= n; ++k) {
    terms.push_back(std::abs(2.0 * k - n + 1.0) / k * c[static_cast<std::size_t>(k)]);
  }
  return detail::compensatedSum(terms);
}

}  // namespace aluthge
