#pragma once

// The Aluthge transform T~ = |T|^{1/2} U |T|^{1/2}, its iterates, the
// regularized similarity A_n T A_n^{-1} with its norm estimates, and the
// polynomial surrogate p(T^*T) T q(T^*T).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "aluthge/chebyshev.hpp"
#include "aluthge/errors.hpp"
#include "aluthge/operator.hpp"
#include "aluthge/random.hpp"

namespace aluthge {

inline Operator aluthge(const Operator& t) {
  const auto f = detail::svdFactors(t.matrix(), std::nullopt);
  // In the right singular basis: diag(sqrt sigma) (V^* W) diag(sqrt sigma).
  const Vector root = f.sigma.cwiseSqrt().cast<Complex>();
  const Matrix core = root.asDiagonal() * (f.right.adjoint() * f.left) * root.asDiagonal();
  return Operator(f.right * core * f.right.adjoint());
}

/// |T|^{1/2} V |T|^{1/2} for a caller-chosen unitary extension V of the polar
/// partial isometry. Agrees with aluthge(t) for every such V.
inline Operator aluthge(const Operator& t, const Operator& unitaryExtension) {
  const auto f = detail::svdFactors(t.matrix(), std::nullopt);
  const Matrix root = detail::positivePart(f.right, f.sigma.cwiseSqrt());
  return Operator(root * unitaryExtension.matrix() * root);
}

// ---------------------------------------------------------------------------
// Iteration

struct IterationStep {
  int index = 0;
  double traceNorm2 = 0.0;
  double opNorm = 0.0;
  double normalityDefect = 0.0;
  std::optional<double> distToLimit;
};

struct IterationTrace {
  std::vector<IterationStep> steps;
  bool converged = false;
  std::optional<int> convergedAt;  // k with ||T~^(k+1) - T~^(k)||_2 < tol
  std::optional<Operator> limit;
  double limitNormalityDefect = std::numeric_limits<double>::quiet_NaN();
};

inline IterationStep describeStep(int k, const Operator& x) {
  return {k, traceNorm2(x), opNorm(x), normalityDefect(x), std::nullopt};
}

/// Aluthge iterates T~^(0) = T, T~^(k+1) = (T~^(k))~ until two successive iterates
/// are within tol in ||.||_2. Distances are measured to candidateLimit when
/// given, otherwise to the detected limit (left empty if none).
inline IterationTrace iterate(const Operator& t, int maxSteps, double tol,
                              const std::optional<Operator>& candidateLimit = std::nullopt) {
  if (maxSteps < 1) throw InvalidInput("iterate: maxSteps must be >= 1");
  if (!(tol > 0.0)) throw InvalidInput("iterate: tol must be positive");
  if (candidateLimit && candidateLimit->dim() != t.dim()) {
    throw DimensionError("iterate: candidate limit has wrong dimension");
  }

  IterationTrace trace;
  std::vector<Operator> iterates{t};
  trace.steps.push_back(describeStep(0, t));
  for (int k = 0; k < maxSteps; ++k) {
    Operator next = aluthge(iterates.back());
    trace.steps.push_back(describeStep(k + 1, next));
    const double move = traceNorm2(next.matrix() - iterates.back().matrix());
    iterates.push_back(std::move(next));
    if (move < tol) {
      trace.converged = true;
      trace.convergedAt = k;
      trace.limit = iterates.back();
      trace.limitNormalityDefect = normalityDefect(*trace.limit);
      break;
    }
  }

  const std::optional<Operator>& reference = candidateLimit ? candidateLimit : trace.limit;
  if (reference) {
    for (std::size_t k = 0; k < iterates.size(); ++k) {
      trace.steps[k].distToLimit = traceNorm2(iterates[k].matrix() - reference->matrix());
    }
  }
  return trace;
}

// ---------------------------------------------------------------------------
// Regularized square root A_n = f_n(|T|), f_n(t) = sqrt(max(1/n, t))

inline Operator regularizer(const Operator& t, std::uint64_t n) {
  if (n < 1) throw InvalidInput("regularizer: n must be >= 1");
  const auto f = detail::svdFactors(t.matrix(), std::nullopt);
  const double floor = 1.0 / static_cast<double>(n);
  RealVector values = f.sigma.unaryExpr([floor](double s) { return std::sqrt(std::max(floor, s)); });
  return Operator(detail::positivePart(f.right, values));
}

/// One inequality lhs <= rhs, evaluated numerically on both sides.
struct NormBound {
  double lhs = 0.0;
  double rhs = 0.0;
  // Slack for rounding; bound (2) is attained with equality whenever ||T|| >= 1/n.
  bool holds() const { return lhs <= rhs * (1.0 + 1e-12) + 1e-13; }
};

/// The five estimates for A_n = f_n(|T|), in order:
///   ||A_n|| <= max(n^{-1/2}, ||T||^{1/2}),   || |T| A_n^{-1} || <= ||T||^{1/2},
///   ||A_n - |T|^{1/2}|| <= n^{-1/2},          || |T| A_n^{-1} - |T|^{1/2} || <= 1/(4 sqrt n),
///   ||A_n T A_n^{-1} - T~|| <= 5/(4 sqrt n) ||T||^{1/2}.
/// Left-hand sides are computed with explicit matrix inverses and products.
inline std::array<NormBound, 5> regularizerBounds(const Operator& t, std::uint64_t n) {
  const Matrix& m = t.matrix();
  const Matrix a = regularizer(t, n).matrix();
  const Matrix aInv = a.inverse();
  const auto pd = polar(t);
  const Matrix modulus = pd.modulus.matrix();
  const Matrix root = hermitianFunction(pd.modulus, [](double x) { return std::sqrt(x); }).matrix();
  const double rootNorm = std::sqrt(opNorm(m));
  const double invRootN = 1.0 / std::sqrt(static_cast<double>(n));

  return {{
      {opNorm(a), std::max(invRootN, rootNorm)},
      {opNorm(modulus * aInv), rootNorm},
      {opNorm(a - root), invRootN},
      {opNorm(modulus * aInv - root), 0.25 * invRootN},
      {opNorm(a * m * aInv - aluthge(t).matrix()), 1.25 * invRootN * rootNorm},
  }};
}

/// || A_n^{-1} |T|^{1/2} - (1 - P0) ||_2 where P0 projects onto ker T.
inline double kernelRegularizerGap(const Operator& t, std::uint64_t n) {
  const auto pd = polar(t);
  const Matrix aInv = regularizer(t, n).matrix().inverse();
  const Matrix root = hermitianFunction(pd.modulus, [](double x) { return std::sqrt(x); }).matrix();
  const Matrix complement = Matrix::Identity(t.dim(), t.dim()) - pd.kernelProjection.matrix();
  return traceNorm2(aInv * root - complement);
}

// ---------------------------------------------------------------------------
// Polynomial surrogate

struct SurrogateOptions {
  std::size_t initialDegree = 16;
  std::size_t degreeCap = 512;
};

/// p, q on [0, R^2] with || T~ - p(T^*T) T q(T^*T) || <= certifiedBound for all
/// ||T|| <= R. The certificate is
///   5/(4 sqrt n) R^{1/2} + dp R^{1/2} + (R^{1/2} + dp) dq,
/// dp = sup_t |f_n(t) - p(t^2)|, dq = sup_t t |f_n(t)^{-1} - q(t^2)|, t in [0, R],
/// with both suprema taken over a dense grid.
struct PolynomialSurrogate {
  double radius = 1.0;
  double eps = 0.0;
  std::uint64_t regularizerN = 1;
  ChebyshevSeries p;
  ChebyshevSeries q;
  double pError = 0.0;
  double qError = 0.0;
  double certifiedBound = 0.0;

  Operator apply(const Operator& t) const {
    const Matrix gram = t.matrix().adjoint() * t.matrix();
    return Operator(p(gram) * t.matrix() * q(gram));
  }
};

namespace detail {

inline std::vector<double> surrogateGrid(double top, std::size_t degree) {
  std::vector<double> grid;
  const std::size_t g = std::max<std::size_t>(8 * (degree + 1), 4096);
  grid.reserve(g + 2402);
  for (std::size_t i = 0; i <= g; ++i) {
    grid.push_back(0.5 * top * (1.0 - std::cos(std::numbers::pi * static_cast<double>(i) / static_cast<double>(g))));
  }
  for (int j = 1; j <= 2400; ++j) grid.push_back(top * std::pow(10.0, -j / 100.0));
  return grid;
}

}  // namespace detail

inline PolynomialSurrogate polynomialSurrogate(double radius, double eps, SurrogateOptions opts = {}) {
  if (!(radius >= 1.0)) throw InvalidInput("polynomialSurrogate: R must be >= 1");
  if (!(eps > 0.0)) throw InvalidInput("polynomialSurrogate: eps must be positive");
  const double top = radius * radius;
  const double rootR = std::sqrt(radius);

  PolynomialSurrogate best;
  best.certifiedBound = std::numeric_limits<double>::infinity();
  for (std::size_t degree = opts.initialDegree; degree <= opts.degreeCap; degree *= 2) {
    const auto grid = detail::surrogateGrid(top, degree);
    for (std::uint64_t n = 4; n <= (std::uint64_t{1} << 24); n *= 4) {
      const double floor = 1.0 / static_cast<double>(n);
      auto fn = [floor](double s) { return std::sqrt(std::max(floor, std::sqrt(s))); };
      auto fnInv = [&fn](double s) { return 1.0 / fn(s); };
      PolynomialSurrogate cand;
      cand.radius = radius;
      cand.eps = eps;
      cand.regularizerN = n;
      cand.p = chebyshevInterpolant(fn, 0.0, top, degree);
      cand.q = chebyshevInterpolant(fnInv, 0.0, top, degree);
      for (double s : grid) {
        cand.pError = std::max(cand.pError, std::abs(cand.p(s) - fn(s)));
        cand.qError = std::max(cand.qError, std::sqrt(s) * std::abs(cand.q(s) - fnInv(s)));
      }
      cand.certifiedBound = 1.25 * rootR / std::sqrt(static_cast<double>(n)) + cand.pError * rootR +
                            (rootR + cand.pError) * cand.qError;
      if (cand.certifiedBound < best.certifiedBound) best = std::move(cand);
    }
    if (best.certifiedBound < eps) return best;
  }
  throw ApproximationFailure("polynomialSurrogate: degree cap " + std::to_string(opts.degreeCap) +
                                 " reached with certified error " + std::to_string(best.certifiedBound),
                             best.certifiedBound);
}

/// || T~ - p(T^*T) T q(T^*T) || in operator norm.
inline double surrogateError(const PolynomialSurrogate& s, const Operator& t) {
  return opNorm(aluthge(t).matrix() - s.apply(t).matrix());
}

// ---------------------------------------------------------------------------
// Continuity

/// max_i || T~ - S_i~ || over S_i = T + delta E_i, E_i unit-norm Ginibre directions
/// drawn from trialEngine(seed, i). The same directions are used for every delta.
inline double continuityProbe(const Operator& t, double delta, int trials, std::uint64_t seed) {
  if (delta < 0.0) throw InvalidInput("continuityProbe: delta must be non-negative");
  if (delta == 0.0) return 0.0;
  const Matrix base = aluthge(t).matrix();
  double worst = 0.0;
  for (int i = 0; i < trials; ++i) {
    auto rng = random::trialEngine(seed, static_cast<std::uint64_t>(i));
    const Operator s(t.matrix() + delta * random::unitContraction(t.dim(), rng).matrix());
    worst = std::max(worst, opNorm(base - aluthge(s).matrix()));
  }
  return worst;
}

}  // namespace aluthge
