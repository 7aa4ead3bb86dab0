#pragma once

// Operators T = U|T| in the crossed product of a finite probability space
// (X, mu) by a mu-preserving permutation alpha. U implements alpha by
// U f U^* = f o alpha, which in matrix form is U e_j = e_{alpha^{-1}(j)}, so
// that (U v)(x) = v(alpha(x)); |T| = diag(w).

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <locale>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "aluthge/aluthge.hpp"
#include "aluthge/binomial.hpp"
#include "aluthge/errors.hpp"
#include "aluthge/operator.hpp"

namespace aluthge {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// Extended-real function b : X -> [-inf, R]. -inf is allowed, +inf and NaN are not.
class LogWeightVector {
 public:
  LogWeightVector() = default;
  LogWeightVector(std::vector<double> values) : v_(std::move(values)) {  // NOLINT: implicit from reals
    for (double x : v_) {
      if (std::isnan(x) || x == std::numeric_limits<double>::infinity()) {
        throw InvalidInput("LogWeightVector: entries must lie in [-inf, R]");
      }
    }
  }

  /// log w with log 0 = -inf.
  static LogWeightVector logOf(const std::vector<double>& w) {
    std::vector<double> out(w.size());
    std::transform(w.begin(), w.end(), out.begin(), [](double x) { return x > 0.0 ? std::log(x) : kNegInf; });
    return LogWeightVector(std::move(out));
  }

  std::size_t size() const { return v_.size(); }
  double operator[](std::size_t i) const { return v_[i]; }
  const std::vector<double>& values() const { return v_; }
  bool hasNegInf() const { return std::any_of(v_.begin(), v_.end(), [](double x) { return x == kNegInf; }); }

  /// exp pointwise with exp(-inf) = 0.
  std::vector<double> exp() const {
    std::vector<double> out(v_.size());
    std::transform(v_.begin(), v_.end(), out.begin(), [](double x) { return std::exp(x); });
    return out;
  }

 private:
  std::vector<double> v_;
};

class PermutationWeightOperator {
 public:
  /// Uniform mu = 1/N.
  PermutationWeightOperator(std::vector<std::size_t> alpha, std::vector<double> weights)
      : PermutationWeightOperator(alpha, std::vector<double>(alpha.size(), 1.0 / static_cast<double>(alpha.size())),
                                  std::move(weights)) {}

  PermutationWeightOperator(std::vector<std::size_t> alpha, std::vector<double> mu, std::vector<double> weights)
      : alpha_(std::move(alpha)), mu_(std::move(mu)), w_(std::move(weights)) {
    const std::size_t n = alpha_.size();
    if (n == 0) throw InvalidInput("PermutationWeightOperator: empty space");
    if (mu_.size() != n || w_.size() != n) throw DimensionError("PermutationWeightOperator: length mismatch");
    inverse_.assign(n, n);
    for (std::size_t x = 0; x < n; ++x) {
      if (alpha_[x] >= n || inverse_[alpha_[x]] != n) {
        throw InvalidInput("PermutationWeightOperator: alpha is not a bijection of {0..N-1}");
      }
      inverse_[alpha_[x]] = x;
    }
    double total = 0.0;
    for (double m : mu_) {
      if (!(m > 0.0) || !std::isfinite(m)) throw InvalidInput("PermutationWeightOperator: mu must be positive");
      total += m;
    }
    if (std::abs(total - 1.0) > 1e-12) throw InvalidInput("PermutationWeightOperator: mu must sum to 1");
    for (std::size_t x = 0; x < n; ++x) {
      if (std::abs(mu_[alpha_[x]] - mu_[x]) > 1e-12) {
        throw InvalidInput("PermutationWeightOperator: mu is not alpha-invariant (trace would not be tracial)");
      }
    }
    for (double w : w_) {
      if (!(w >= 0.0) || !std::isfinite(w)) throw InvalidInput("PermutationWeightOperator: weights must be >= 0");
    }
  }

  std::size_t size() const { return alpha_.size(); }
  const std::vector<std::size_t>& alpha() const { return alpha_; }
  const std::vector<std::size_t>& alphaInverse() const { return inverse_; }
  const std::vector<double>& mu() const { return mu_; }
  const std::vector<double>& weights() const { return w_; }

  PermutationWeightOperator withWeights(std::vector<double> w) const { return {alpha_, mu_, std::move(w)}; }
  PermutationWeightOperator withAlpha(std::vector<std::size_t> alpha) const { return {std::move(alpha), mu_, w_}; }

  /// The same weights over alpha^{-1}.
  PermutationWeightOperator inverted() const { return withAlpha(inverse_); }

 private:
  std::vector<std::size_t> alpha_;
  std::vector<double> mu_;
  std::vector<double> w_;
  std::vector<std::size_t> inverse_;
};

/// Entry w(j) at row alpha^{-1}(j), column j.
inline Operator densify(const PermutationWeightOperator& p) {
  const auto n = static_cast<Index>(p.size());
  Matrix m = Matrix::Zero(n, n);
  for (std::size_t j = 0; j < p.size(); ++j) {
    m(static_cast<Index>(p.alphaInverse()[j]), static_cast<Index>(j)) = p.weights()[j];
  }
  return Operator(std::move(m));
}

inline Operator unitaryOf(const PermutationWeightOperator& p) {
  return densify(p.withWeights(std::vector<double>(p.size(), 1.0)));
}

/// alpha-cycles, each listed as x, alpha(x), alpha^2(x), ... from its smallest
/// element; cycles ordered by smallest element.
inline std::vector<std::vector<std::size_t>> orbits(const PermutationWeightOperator& p) {
  std::vector<std::vector<std::size_t>> out;
  std::vector<bool> seen(p.size(), false);
  for (std::size_t start = 0; start < p.size(); ++start) {
    if (seen[start]) continue;
    auto& cycle = out.emplace_back();
    for (std::size_t x = start; !seen[x]; x = p.alpha()[x]) {
      seen[x] = true;
      cycle.push_back(x);
    }
  }
  return out;
}

inline std::size_t orbitLcm(const PermutationWeightOperator& p) {
  std::size_t l = 1;
  for (const auto& c : orbits(p)) l = std::lcm(l, c.size());
  return l;
}

/// E^alpha(b): on each orbit O, sum_O mu b / sum_O mu; -inf on orbits where b
/// takes the value -inf somewhere.
inline LogWeightVector conditionalExpectation(const LogWeightVector& b, const PermutationWeightOperator& p) {
  if (b.size() != p.size()) throw DimensionError("conditionalExpectation: length mismatch");
  std::vector<double> out(p.size());
  for (const auto& cycle : orbits(p)) {
    std::vector<double> terms;
    double mass = 0.0;
    bool forced = false;
    for (std::size_t x : cycle) {
      if (b[x] == kNegInf) forced = true;
      terms.push_back(p.mu()[x] * b[x]);
      mass += p.mu()[x];
    }
    const double value = forced ? kNegInf : detail::compensatedSum(terms) / mass;
    for (std::size_t x : cycle) out[x] = value;
  }
  return LogWeightVector(std::move(out));
}

/// H = exp(E^alpha(log w)): orbitwise mu-weighted geometric mean of the weights.
inline std::vector<double> limitH(const PermutationWeightOperator& p) {
  return conditionalExpectation(LogWeightVector::logOf(p.weights()), p).exp();
}

/// Largest n for which every C(n,k)/2^n is a normal double, so no exponent
/// underflows to 0 and 0 * (-inf) cannot arise in the log-space products.
inline constexpr int kMaxClosedFormN = 1022;

/// |T~^(n)| = prod_{k=0}^n (w o alpha^{-k})^{C(n,k)/2^n}, evaluated in log space.
inline PermutationWeightOperator closedFormIterate(const PermutationWeightOperator& p, int n) {
  if (n < 0) throw InvalidInput("closedFormIterate: n must be >= 0");
  if (n > kMaxClosedFormN) {
    throw PrecisionWarning("closedFormIterate: binomial exponents underflow for n > " +
                           std::to_string(kMaxClosedFormN));
  }
  if (n == 0) return p;
  const auto c = binomialWeights(n);
  const auto logw = LogWeightVector::logOf(p.weights());
  std::vector<double> out(p.size());
  std::vector<double> terms(c.size());
  for (std::size_t x = 0; x < p.size(); ++x) {
    bool zero = false;
    std::size_t y = x;
    for (std::size_t k = 0; k < c.size(); ++k, y = p.alphaInverse()[y]) {
      if (logw[y] == kNegInf) {
        zero = true;
        break;
      }
      terms[k] = c[k] * logw[y];
    }
    out[x] = zero ? 0.0 : std::exp(detail::compensatedSum(terms));
  }
  return p.withWeights(std::move(out));
}

enum class PowerSide { Right, Left };

/// Diagonal of [(T^m)^* T^m]^{1/2m} (Right) or [T^m (T^m)^*]^{1/2m} (Left):
///   Right: (prod_{k=0}^{m-1} w(alpha^{-k} x))^{1/m}
///   Left:  (prod_{k=1}^{m}   w(alpha^{k} x))^{1/m}
inline std::vector<double> powerLimitStep(const PermutationWeightOperator& p, int m, PowerSide side) {
  if (m < 1) throw InvalidInput("powerLimitStep: m must be >= 1");
  const auto logw = LogWeightVector::logOf(p.weights());
  const auto& step = side == PowerSide::Right ? p.alphaInverse() : p.alpha();
  std::vector<double> out(p.size());
  std::vector<double> terms(static_cast<std::size_t>(m));
  for (std::size_t x = 0; x < p.size(); ++x) {
    std::size_t y = side == PowerSide::Right ? x : p.alpha()[x];
    bool zero = false;
    for (int k = 0; k < m; ++k, y = step[y]) {
      if (logw[y] == kNegInf) {
        zero = true;
        break;
      }
      terms[static_cast<std::size_t>(k)] = logw[y];
    }
    out[x] = zero ? 0.0 : std::exp(detail::compensatedSum(terms) / m);
  }
  return out;
}

/// tau(U^k f) for the mu-weighted trace tau(X) = sum_x mu(x) X_xx.
///
/// In the finite model U^L = 1 on an orbit of length L, so the trace equals
/// sum over the fixed points of alpha^k of mu f (periodicModel). This agrees
/// with the free value delta_{k,0} int f dmu exactly when k = 0 or no orbit
/// length divides k.
struct TraceModelReport {
  Complex matrixTrace;
  Complex periodicModel;
  Complex freeModel;
  Complex difference;  // matrixTrace - periodicModel
  bool freeModelApplies = false;
};

inline TraceModelReport traceModelCheck(const PermutationWeightOperator& p, int k, const Vector& f) {
  const auto n = static_cast<Index>(p.size());
  if (f.size() != n) throw DimensionError("traceModelCheck: length mismatch");
  if (std::abs(k) > n) throw InvalidInput("traceModelCheck: |k| must be <= N");

  const Matrix u = unitaryOf(p).matrix();
  const Matrix base = k >= 0 ? u : Matrix(u.adjoint());
  Matrix power = Matrix::Identity(n, n);
  for (int i = 0; i < std::abs(k); ++i) power = power * base;
  const Matrix x = power * f.asDiagonal();

  TraceModelReport r;
  Complex integral{};
  for (Index i = 0; i < n; ++i) {
    const double mu = p.mu()[static_cast<std::size_t>(i)];
    r.matrixTrace += mu * x(i, i);
    integral += mu * f(i);
  }
  bool anyFixed = false;
  for (const auto& cycle : orbits(p)) {
    if (k % static_cast<int>(cycle.size()) != 0) continue;
    anyFixed = true;
    for (std::size_t y : cycle) r.periodicModel += p.mu()[y] * f(static_cast<Index>(y));
  }
  r.freeModel = k == 0 ? integral : Complex{};
  r.freeModelApplies = k == 0 || !anyFixed;
  r.difference = r.matrixTrace - r.periodicModel;
  return r;
}

/// mu-weighted 2-norm (sum_x mu(x) |v(x)|^2)^{1/2} of a diagonal.
inline double muNorm2(const PermutationWeightOperator& p, const std::vector<double>& v) {
  double acc = 0.0;
  for (std::size_t x = 0; x < p.size(); ++x) acc += p.mu()[x] * v[x] * v[x];
  return std::sqrt(acc);
}

struct CrossedLimit {
  Operator limit;          // U H
  std::vector<double> h;   // H = exp(E^alpha(log w))
  IterationTrace trace;    // closed-form iterates n = 0..maxN, distances to U H
};

/// Limit U H of the Aluthge iterates together with ||T~^(n) - U H||_2 for
/// n = 0..maxN, all from the closed form. Norms use the mu-weighted trace.
/// converged/convergedAt record the first n with distance below tol.
inline CrossedLimit aluthgeLimit(const PermutationWeightOperator& p, int maxN = 200, double tol = 1e-3) {
  if (maxN < 0) throw InvalidInput("aluthgeLimit: maxN must be >= 0");
  if (!(tol > 0.0)) throw InvalidInput("aluthgeLimit: tol must be positive");
  auto h = limitH(p);
  CrossedLimit out{densify(p.withWeights(h)), h, {}};
  for (int n = 0; n <= maxN; ++n) {
    const auto w = closedFormIterate(p, n).weights();
    std::vector<double> diff(w.size()), comm(w.size());
    for (std::size_t x = 0; x < w.size(); ++x) {
      diff[x] = w[x] - h[x];
      comm[x] = w[x] * w[x] - w[p.alpha()[x]] * w[p.alpha()[x]];
    }
    IterationStep step{n, muNorm2(p, w), *std::max_element(w.begin(), w.end()), muNorm2(p, comm),
                       muNorm2(p, diff)};
    out.trace.steps.push_back(step);
    if (!out.trace.converged && *step.distToLimit < tol) {
      out.trace.converged = true;
      out.trace.convergedAt = n;
    }
  }
  if (out.trace.converged) {
    out.trace.limit = out.limit;
    out.trace.limitNormalityDefect = normalityDefect(out.limit);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Plain-text record: N / alpha / mu / w, one line each.

namespace detail {

inline std::string formatDouble(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

template <class T>
std::vector<T> parseLine(std::istream& in, std::size_t expected, const char* what, int lineNo) {
  std::string line;
  if (!std::getline(in, line)) {
    throw InvalidInput(std::string("permutation-weight record: missing ") + what + " line " + std::to_string(lineNo));
  }
  std::istringstream ls(line);
  ls.imbue(std::locale::classic());
  std::vector<T> out;
  std::string token;
  while (ls >> token) {
    std::size_t used = 0;
    try {
      if constexpr (std::is_same_v<T, double>) {
        out.push_back(std::stod(token, &used));
      } else {
        if (token.front() == '-') throw std::invalid_argument(token);
        out.push_back(static_cast<T>(std::stoull(token, &used)));
      }
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != token.size()) {
      throw InvalidInput(std::string("permutation-weight record: malformed ") + what + " value '" + token +
                         "' on line " + std::to_string(lineNo));
    }
  }
  if (out.size() != expected) {
    throw InvalidInput(std::string("permutation-weight record: expected ") + std::to_string(expected) + " " + what +
                       " values on line " + std::to_string(lineNo) + ", got " + std::to_string(out.size()));
  }
  return out;
}

}  // namespace detail

inline void writePermutationWeight(std::ostream& out, const PermutationWeightOperator& p) {
  out << p.size() << '\n';
  for (std::size_t i = 0; i < p.size(); ++i) out << (i ? " " : "") << p.alpha()[i];
  out << '\n';
  for (std::size_t i = 0; i < p.size(); ++i) out << (i ? " " : "") << detail::formatDouble(p.mu()[i]);
  out << '\n';
  for (std::size_t i = 0; i < p.size(); ++i) out << (i ? " " : "") << detail::formatDouble(p.weights()[i]);
  out << '\n';
}

inline PermutationWeightOperator readPermutationWeight(std::istream& in) {
  const auto header = detail::parseLine<std::size_t>(in, 1, "N", 1);
  const std::size_t n = header[0];
  if (n == 0) throw InvalidInput("permutation-weight record: N must be positive");
  auto alpha = detail::parseLine<std::size_t>(in, n, "permutation", 2);
  auto mu = detail::parseLine<double>(in, n, "mu", 3);
  auto w = detail::parseLine<double>(in, n, "weight", 4);
  return {std::move(alpha), std::move(mu), std::move(w)};
}

}  // namespace aluthge

namespace aluthge::random {

/// Uniform random permutation, uniform mu, weights log-uniform on
/// [e^{-2}, e^{2}]; each weight is replaced by 0 with probability zeroProb.
inline PermutationWeightOperator randomPermutationWeight(std::size_t n, Engine& rng, double zeroProb = 0.0) {
  std::vector<std::size_t> alpha(n);
  std::iota(alpha.begin(), alpha.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(alpha[i - 1], alpha[pick(rng)]);
  }
  std::uniform_real_distribution<double> logw(-2.0, 2.0);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::vector<double> w(n);
  for (auto& x : w) {
    x = std::exp(logw(rng));
    if (zeroProb > 0.0 && coin(rng) < zeroProb) x = 0.0;
  }
  return {std::move(alpha), std::move(w)};
}

}  // namespace aluthge::random
