#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "aluthge/operator.hpp"

namespace aluthge {

/// Real polynomial on [lo, hi] stored in the Chebyshev basis:
/// p(s) = sum_k c_k T_k(x), x = (2s - lo - hi) / (hi - lo).
struct ChebyshevSeries {
  double lo = 0.0;
  double hi = 1.0;
  std::vector<double> coeffs;

  std::size_t degree() const { return coeffs.empty() ? 0 : coeffs.size() - 1; }

  double operator()(double s) const {
    const double x = (2.0 * s - lo - hi) / (hi - lo);
    double b1 = 0.0, b2 = 0.0;
    for (std::size_t k = coeffs.size(); k-- > 1;) {
      const double b0 = coeffs[k] + 2.0 * x * b1 - b2;
      b2 = b1;
      b1 = b0;
    }
    return (coeffs.empty() ? 0.0 : coeffs[0]) + x * b1 - b2;
  }

  /// p(A) by the matrix Clenshaw recurrence (only products and sums of A).
  Matrix operator()(const Matrix& a) const {
    const Index n = a.rows();
    const Matrix id = Matrix::Identity(n, n);
    const Matrix x = (2.0 * a - (lo + hi) * id) / (hi - lo);
    Matrix b1 = Matrix::Zero(n, n), b2 = Matrix::Zero(n, n);
    for (std::size_t k = coeffs.size(); k-- > 1;) {
      Matrix b0 = coeffs[k] * id + 2.0 * x * b1 - b2;
      b2 = std::move(b1);
      b1 = std::move(b0);
    }
    return (coeffs.empty() ? 0.0 : coeffs[0]) * id + x * b1 - b2;
  }
};

/// Interpolant of f at the degree+1 Chebyshev points of the first kind.
template <class F>
ChebyshevSeries chebyshevInterpolant(F&& f, double lo, double hi, std::size_t degree) {
  const std::size_t m = degree + 1;
  ChebyshevSeries series{lo, hi, std::vector<double>(m, 0.0)};
  for (std::size_t k = 0; k < m; ++k) {
    const double theta = std::numbers::pi * (static_cast<double>(k) + 0.5) / static_cast<double>(m);
    const double value = f(0.5 * (hi - lo) * std::cos(theta) + 0.5 * (hi + lo));
    for (std::size_t j = 0; j < m; ++j) {
      series.coeffs[j] += value * std::cos(static_cast<double>(j) * theta);
    }
  }
  for (auto& c : series.coeffs) c *= 2.0 / static_cast<double>(m);
  series.coeffs[0] *= 0.5;
  return series;
}

}  // namespace aluthge
