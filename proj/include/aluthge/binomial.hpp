#pragma once

#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "aluthge/errors.hpp"

namespace aluthge {

namespace detail {

// Neumaier-compensated sum, fixed left-to-right order.
inline double compensatedSum(std::span<const double> xs) {
  double sum = 0.0, carry = 0.0;
  for (double x : xs) {
    const double t = sum + x;
    if (std::abs(sum) >= std::abs(x)) {
      carry += (sum - t) + x;
    } else {
      carry += (x - t) + sum;
    }
    sum = t;
  }
  return sum + carry;
}

}  // namespace detail

/// C(n,k)/2^n for k = 0..n. Computed outward from the central coefficient by
/// the ratio recursion c_{k+1} = c_k (n-k)/(k+1), mirrored so that weight k and
/// weight n-k are bit-identical, then renormalized to sum 1. Extreme tails
/// underflow to 0 once n exceeds ~1074.
inline std::vector<double> binomialWeights(int n) {
  if (n < 0) throw InvalidInput("binomialWeights: n must be >= 0");
  const auto size = static_cast<std::size_t>(n) + 1;
  std::vector<double> c(size, 0.0);
  const int mid = n / 2;
  const double dn = n;
  c[static_cast<std::size_t>(n - mid)] =
      std::exp(std::lgamma(dn + 1.0) - std::lgamma(mid + 1.0) - std::lgamma(dn - mid + 1.0) -
               dn * std::numbers::ln2);
  for (int k = n - mid; k < n; ++k) {
    c[static_cast<std::size_t>(k + 1)] =
        c[static_cast<std::size_t>(k)] * (dn - k) / static_cast<double>(k + 1);
  }
  for (int k = 0; k < n - mid; ++k) c[static_cast<std::size_t>(k)] = c[static_cast<std::size_t>(n - k)];
  const double total = detail::compensatedSum(c);
  for (auto& x : c) x /= total;
  return c;
}

}  // namespace aluthge
