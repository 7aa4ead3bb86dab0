#pragma once

// Brown measure of a matrix (eigenvalue distribution weighted by the trace),
// the Fuglede-Kadison determinant, and an exact 1-Wasserstein comparison of
// finite atomic measures.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <istream>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "aluthge/crossed_product.hpp"
#include "aluthge/errors.hpp"
#include "aluthge/operator.hpp"

namespace aluthge {

inline constexpr double kAtomMergeTolerance = 1e-9;

/// Finite atomic probability measure on C.
class SpectralMeasure {
 public:
  SpectralMeasure(std::vector<Complex> atoms, std::vector<double> masses)
      : atoms_(std::move(atoms)), masses_(std::move(masses)) {
    if (atoms_.size() != masses_.size()) throw DimensionError("SpectralMeasure: atoms/masses length mismatch");
    if (atoms_.empty()) throw InvalidInput("SpectralMeasure: no atoms");
    double total = 0.0;
    for (std::size_t i = 0; i < atoms_.size(); ++i) {
      if (!std::isfinite(atoms_[i].real()) || !std::isfinite(atoms_[i].imag())) {
        throw InvalidInput("SpectralMeasure: non-finite atom");
      }
      if (!(masses_[i] > 0.0)) throw InvalidInput("SpectralMeasure: masses must be positive");
      total += masses_[i];
    }
    if (std::abs(total - 1.0) > 1e-12) throw InvalidInput("SpectralMeasure: masses must sum to 1");
  }

  const std::vector<Complex>& atoms() const { return atoms_; }
  const std::vector<double>& masses() const { return masses_; }
  std::size_t size() const { return atoms_.size(); }

  /// Atoms within tol of an earlier cluster representative are combined.
  /// Atoms are first sorted lexicographically, so the result is canonical.
  SpectralMeasure merged(double tol = kAtomMergeTolerance) const {
    std::vector<std::size_t> order(atoms_.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (atoms_[a].real() != atoms_[b].real()) return atoms_[a].real() < atoms_[b].real();
      return atoms_[a].imag() < atoms_[b].imag();
    });
    std::vector<Complex> atoms;
    std::vector<double> masses;
    for (std::size_t i : order) {
      bool placed = false;
      for (std::size_t j = 0; j < atoms.size(); ++j) {
        if (std::abs(atoms[j] - atoms_[i]) <= tol) {
          masses[j] += masses_[i];
          placed = true;
          break;
        }
      }
      if (!placed) {
        atoms.push_back(atoms_[i]);
        masses.push_back(masses_[i]);
      }
    }
    return {std::move(atoms), std::move(masses)};
  }

 private:
  std::vector<Complex> atoms_;
  std::vector<double> masses_;
};

/// Normalized counting measure on the eigenvalues of T.
inline SpectralMeasure brownMeasure(const Operator& t) {
  const auto eig = eigenvalues(t);
  return SpectralMeasure(eig, std::vector<double>(eig.size(), 1.0 / static_cast<double>(eig.size()))).merged();
}

/// Brown measure with respect to tau(X) = sum_x mu(x) X_xx. T must be block
/// diagonal (up to a permutation of the basis) with mu constant on each block;
/// each eigenvalue of a block then carries that block's per-point mass.
inline SpectralMeasure brownMeasure(const Operator& t, const std::vector<double>& mu) {
  const auto n = static_cast<std::size_t>(t.dim());
  if (mu.size() != n) throw DimensionError("brownMeasure: mu length mismatch");
  const Matrix& m = t.matrix();

  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (m(static_cast<Index>(i), static_cast<Index>(j)) != Complex{}) parent[find(i)] = find(j);

  std::vector<std::vector<std::size_t>> blocks;
  std::vector<std::size_t> blockOf(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t r = find(i);
    if (blockOf[r] == n) {
      blockOf[r] = blocks.size();
      blocks.emplace_back();
    }
    blocks[blockOf[r]].push_back(i);
  }

  std::vector<Complex> atoms;
  std::vector<double> masses;
  for (const auto& block : blocks) {
    const double mass = mu[block.front()];
    const auto k = static_cast<Index>(block.size());
    Matrix sub(k, k);
    for (Index a = 0; a < k; ++a) {
      if (std::abs(mu[block[static_cast<std::size_t>(a)]] - mass) > 1e-12) {
        throw InvalidInput("brownMeasure: mu is not constant on an invariant block");
      }
      for (Index b = 0; b < k; ++b) {
        sub(a, b) = m(static_cast<Index>(block[static_cast<std::size_t>(a)]),
                      static_cast<Index>(block[static_cast<std::size_t>(b)]));
      }
    }
    for (const auto& z : eigenvalues(sub)) {
      atoms.push_back(z);
      masses.push_back(mass);
    }
  }
  return SpectralMeasure(std::move(atoms), std::move(masses)).merged();
}

/// Dense eigen-solve of densify(P) under the mu-weighted trace.
inline SpectralMeasure brownMeasure(const PermutationWeightOperator& p) {
  return brownMeasure(densify(p), p.mu());
}

/// Per orbit O of length L: the L roots of lambda^L = prod_O w, each with mass mu(x).
inline SpectralMeasure closedFormBrownMeasure(const PermutationWeightOperator& p) {
  std::vector<Complex> atoms;
  std::vector<double> masses;
  for (const auto& cycle : orbits(p)) {
    const auto len = static_cast<double>(cycle.size());
    double logProduct = 0.0;
    bool zero = false;
    for (std::size_t x : cycle) {
      if (p.weights()[x] == 0.0) zero = true;
      else logProduct += std::log(p.weights()[x]);
    }
    const double radius = zero ? 0.0 : std::exp(logProduct / len);
    for (std::size_t j = 0; j < cycle.size(); ++j) {
      atoms.push_back(std::polar(radius, 2.0 * std::numbers::pi * static_cast<double>(j) / len));
      masses.push_back(p.mu()[cycle[j]]);
    }
  }
  return SpectralMeasure(std::move(atoms), std::move(masses)).merged();
}

/// exp(tau(log|T|)) = prod sigma_i^{1/N}; 0 when T is numerically singular.
inline double fkDeterminant(const Operator& t) {
  const auto f = detail::svdFactors(t.matrix(), std::nullopt);
  if (f.rank < t.dim()) return 0.0;
  double acc = 0.0;
  for (Index i = 0; i < f.sigma.size(); ++i) acc += std::log(f.sigma(i));
  return std::exp(acc / static_cast<double>(t.dim()));
}

/// exp(sum_x mu(x) log w(x)) for T = U diag(w).
inline double fkDeterminant(const PermutationWeightOperator& p) {
  double acc = 0.0;
  for (std::size_t x = 0; x < p.size(); ++x) {
    if (p.weights()[x] == 0.0) return 0.0;
    acc += p.mu()[x] * std::log(p.weights()[x]);
  }
  return std::exp(acc);
}

/// mu(closed disk of radius r about 0).
inline double diskMass(const SpectralMeasure& m, double r) {
  if (r < 0.0) throw InvalidInput("diskMass: radius must be >= 0");
  double acc = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i)
    if (std::abs(m.atoms()[i]) <= r + 1e-12) acc += m.masses()[i];
  return std::min(acc, 1.0);
}

inline SpectralMeasure rotate(const SpectralMeasure& m, double theta) {
  std::vector<Complex> atoms(m.atoms());
  const Complex phase = std::polar(1.0, theta);
  for (auto& z : atoms) z *= phase;
  return {std::move(atoms), m.masses()};
}

namespace detail {

/// Minimum-cost perfect assignment (Hungarian method with potentials, O(n^3)).
/// Returns the optimal total cost.
inline double minCostAssignment(const std::vector<std::vector<double>>& cost) {
  const std::size_t n = cost.size();
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
  std::vector<bool> used(n + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    match[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), false);
    do {
      used[j0] = true;
      const std::size_t i0 = match[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  double total = 0.0;
  for (std::size_t j = 1; j <= n; ++j) total += cost[match[j] - 1][j - 1];
  return total;
}

// Smallest G <= cap such that every mass is an integer multiple of 1/G within 1e-9.
inline std::optional<std::size_t> commonGranularity(const SpectralMeasure& a, const SpectralMeasure& b,
                                                    std::size_t cap) {
  auto fits = [](const SpectralMeasure& m, std::size_t g) {
    for (double x : m.masses()) {
      const double units = std::round(x * static_cast<double>(g));
      if (units < 1.0 || std::abs(x - units / static_cast<double>(g)) > 1e-9) return false;
    }
    return true;
  };
  for (std::size_t g = 1; g <= cap; ++g)
    if (fits(a, g) && fits(b, g)) return g;
  return std::nullopt;
}

inline std::vector<Complex> splitIntoUnits(const SpectralMeasure& m, std::size_t g) {
  std::vector<Complex> units;
  units.reserve(g);
  for (std::size_t i = 0; i < m.size(); ++i) {
    const auto count = static_cast<std::size_t>(std::round(m.masses()[i] * static_cast<double>(g)));
    units.insert(units.end(), count, m.atoms()[i]);
  }
  return units;
}

}  // namespace detail

inline constexpr std::size_t kMaxMassGranularity = 1024;

/// Exact 1-Wasserstein distance for measures whose masses share a common
/// denominator G <= 1024: both measures are split into G unit atoms and
/// matched by minimum-cost assignment.
inline double measureDistance(const SpectralMeasure& a, const SpectralMeasure& b) {
  const auto g = detail::commonGranularity(a, b, kMaxMassGranularity);
  if (!g) throw InvalidInput("measureDistance: masses have no common granularity 1/G with G <= 1024");
  const auto ua = detail::splitIntoUnits(a, *g);
  const auto ub = detail::splitIntoUnits(b, *g);
  if (ua.size() != *g || ub.size() != *g) throw InvalidInput("measureDistance: mass granularity mismatch");
  std::vector<std::vector<double>> cost(*g, std::vector<double>(*g));
  for (std::size_t i = 0; i < *g; ++i)
    for (std::size_t j = 0; j < *g; ++j) cost[i][j] = std::abs(ua[i] - ub[j]);
  return std::max(0.0, detail::minCostAssignment(cost) / static_cast<double>(*g));
}

// ---------------------------------------------------------------------------
// CSV: header "re,im,mass", one atom per row, 17 significant digits.

inline void writeMeasureCsv(std::ostream& out, const SpectralMeasure& m) {
  out << "re,im,mass\n";
  for (std::size_t i = 0; i < m.size(); ++i) {
    out << detail::formatDouble(m.atoms()[i].real()) << ',' << detail::formatDouble(m.atoms()[i].imag()) << ','
        << detail::formatDouble(m.masses()[i]) << '\n';
  }
}

inline SpectralMeasure readMeasureCsv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "re,im,mass") throw InvalidInput("measure CSV: missing header");
  std::vector<Complex> atoms;
  std::vector<double> masses;
  int lineNo = 1;
  while (std::getline(in, line)) {
    ++lineNo;
    if (line.empty()) continue;
    std::istringstream ls(line);
    ls.imbue(std::locale::classic());
    double re = 0, im = 0, mass = 0;
    char c1 = 0, c2 = 0;
    if (!(ls >> re >> c1 >> im >> c2 >> mass) || c1 != ',' || c2 != ',') {
      throw InvalidInput("measure CSV: malformed row on line " + std::to_string(lineNo));
    }
    atoms.emplace_back(re, im);
    masses.push_back(mass);
  }
  return {std::move(atoms), std::move(masses)};
}

}  // namespace aluthge
