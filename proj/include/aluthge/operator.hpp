#pragma once

// Dense complex operators on C^N with the normalized trace tau = Tr/N,
// polar decomposition, Hermitian functional calculus and the two norms
// (operator norm and ||x||_2 = tau(x^* x)^{1/2}).

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#define lapack_complex_float std::complex<float>
#define lapack_complex_double std::complex<double>
#include <lapacke.h>

#include "aluthge/errors.hpp"

namespace aluthge {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using RealVector = Eigen::VectorXd;
using Index = Eigen::Index;

/// An element T of the finite von Neumann algebra M_N(C): a square matrix
/// with finite entries. Immutable once constructed.
class Operator {
 public:
  explicit Operator(Matrix entries) : m_(std::move(entries)) {
    if (m_.rows() != m_.cols()) {
      throw DimensionError("operator must be square, got " + std::to_string(m_.rows()) + "x" +
                           std::to_string(m_.cols()));
    }
    if (m_.rows() == 0) throw DimensionError("operator dimension must be positive");
    if (!m_.allFinite()) throw InvalidInput("operator has non-finite entries");
  }

  static Operator identity(Index n) { return Operator(Matrix::Identity(n, n)); }
  static Operator zero(Index n) { return Operator(Matrix::Zero(n, n)); }
  static Operator diagonal(const Vector& d) { return Operator(Matrix(d.asDiagonal())); }
  static Operator diagonal(const RealVector& d) { return diagonal(Vector(d.cast<Complex>())); }

  Index dim() const { return m_.rows(); }
  const Matrix& matrix() const { return m_; }
  Complex operator()(Index i, Index j) const { return m_(i, j); }

  Operator adjoint() const { return Operator(m_.adjoint()); }

  friend Operator operator+(const Operator& a, const Operator& b) {
    requireSameDim(a, b);
    return Operator(a.m_ + b.m_);
  }
  friend Operator operator-(const Operator& a, const Operator& b) {
    requireSameDim(a, b);
    return Operator(a.m_ - b.m_);
  }
  friend Operator operator*(const Operator& a, const Operator& b) {
    requireSameDim(a, b);
    return Operator(a.m_ * b.m_);
  }
  friend Operator operator*(Complex s, const Operator& a) { return Operator(s * a.m_); }

 private:
  static void requireSameDim(const Operator& a, const Operator& b) {
    if (a.dim() != b.dim()) {
      throw DimensionError("dimension mismatch: " + std::to_string(a.dim()) + " vs " +
                           std::to_string(b.dim()));
    }
  }

  Matrix m_;
};

inline RealVector singularValues(const Matrix& m) {
  return Eigen::JacobiSVD<Matrix>(m).singularValues();
}

/// Largest singular value.
inline double opNorm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  return singularValues(m)(0);
}
inline double opNorm(const Operator& t) { return opNorm(t.matrix()); }

/// (Tr(T^* T)/N)^{1/2}; ||I||_2 = 1 in every dimension.
inline double traceNorm2(const Matrix& m) {
  return std::sqrt(m.squaredNorm() / static_cast<double>(m.rows()));
}
inline double traceNorm2(const Operator& t) { return traceNorm2(t.matrix()); }

inline double normalityDefect(const Matrix& m) {
  const Matrix c = m.adjoint() * m - m * m.adjoint();
  return traceNorm2(c);
}
inline double normalityDefect(const Operator& t) { return normalityDefect(t.matrix()); }

inline bool isHermitian(const Matrix& m, double relTol = 1e-10) {
  const double scale = std::max(1.0, m.norm());
  return (m - m.adjoint()).norm() <= relTol * scale;
}

/// Numerical-rank convention: machine epsilon * N * ||T||.
inline double defaultRankTolerance(const Matrix& m) {
  return std::numeric_limits<double>::epsilon() * static_cast<double>(m.rows()) * opNorm(m);
}

namespace detail {

// T = W diag(sigma) V^*. Singular values at or below the rank tolerance are
// set to exactly zero; U = W V^* is then a unitary extension of the polar
// partial isometry.
struct SvdFactors {
  Matrix left;
  Matrix right;
  RealVector sigma;
  Index rank = 0;
};

inline SvdFactors svdFactors(const Matrix& m, std::optional<double> rankTol) {
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  if (svd.info() != Eigen::Success) throw NumericalError("SVD did not converge");
  SvdFactors f{svd.matrixU(), svd.matrixV(), svd.singularValues(), 0};
  const double tol =
      rankTol ? *rankTol
              : std::numeric_limits<double>::epsilon() * static_cast<double>(m.rows()) *
                    (f.sigma.size() ? f.sigma(0) : 0.0);
  for (Index i = 0; i < f.sigma.size(); ++i) {
    if (f.sigma(i) > tol) {
      ++f.rank;
    } else {
      f.sigma(i) = 0.0;
    }
  }
  return f;
}

inline Matrix positivePart(const Matrix& right, const RealVector& values) {
  return right * values.cast<Complex>().asDiagonal() * right.adjoint();
}

}  // namespace detail

/// T = U |T| with U unitary, |T| = (T^* T)^{1/2} and P0 the projection onto ker T.
struct PolarDecomposition {
  Operator unitary;
  Operator modulus;
  Operator kernelProjection;
};

inline PolarDecomposition polar(const Operator& t, std::optional<double> rankTol = std::nullopt) {
  if (rankTol && !(*rankTol >= 0.0)) throw InvalidInput("rank tolerance must be non-negative");
  const auto f = detail::svdFactors(t.matrix(), rankTol);
  const Index n = t.dim();
  Matrix kernel = Matrix::Zero(n, n);
  for (Index i = f.rank; i < n; ++i) kernel += f.right.col(i) * f.right.col(i).adjoint();
  return {Operator(f.left * f.right.adjoint()), Operator(detail::positivePart(f.right, f.sigma)),
          Operator(kernel)};
}

/// Applies a scalar function to a Hermitian positive semidefinite operator by
/// eigendecomposition. Eigenvalues in [-1e-12 ||A||, 0) are clamped to 0.
template <class F>
Operator hermitianFunction(const Operator& a, F&& f) {
  const Matrix& m = a.matrix();
  if (!isHermitian(m)) throw InvalidInput("hermitianFunction: operator is not Hermitian");
  Eigen::SelfAdjointEigenSolver<Matrix> eig(m);
  if (eig.info() != Eigen::Success) throw NumericalError("Hermitian eigensolver failed");
  RealVector values = eig.eigenvalues();
  const double scale = values.cwiseAbs().maxCoeff();
  const double clamp = 1e-12 * scale;
  for (Index i = 0; i < values.size(); ++i) {
    double x = values(i);
    if (x < 0.0) {
      if (x < -clamp) {
        throw InvalidInput("hermitianFunction: operator is not positive semidefinite (eigenvalue " +
                           std::to_string(x) + ")");
      }
      x = 0.0;
    }
    const double y = f(x);
    if (!std::isfinite(y)) {
      throw DomainError("hermitianFunction: function undefined at eigenvalue " + std::to_string(x));
    }
    values(i) = y;
  }
  return Operator(detail::positivePart(eig.eigenvectors(), values));
}

/// Eigenvalues of a general square matrix (LAPACK zgeev, with balancing).
inline std::vector<Complex> eigenvalues(const Matrix& m) {
  const auto n = static_cast<lapack_int>(m.rows());
  Matrix work = m;
  std::vector<Complex> w(static_cast<std::size_t>(n));
  Complex dummy{};
  const lapack_int info = LAPACKE_zgeev(LAPACK_COL_MAJOR, 'N', 'N', n, work.data(), n, w.data(),
                                        &dummy, 1, &dummy, 1);
  if (info != 0) {
    throw NumericalError("zgeev failed (info = " + std::to_string(info) +
                         "), condition estimate ||T||_F = " + std::to_string(m.norm()));
  }
  return w;
}
inline std::vector<Complex> eigenvalues(const Operator& t) { return eigenvalues(t.matrix()); }

inline double spectralRadius(const Operator& t) {
  double r = 0.0;
  for (const auto& z : eigenvalues(t)) r = std::max(r, std::abs(z));
  return r;
}

}  // namespace aluthge
