#include <cmath>
#include <limits>

#include "aluthge/operator.hpp"
#include "aluthge/random.hpp"
#include "test_support.hpp"

using namespace aluthge;
using testing_support::mat2;
using testing_support::maxAbs;

TEST(Operator, RejectsNonSquareAndNonFinite) {
  EXPECT_THROW(Operator(Matrix::Zero(2, 3)), DimensionError);
  EXPECT_THROW(Operator(Matrix::Zero(0, 0)), DimensionError);
  Matrix m = Matrix::Identity(2, 2);
  m(0, 1) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(Operator{m}, InvalidInput);
  EXPECT_THROW(Operator::identity(2) + Operator::identity(3), DimensionError);
}

TEST(Polar, PositiveDiagonal) {
  const auto pd = polar(Operator(mat2(2, 0, 0, 3)));
  EXPECT_LT(maxAbs(pd.unitary.matrix() - Matrix::Identity(2, 2)), 1e-14);
  EXPECT_LT(maxAbs(pd.modulus.matrix() - mat2(2, 0, 0, 3)), 1e-14);
  EXPECT_LT(maxAbs(pd.kernelProjection.matrix()), 1e-14);
}

TEST(Polar, NilpotentTwoByTwo) {
  const auto pd = polar(Operator(mat2(0, 1, 0, 0)));
  EXPECT_LT(maxAbs(pd.modulus.matrix() - mat2(0, 0, 0, 1)), 1e-14);
  EXPECT_LT(maxAbs(pd.kernelProjection.matrix() - mat2(1, 0, 0, 0)), 1e-14);
  const Matrix& u = pd.unitary.matrix();
  EXPECT_LT(maxAbs(u.adjoint() * u - Matrix::Identity(2, 2)), 1e-14);
  EXPECT_LT(std::abs(u(0, 1) - 1.0), 1e-14);  // U e2 = e1
  EXPECT_LT(std::abs(u(1, 1)), 1e-14);
}

TEST(Polar, UnitaryInputAndReconstruction) {
  auto rng = random::trialEngine(11, 0);
  const Operator u = random::haarUnitary(5, rng);
  const auto pd = polar(u);
  EXPECT_LT(maxAbs(pd.modulus.matrix() - Matrix::Identity(5, 5)), 1e-12);
  EXPECT_LT(maxAbs(pd.unitary.matrix() - u.matrix()), 1e-12);
  EXPECT_LT(maxAbs(pd.kernelProjection.matrix()), 1e-14);

  for (int trial = 0; trial < 10; ++trial) {
    auto r = random::trialEngine(12, trial);
    const Operator t = random::ginibre(6, r);
    const auto q = polar(t);
    EXPECT_LT(maxAbs(q.unitary.matrix() * q.modulus.matrix() - t.matrix()), 1e-12);
  }
  EXPECT_THROW(polar(u, -1.0), InvalidInput);
}

TEST(HermitianFunction, Examples) {
  const auto sq = hermitianFunction(Operator(mat2(0, 0, 0, 4)), [](double x) { return std::sqrt(x); });
  EXPECT_LT(maxAbs(sq.matrix() - mat2(0, 0, 0, 2)), 1e-14);

  Matrix one(1, 1);
  one << 1.0;
  const auto lg = hermitianFunction(Operator(one), [](double x) { return std::log(x); });
  EXPECT_EQ(lg(0, 0), Complex(0.0));

  // Conjugation covariance: f(R D R^*) = R f(D) R^*.
  const double c = std::cos(0.7), s = std::sin(0.7);
  const Matrix rot = mat2(c, -s, s, c);
  const Operator a(rot * mat2(1, 0, 0, 9) * rot.adjoint());
  const auto r = hermitianFunction(a, [](double x) { return std::sqrt(x); });
  EXPECT_LT(maxAbs(r.matrix() - rot * mat2(1, 0, 0, 3) * rot.adjoint()), 1e-13);
}

TEST(HermitianFunction, Errors) {
  EXPECT_THROW(hermitianFunction(Operator(mat2(0, 1, 0, 0)), [](double x) { return x; }), InvalidInput);
  EXPECT_THROW(hermitianFunction(Operator(mat2(-1, 0, 0, 1)), [](double x) { return x; }), InvalidInput);
  EXPECT_THROW(hermitianFunction(Operator(mat2(0, 0, 0, 1)), [](double x) { return std::log(x); }), DomainError);
  // Tiny negative eigenvalues are clamped to 0.
  const auto ok = hermitianFunction(Operator(mat2(-1e-15, 0, 0, 1)), [](double x) { return std::sqrt(x); });
  EXPECT_EQ(ok(0, 0), Complex(0.0));
}

TEST(Norms, Examples) {
  EXPECT_NEAR(opNorm(Operator::identity(4)), 1.0, 1e-15);
  EXPECT_NEAR(traceNorm2(Operator::identity(4)), 1.0, 1e-15);
  EXPECT_NEAR(opNorm(Operator(mat2(0, 0, 0, 2))), 2.0, 1e-15);
  EXPECT_NEAR(traceNorm2(Operator(mat2(0, 0, 0, 2))), std::sqrt(2.0), 1e-15);
  for (int trial = 0; trial < 20; ++trial) {
    auto rng = random::trialEngine(13, trial);
    const Operator t = random::ginibre(8, rng);
    EXPECT_LE(traceNorm2(t), opNorm(t) * (1 + 1e-14));
  }
}

TEST(NormalityDefect, Examples) {
  EXPECT_NEAR(normalityDefect(Operator(mat2(0, 1, 0, 0))), 1.0, 1e-15);
  EXPECT_LT(normalityDefect(Operator(mat2(1, Complex(2, 1), Complex(2, -1), 3))), 1e-14);
  auto rng = random::trialEngine(14, 0);
  EXPECT_LT(normalityDefect(random::haarUnitary(6, rng)), 1e-13);
}

TEST(Eigenvalues, NilpotentGivesExactZeros) {
  Matrix m = Matrix::Zero(4, 4);
  m(0, 1) = 3.0;
  m(1, 2) = 0.5;
  m(2, 3) = 7.0;
  for (const auto& z : eigenvalues(m)) EXPECT_EQ(z, Complex(0.0));
  EXPECT_EQ(spectralRadius(Operator(m)), 0.0);
}

TEST(Random, EnsemblesAreReproducibleAndShaped) {
  auto a = random::trialEngine(99, 3);
  auto b = random::trialEngine(99, 3);
  EXPECT_EQ(random::ginibre(5, a).matrix(), random::ginibre(5, b).matrix());
  auto c = random::trialEngine(99, 4);
  const Operator u = random::haarUnitary(7, c);
  EXPECT_LT(maxAbs(u.matrix().adjoint() * u.matrix() - Matrix::Identity(7, 7)), 1e-13);
  const Operator n = random::randomNormal(7, c);
  EXPECT_LT(normalityDefect(n), 1e-12);
  const Operator r = random::ginibreWithNorm(7, 1.7, c);
  EXPECT_NEAR(opNorm(r), 1.7, 1e-12);
}
