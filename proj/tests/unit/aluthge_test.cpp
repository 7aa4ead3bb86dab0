#include <cmath>

#include "aluthge/aluthge.hpp"
#include "aluthge/brown.hpp"
#include "aluthge/crossed_product.hpp"
#include "test_support.hpp"

using namespace aluthge;
using testing_support::mat2;
using testing_support::maxAbs;

TEST(Aluthge, NormalIsFixed) {
  for (int trial = 0; trial < 10; ++trial) {
    auto rng = random::trialEngine(21, trial);
    const Operator n = random::randomNormal(6, rng);
    EXPECT_LT(maxAbs(aluthge::aluthge(n).matrix() - n.matrix()), 1e-10);
  }
}

TEST(Aluthge, NilpotentGoesToZero) {
  EXPECT_LT(maxAbs(aluthge::aluthge(Operator(mat2(0, 1, 0, 0))).matrix()), 1e-15);
}

TEST(Aluthge, MatchesClosedFormAtOneStep) {
  auto rng = random::trialEngine(22, 0);
  const auto p = random::randomPermutationWeight(9, rng);
  EXPECT_LT(traceNorm2(aluthge::aluthge(densify(p)).matrix() - densify(closedFormIterate(p, 1)).matrix()), 1e-12);
}

TEST(Aluthge, IndependentOfUnitaryExtension) {
  const Operator t(mat2(0, 1, 0, 0));
  const Operator swap(mat2(0, 1, 1, 0));
  const Operator twisted(mat2(0, 1, Complex(0, 1), 0));
  EXPECT_LT(maxAbs(aluthge::aluthge(t, swap).matrix() - aluthge::aluthge(t, twisted).matrix()), 1e-15);
  EXPECT_LT(maxAbs(aluthge::aluthge(t, swap).matrix() - aluthge::aluthge(t).matrix()), 1e-15);
}

TEST(Aluthge, PreservesSpectrum) {
  for (int trial = 0; trial < 20; ++trial) {
    auto rng = random::trialEngine(23, trial);
    const Operator t = random::ginibre(8, rng);
    EXPECT_LT(measureDistance(brownMeasure(t), brownMeasure(aluthge::aluthge(t))), 1e-7);
  }
}

TEST(Iterate, NormalConvergesAtStepZero) {
  auto rng = random::trialEngine(24, 0);
  const auto trace = iterate(random::randomNormal(5, rng), 50, 1e-8);
  ASSERT_TRUE(trace.converged);
  EXPECT_EQ(*trace.convergedAt, 0);
}

TEST(Iterate, NilpotentLimitIsZero) {
  const Operator t(mat2(0, 1, 0, 0));
  const auto trace = iterate(t, 10, 1e-12, Operator::zero(2));
  ASSERT_TRUE(trace.converged);
  EXPECT_EQ(*trace.convergedAt, 1);
  EXPECT_LT(maxAbs(trace.limit->matrix()), 1e-15);
  EXPECT_EQ(*trace.steps[1].distToLimit, 0.0);
  EXPECT_NEAR(*trace.steps[0].distToLimit, std::sqrt(0.5), 1e-15);
}

TEST(Iterate, RandomConvergesAndNormsDecrease) {
  auto rng = random::trialEngine(25, 0);
  const Operator t = random::ginibre(6, rng);
  const auto trace = iterate(t, 500, 1e-8);
  ASSERT_TRUE(trace.converged);
  EXPECT_LT(trace.limitNormalityDefect, 1e-6);
  for (std::size_t k = 1; k < trace.steps.size(); ++k) {
    EXPECT_LE(trace.steps[k].traceNorm2, trace.steps[k - 1].traceNorm2 + 1e-12);
    EXPECT_LE(trace.steps[k].opNorm, trace.steps[k - 1].opNorm + 1e-12);
  }
}

TEST(Iterate, ValidatesArguments) {
  const Operator t = Operator::identity(2);
  EXPECT_THROW(iterate(t, 0, 1e-8), InvalidInput);
  EXPECT_THROW(iterate(t, 5, 0.0), InvalidInput);
  EXPECT_THROW(iterate(t, 5, 1e-8, Operator::identity(3)), DimensionError);
}

TEST(Regularizer, Examples) {
  // |T| >= 1/n: A_n = |T|^{1/2}.
  const Operator t(mat2(0, 2, 0.5, 0));
  const Matrix root = hermitianFunction(polar(t).modulus, [](double x) { return std::sqrt(x); }).matrix();
  EXPECT_LT(maxAbs(regularizer(t, 4).matrix() - root), 1e-14);
  EXPECT_LT(maxAbs(regularizer(Operator::zero(3), 9).matrix() - Matrix::Identity(3, 3) / 3.0), 1e-15);
}

TEST(Regularizer, FiveBoundsOnRandomMatrices) {
  for (int trial = 0; trial < 20; ++trial) {
    auto rng = random::trialEngine(26, trial);
    const Operator t = random::ginibre(8, rng);
    for (std::uint64_t n : {4u, 16u, 64u, 100u, 256u}) {
      for (const auto& b : regularizerBounds(t, n)) EXPECT_TRUE(b.holds()) << b.lhs << " vs " << b.rhs;
    }
  }
}

TEST(KernelRegularizerGap, Examples) {
  EXPECT_LT(kernelRegularizerGap(Operator(mat2(0, 0, 0, 1)), 2), 1e-15);
  const double expected = (1.0 - std::sqrt(2.0) / 2.0) / std::sqrt(2.0);
  EXPECT_NEAR(kernelRegularizerGap(Operator(mat2(0, 0, 0, 0.25)), 2), expected, 1e-14);
  auto rng = random::trialEngine(27, 0);
  const Operator u = random::haarUnitary(4, rng);
  EXPECT_LT(kernelRegularizerGap(u, 1000), 1e-13);
}

TEST(Chebyshev, InterpolatesSmoothFunction) {
  const auto s = chebyshevInterpolant([](double x) { return std::exp(x); }, -1.0, 2.0, 24);
  for (double x = -1.0; x <= 2.0; x += 0.01) EXPECT_NEAR(s(x), std::exp(x), 1e-13);
  Matrix d = Matrix::Zero(2, 2);
  d(0, 0) = 0.5;
  d(1, 1) = 1.5;
  const Matrix e = s(d);
  EXPECT_NEAR(e(0, 0).real(), std::exp(0.5), 1e-13);
  EXPECT_NEAR(e(1, 1).real(), std::exp(1.5), 1e-13);
}

TEST(PolynomialSurrogate, MeetsToleranceOnContractions) {
  const auto s = polynomialSurrogate(2.0, 0.1);
  EXPECT_LT(s.certifiedBound, 0.1);
  EXPECT_EQ(surrogateError(s, Operator::zero(4)), 0.0);
  for (int trial = 0; trial < 10; ++trial) {
    auto rng = random::trialEngine(28, trial);
    EXPECT_LT(surrogateError(s, random::ginibreWithNorm(6, 2.0 * (trial + 1) / 10.0, rng)), 0.1);
  }
  const auto unit = polynomialSurrogate(1.0, 0.1);
  auto rng = random::trialEngine(28, 99);
  EXPECT_LT(surrogateError(unit, random::haarUnitary(5, rng)), 0.1);
}

TEST(PolynomialSurrogate, ReportsFailureAtDegreeCap) {
  try {
    polynomialSurrogate(2.0, 1e-6, {16, 32});
    FAIL() << "expected ApproximationFailure";
  } catch (const ApproximationFailure& e) {
    EXPECT_GT(e.achieved_error, 1e-6);
  }
  EXPECT_THROW(polynomialSurrogate(0.5, 0.1), InvalidInput);
}

TEST(ContinuityProbe, ZeroAndHalving) {
  auto rng = random::trialEngine(29, 0);
  const Operator t = random::ginibre(5, rng);
  EXPECT_EQ(continuityProbe(t, 0.0, 8, 1), 0.0);
  double prev = continuityProbe(t, 1e-2, 32, 7);
  for (double d = 5e-3; d > 1e-5; d /= 2) {
    const double cur = continuityProbe(t, d, 32, 7);
    EXPECT_LE(cur, prev + 1e-9);
    prev = cur;
  }
  EXPECT_THROW(continuityProbe(t, -1.0, 1, 1), InvalidInput);
}
