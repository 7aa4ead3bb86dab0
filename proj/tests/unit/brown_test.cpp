#include <cmath>
#include <numbers>
#include <sstream>

#include "aluthge/brown.hpp"
#include "test_support.hpp"

using namespace aluthge;
using testing_support::kOmega;
using testing_support::mat2;

namespace {

SpectralMeasure atom(Complex z) { return {{z}, {1.0}}; }

PermutationWeightOperator threeCycle() { return {{1, 2, 0}, {1.0, 2.0, 4.0}}; }

}  // namespace

TEST(SpectralMeasure, Validation) {
  EXPECT_THROW(SpectralMeasure({1.0}, {0.5}), InvalidInput);
  EXPECT_THROW(SpectralMeasure({1.0, 2.0}, {1.0}), DimensionError);
  EXPECT_THROW(SpectralMeasure({1.0, 2.0}, {1.0, 0.0}), InvalidInput);
  const auto m = SpectralMeasure({1.0, 1.0 + 1e-12, 2.0}, {0.25, 0.25, 0.5}).merged();
  EXPECT_EQ(m.size(), 2u);
}

TEST(BrownMeasure, Examples) {
  const auto d = brownMeasure(Operator(mat2(1, 0, 0, Complex(0, 1))));
  EXPECT_LT(measureDistance(d, SpectralMeasure({1.0, Complex(0, 1)}, {0.5, 0.5})), 1e-14);
  const auto nil = brownMeasure(Operator(mat2(0, 1, 0, 0)));
  ASSERT_EQ(nil.size(), 1u);
  EXPECT_EQ(nil.atoms()[0], Complex(0.0));
  const SpectralMeasure cyc({2.0, 2.0 * kOmega, 2.0 * kOmega * kOmega}, {1.0 / 3, 1.0 / 3, 1.0 / 3});
  EXPECT_LT(measureDistance(brownMeasure(threeCycle()), cyc), 1e-12);
  EXPECT_LT(measureDistance(closedFormBrownMeasure(threeCycle()), cyc), 1e-14);
}

TEST(BrownMeasure, WeightedMuUsesBlocks) {
  // Two orbits with different mu: a fixed point of mass 0.5 and a 2-cycle.
  const PermutationWeightOperator p({0, 2, 1}, {0.5, 0.25, 0.25}, {3.0, 1.0, 4.0});
  const SpectralMeasure expected({3.0, 2.0, -2.0}, {0.5, 0.25, 0.25});
  EXPECT_LT(measureDistance(brownMeasure(p), expected), 1e-12);
  EXPECT_LT(measureDistance(closedFormBrownMeasure(p), expected), 1e-14);
}

TEST(BrownMeasure, ClosedFormMatchesEigensolver) {
  for (int trial = 0; trial < 10; ++trial) {
    auto rng = random::trialEngine(51, trial);
    const auto p = random::randomPermutationWeight(40, rng, trial % 3 == 0 ? 0.1 : 0.0);
    EXPECT_LT(measureDistance(brownMeasure(p), closedFormBrownMeasure(p)), 1e-8);
  }
}

TEST(FkDeterminant, Examples) {
  auto rng = random::trialEngine(52, 0);
  EXPECT_NEAR(fkDeterminant(random::haarUnitary(6, rng)), 1.0, 1e-13);
  EXPECT_NEAR(fkDeterminant(Operator(mat2(1, 0, 0, 4))), 2.0, 1e-15);
  EXPECT_EQ(fkDeterminant(Operator(mat2(0, 1, 0, 0))), 0.0);
  EXPECT_NEAR(fkDeterminant(threeCycle()), fkDeterminant(densify(threeCycle())), 1e-14);
}

TEST(DiskMass, Examples) {
  const auto cyc = closedFormBrownMeasure(threeCycle());
  EXPECT_EQ(diskMass(SpectralMeasure({1.0, 2.0}, {0.5, 0.5}), 0.0), 0.0);
  EXPECT_NEAR(diskMass(cyc, 2.0), 1.0, 1e-15);
  EXPECT_EQ(diskMass(cyc, 1.9), 0.0);
  EXPECT_NEAR(diskMass(SpectralMeasure({0.5, 3.0}, {0.25, 0.75}), 1.0), 0.25, 1e-15);
}

TEST(Rotate, Examples) {
  auto rng = random::trialEngine(53, 0);
  const auto m = brownMeasure(random::ginibre(6, rng));
  EXPECT_LT(measureDistance(rotate(m, 0.0), m), 1e-15);
  EXPECT_LT(measureDistance(rotate(m, 2.0 * std::numbers::pi), m), 1e-12);
  const auto cyc = closedFormBrownMeasure(threeCycle());
  EXPECT_LT(measureDistance(rotate(cyc, 2.0 * std::numbers::pi / 3.0), cyc), 1e-9);
  const Operator t = random::ginibre(6, rng);
  EXPECT_LT(measureDistance(rotate(brownMeasure(t), 0.9), brownMeasure(Operator(std::polar(1.0, 0.9) * t.matrix()))),
            1e-9);
}

TEST(MeasureDistance, Examples) {
  auto rng = random::trialEngine(54, 0);
  const auto m = brownMeasure(random::ginibre(8, rng));
  EXPECT_EQ(measureDistance(m, m), 0.0);
  EXPECT_NEAR(measureDistance(atom(0.0), atom(1.0)), 1.0, 1e-15);
  // Split masses: 1/2 at 0 and 1/2 at 2 against 1/3 at each of 0, 1, 2.
  const SpectralMeasure a({0.0, 2.0}, {0.5, 0.5});
  const SpectralMeasure b({0.0, 1.0, 2.0}, {1.0 / 3, 1.0 / 3, 1.0 / 3});
  EXPECT_NEAR(measureDistance(a, b), 1.0 / 3.0, 1e-12);
}

TEST(MeasureDistance, HungarianAgreesWithBruteForce) {
  for (int trial = 0; trial < 20; ++trial) {
    auto rng = random::trialEngine(55, trial);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<std::vector<double>> cost(6, std::vector<double>(6));
    for (auto& row : cost)
      for (auto& c : row) c = std::abs(u(rng));
    std::vector<std::size_t> perm{0, 1, 2, 3, 4, 5};
    double best = 1e300;
    do {
      double s = 0;
      for (std::size_t i = 0; i < 6; ++i) s += cost[i][perm[i]];
      best = std::min(best, s);
    } while (std::next_permutation(perm.begin(), perm.end()));
    EXPECT_NEAR(detail::minCostAssignment(cost), best, 1e-12);
  }
}

TEST(Serialization, MeasureRoundTrip) {
  auto rng = random::trialEngine(56, 0);
  const auto m = brownMeasure(random::ginibre(7, rng));
  std::stringstream s;
  writeMeasureCsv(s, m);
  EXPECT_EQ(s.str().substr(0, 11), "re,im,mass\n");
  const auto r = readMeasureCsv(s);
  EXPECT_EQ(r.atoms(), m.atoms());
  EXPECT_EQ(r.masses(), m.masses());
}
