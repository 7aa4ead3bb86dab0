#pragma once

#include <complex>
#include <numbers>

#include <gtest/gtest.h>

#include "aluthge/operator.hpp"

namespace testing_support {

using aluthge::Complex;
using aluthge::Matrix;

inline Matrix mat2(Complex a, Complex b, Complex c, Complex d) {
  Matrix m(2, 2);
  m << a, b, c, d;
  return m;
}

inline double maxAbs(const Matrix& m) { return m.cwiseAbs().maxCoeff(); }

inline const Complex kOmega = std::polar(1.0, 2.0 * std::numbers::pi / 3.0);

}  // namespace testing_support
