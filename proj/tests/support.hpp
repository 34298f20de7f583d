#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>

#include "frozenseg/autodiff.hpp"
#include "frozenseg/matrix.hpp"

namespace frozenseg::testing {

inline Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng, Real lo = -1.0, Real hi = 1.0) {
  std::uniform_real_distribution<Real> u(lo, hi);
  Matrix m(rows, cols);
  for (auto& v : m.data()) v = u(rng);
  return m;
}

/// Largest violation of |analytic - numeric| <= rel * max(|analytic|, |numeric|) + abs_floor,
/// expressed as the ratio (<= 1 passes).
inline Real gradient_violation(const Matrix& analytic, const Matrix& numeric, Real rel = 1e-3, Real abs_floor = 1e-7) {
  Real worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const Real a = analytic.data()[i], n = numeric.data()[i];
    const Real allowed = rel * std::max(std::abs(a), std::abs(n)) + abs_floor;
    worst = std::max(worst, std::abs(a - n) / allowed);
  }
  return worst;
}

}  // namespace frozenseg::testing
