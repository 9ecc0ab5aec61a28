#pragma once

#include <span>

#include "resofit/model.hpp"

namespace resofit {

struct Circle {
  Complex center;
  double radius = 0.0;
};

/// Least-squares circle through points in the complex plane: algebraic
/// (Kasa) fit on centred, scaled coordinates, then Gauss-Newton refinement
/// of the geometric distance. Throws LowSignalError for fewer than three
/// points or a collinear/degenerate set.
Circle fit_circle(std::span<const Complex> points);

/// max_k | |z_k - c| - r | / r.
double max_relative_radial_deviation(const Circle& c, std::span<const Complex> points);

}  // namespace resofit
