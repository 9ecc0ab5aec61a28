#include "resofit/circle_fit.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "resofit/errors.hpp"

namespace resofit {

Circle fit_circle(std::span<const Complex> points) {
  const auto n = static_cast<Eigen::Index>(points.size());
  if (n < 3) throw LowSignalError("circle fit needs at least 3 points");

  Complex centroid{0.0, 0.0};
  for (const auto& z : points) centroid += z;
  centroid /= static_cast<double>(n);
  double scale = 0.0;
  for (const auto& z : points) scale = std::max(scale, std::abs(z - centroid));
  if (!(scale > 0.0) || !std::isfinite(scale)) throw LowSignalError("circle fit: all points coincide");

  // Kasa: x^2 + y^2 + D x + E y + F = 0 in centred, unit-scaled coordinates.
  Eigen::MatrixXd a(n, 3);
  Eigen::VectorXd b(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const Complex w = (points[static_cast<std::size_t>(k)] - centroid) / scale;
    a(k, 0) = w.real();
    a(k, 1) = w.imag();
    a(k, 2) = 1.0;
    b(k) = -std::norm(w);
  }
  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  if (qr.rank() < 3) throw LowSignalError("circle fit: points are collinear");
  const Eigen::Vector3d sol = qr.solve(b);
  Complex c{-sol(0) / 2.0, -sol(1) / 2.0};
  const double r2 = std::norm(c) - sol(2);
  if (!(r2 > 0.0)) throw LowSignalError("circle fit: degenerate radius");
  double r = std::sqrt(r2);

  // Geometric refinement: residual_k = |w_k - c| - r.
  for (int iter = 0; iter < 20; ++iter) {
    Eigen::MatrixXd jac(n, 3);
    Eigen::VectorXd res(n);
    for (Eigen::Index k = 0; k < n; ++k) {
      const Complex w = (points[static_cast<std::size_t>(k)] - centroid) / scale;
      const Complex d = w - c;
      const double dist = std::abs(d);
      res(k) = dist - r;
      if (dist > 0.0) {
        jac(k, 0) = -d.real() / dist;
        jac(k, 1) = -d.imag() / dist;
      } else {
        jac(k, 0) = 0.0;
        jac(k, 1) = 0.0;
      }
      jac(k, 2) = -1.0;
    }
    const Eigen::Vector3d step = jac.colPivHouseholderQr().solve(-res);
    c += Complex(step(0), step(1));
    r += step(2);
    if (step.norm() < 1e-15 * (1.0 + r)) break;
  }
  if (!(r > 0.0) || !std::isfinite(r)) throw LowSignalError("circle fit: refinement diverged");
  return Circle{centroid + c * scale, r * scale};
}

double max_relative_radial_deviation(const Circle& c, std::span<const Complex> points) {
  double worst = 0.0;
  for (const auto& z : points) worst = std::max(worst, std::abs(std::abs(z - c.center) - c.radius));
  return worst / c.radius;
}

}  // namespace resofit
