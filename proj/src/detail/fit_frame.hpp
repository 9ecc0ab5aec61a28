#pragma once

// Internal coordinates shared by the linear and nonlinear S21 fits.
//
//   u[0] = ln A
//   u[1] = 2 pi t_d * span           (delay phase accumulated across the window)
//   u[2] = phi + 2 pi t_d * f_center (phase at the window centre)
//   u[3] = alpha_f
//   u[4] = (f_r - f_center) / linewidth0
//   u[5] = ln delta_i
//   u[6] = ln delta_c
//
// Every coordinate is O(1) and the delay/phase pair is decorrelated, which
// keeps J^T J well conditioned for narrow windows far from f = 0.

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>

#include "resofit/constants.hpp"
#include "resofit/model.hpp"

namespace resofit::detail {

inline constexpr std::size_t kLinearCoords = 7;

struct FitFrame {
  double f_center = 0.0;
  double span = 1.0;
  double linewidth0 = 1.0;
};

inline FitFrame make_frame(const FrequencyTrace& trace, const LinearParams& guess) {
  FitFrame fr;
  fr.f_center = 0.5 * (trace.freqs.front() + trace.freqs.back());
  fr.span = trace.freqs.back() - trace.freqs.front();
  fr.linewidth0 = guess.resonant_freq * guess.total_loss();
  return fr;
}

inline std::array<double, kLinearCoords> to_internal(const LinearParams& p, const FitFrame& fr) {
  return {std::log(p.amplitude),
          constants::kTwoPi * p.electric_delay * fr.span,
          p.phase_offset + constants::kTwoPi * p.electric_delay * fr.f_center,
          p.fano_asymmetry,
          (p.resonant_freq - fr.f_center) / fr.linewidth0,
          std::log(p.internal_loss),
          std::log(p.coupling_loss)};
}

inline LinearParams from_internal(std::span<const double> u, const FitFrame& fr) {
  LinearParams p;
  p.amplitude = std::exp(u[0]);
  p.electric_delay = u[1] / (constants::kTwoPi * fr.span);
  p.phase_offset = std::remainder(u[2] - u[1] * fr.f_center / fr.span, constants::kTwoPi);
  p.fano_asymmetry = u[3];
  p.resonant_freq = fr.f_center + fr.linewidth0 * u[4];
  p.internal_loss = std::exp(u[5]);
  p.coupling_loss = std::exp(u[6]);
  return p;
}

/// d(physical)/d(internal) for the seven linear parameters, in the field order
/// amplitude, delay, phase, alpha, f_r, delta_i, delta_c.
inline Eigen::MatrixXd linear_map_jacobian(std::span<const double> u, const FitFrame& fr) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(kLinearCoords, kLinearCoords);
  m(0, 0) = std::exp(u[0]);
  m(1, 1) = 1.0 / (constants::kTwoPi * fr.span);
  m(2, 1) = -fr.f_center / fr.span;
  m(2, 2) = 1.0;
  m(3, 3) = 1.0;
  m(4, 4) = fr.linewidth0;
  m(5, 5) = std::exp(u[5]);
  m(6, 6) = std::exp(u[6]);
  return m;
}

/// Environment A e^{i(2 pi f t_d + phi)} evaluated from internal coordinates
/// without forming the large absolute phase 2 pi f t_d.
inline Complex environment_internal(std::span<const double> u, const FitFrame& fr, double f) {
  return std::polar(std::exp(u[0]), u[1] * (f - fr.f_center) / fr.span + u[2]);
}

inline void internal_bounds(std::span<double> lower, std::span<double> upper) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  constexpr double half_pi = std::numbers::pi / 2;
  for (std::size_t j = 0; j < kLinearCoords; ++j) {
    lower[j] = -inf;
    upper[j] = inf;
  }
  lower[3] = -half_pi + 1e-6;
  upper[3] = half_pi - 1e-6;
  for (std::size_t j : {5u, 6u}) {
    lower[j] = std::log(1e-15);
    upper[j] = -1e-12;
  }
}

}  // namespace resofit::detail
