#pragma once

#include <numbers>

namespace resofit::constants {

// CODATA 2018 exact values (SI redefinition).
inline constexpr double kPlanck = 6.62607015e-34;                       // J s
inline constexpr double kReducedPlanck = kPlanck / (2.0 * std::numbers::pi);  // J s
inline constexpr double kBoltzmann = 1.380649e-23;                      // J/K

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Unit conventions used throughout the library:
//  * frequencies, linewidths, Kerr coefficient and two-photon rate are
//    ordinary frequencies in Hz (kappa / 2pi), so ratios such as
//    K_nl / (f_r (delta_i + delta_c)) and gamma_nl n / f_r need no 2pi;
//  * photon flux |a_in|^2 is a physical rate in photons/s; wherever it meets
//    a linewidth (the drive normalisation) the linewidth is angular,
//    kappa = 2pi f_r delta, so the steady-state photon number reproduces
//    n = 2 P_in delta_c / (hbar omega_r^2 (delta_i + delta_c)^2).

}  // namespace resofit::constants
