#pragma once

#include "resofit/model.hpp"

namespace resofit {

/// Instrument power and the effective attenuation between the VNA port and
/// the resonator input (a single flat value per trace).
struct DriveCalibration {
  double attenuation_db = 74.0;
  double instrument_power_dbm = 0.0;

  /// On-chip power P_in in watts.
  double input_power_watts() const;
};

double dbm_to_watts(double dbm);

/// Photon flux P_in / (h f_r) in photons/s.
double input_photon_flux(double input_power_watts, double f_r_hz);

/// Mean intra-resonator photon number at resonance,
///   n = 2 P_in / (hbar omega_r^2) * delta_c / (delta_c + delta_i)^2.
double mean_photon_number(double input_power_watts, const LinearParams& p);

}  // namespace resofit
