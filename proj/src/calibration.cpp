#include "resofit/calibration.hpp"

#include <cmath>

#include "resofit/constants.hpp"
#include "resofit/errors.hpp"

namespace resofit {

double DriveCalibration::input_power_watts() const {
  if (!std::isfinite(attenuation_db)) throw ParameterDomainError("attenuation must be finite");
  const double p = dbm_to_watts(instrument_power_dbm - attenuation_db);
  if (!(p > 0.0)) throw ParameterDomainError("on-chip power underflowed to zero");
  return p;
}

double dbm_to_watts(double dbm) { return 1e-3 * std::pow(10.0, dbm / 10.0); }

double input_photon_flux(double input_power_watts, double f_r_hz) {
  if (!(input_power_watts >= 0.0)) throw ParameterDomainError("input power must be >= 0");
  if (!(f_r_hz > 0.0)) throw ParameterDomainError("f_r must be > 0");
  return input_power_watts / (constants::kPlanck * f_r_hz);
}

double mean_photon_number(double input_power_watts, const LinearParams& p) {
  if (!(input_power_watts >= 0.0)) throw ParameterDomainError("input power must be >= 0");
  validate(p);
  const double omega = constants::kTwoPi * p.resonant_freq;
  const double total = p.total_loss();
  return 2.0 * input_power_watts / (constants::kReducedPlanck * omega * omega) * p.coupling_loss /
         (total * total);
}

}  // namespace resofit
