#include "resofit/synth.hpp"

#include <cmath>
#include <string>

#include "resofit/calibration.hpp"
#include "resofit/constants.hpp"
#include "resofit/errors.hpp"
#include "resofit/tls_fit.hpp"

namespace resofit {

namespace {

FrequencyTrace with_noise(std::span<const double> freqs, std::vector<Complex> clean, double sigma,
                          std::uint64_t seed) {
  if (!(sigma >= 0.0)) throw ParameterDomainError("noise_sigma must be >= 0");
  FrequencyTrace t;
  t.freqs.assign(freqs.begin(), freqs.end());
  t.s21 = std::move(clean);
  if (sigma > 0.0) {
    GaussianNoise noise(seed);
    for (auto& z : t.s21) {
      const auto [re, im] = noise.next_pair();
      z += Complex(sigma * re, sigma * im);
    }
  }
  return t;
}

}  // namespace

double GaussianNoise::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::pair<double, double> GaussianNoise::next_pair() {
  const double u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(1.0 - u1));
  const double theta = constants::kTwoPi * u2;
  return {r * std::cos(theta), r * std::sin(theta)};
}

std::vector<double> resonance_grid(const LinearParams& p, double half_span_linewidths, std::size_t n_points) {
  if (n_points < 2) throw ParameterDomainError("resonance_grid: need at least 2 points");
  const double lw = p.resonant_freq * p.total_loss();
  const double lo = p.resonant_freq - half_span_linewidths * lw;
  const double step = 2.0 * half_span_linewidths * lw / static_cast<double>(n_points - 1);
  std::vector<double> f(n_points);
  for (std::size_t i = 0; i < n_points; ++i) f[i] = lo + step * static_cast<double>(i);
  return f;
}

FrequencyTrace synthesize_linear(const LinearParams& p, std::span<const double> freqs, double noise_sigma,
                                 std::uint64_t seed) {
  return with_noise(freqs, eval_linear_s21(p, freqs), noise_sigma * p.amplitude, seed);
}

FrequencyTrace synthesize_nonlinear(const NonlinearParams& p, std::span<const double> freqs, BranchPolicy policy,
                                    double noise_sigma, std::uint64_t seed) {
  return with_noise(freqs, eval_nonlinear_s21(p, freqs, policy), noise_sigma * p.linear.amplitude, seed);
}

std::vector<FrequencyTrace> synthesize_power_sweep(const PowerSweepConfig& cfg) {
  validate(cfg.tls);
  for (std::size_t i = 1; i < cfg.instrument_powers_dbm.size(); ++i) {
    if (!(cfg.instrument_powers_dbm[i] > cfg.instrument_powers_dbm[i - 1])) {
      throw ParameterDomainError("synthesize_power_sweep: powers must be sorted ascending");
    }
  }
  LinearParams low_power = cfg.linear;
  low_power.internal_loss = eval_tls_loss(cfg.tls, 0.0);

  std::vector<FrequencyTrace> out;
  for (std::size_t i = 0; i < cfg.instrument_powers_dbm.size(); ++i) {
    const double power = cfg.instrument_powers_dbm[i];
    const double p_in = DriveCalibration{cfg.attenuation_db, power}.input_power_watts();
    const double n = mean_photon_number(p_in, low_power);

    NonlinearParams np;
    np.linear = cfg.linear;
    np.linear.internal_loss = eval_tls_loss(cfg.tls, n);
    np.kerr = cfg.kerr;
    np.two_photon = cfg.two_photon;
    np.drive_flux = input_photon_flux(p_in, cfg.linear.resonant_freq);

    FrequencyTrace t = synthesize_nonlinear(np, cfg.freqs, cfg.policy, cfg.noise_sigma, cfg.seed + i);
    t.instrument_power_dbm = power;
    t.attenuation_db = cfg.attenuation_db;
    t.temperature_k = cfg.tls.temperature;
    t.label = cfg.label;
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace resofit
