#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "resofit/duffing.hpp"
#include "resofit/model.hpp"

namespace resofit {

/// Portable Gaussian stream: std::mt19937_64 seeded with the integer seed,
/// 53-bit uniforms u = (x >> 11) * 2^-53, and Box-Muller pairs
/// (sqrt(-2 ln(1 - u1)) cos(2 pi u2), ... sin(2 pi u2)).
/// The engine's output sequence is fixed by the C++ standard, so traces are
/// reproducible across standard libraries.
class GaussianNoise {
 public:
  explicit GaussianNoise(std::uint64_t seed) : engine_(seed) {}

  /// One standard-normal pair (used as the real and imaginary parts of one point).
  std::pair<double, double> next_pair();

 private:
  double uniform();
  std::mt19937_64 engine_;
};

/// Uniform grid of `n_points` over f_r +- `half_span_linewidths` loaded linewidths.
std::vector<double> resonance_grid(const LinearParams& p, double half_span_linewidths, std::size_t n_points);

/// eval_linear_s21 plus IID complex Gaussian noise, sigma per quadrature
/// = noise_sigma * A.
FrequencyTrace synthesize_linear(const LinearParams& p, std::span<const double> freqs, double noise_sigma,
                                 std::uint64_t seed);

FrequencyTrace synthesize_nonlinear(const NonlinearParams& p, std::span<const double> freqs, BranchPolicy policy,
                                    double noise_sigma, std::uint64_t seed);

struct PowerSweepConfig {
  LinearParams linear;  // internal_loss is replaced per power by the TLS model
  TlsParams tls;
  double kerr = 0.0;        // Hz
  double two_photon = 0.0;  // Hz
  std::vector<double> instrument_powers_dbm;
  double attenuation_db = 74.0;
  std::vector<double> freqs;
  double noise_sigma = 0.0;
  std::uint64_t seed = 1;
  BranchPolicy policy = BranchPolicy::kSweepUp;
  std::string label = "synthetic";
};

/// One nonlinear trace per power. For each power: P_in from the attenuation
/// chain, n from the linear photon-number formula evaluated with the
/// low-power loss delta_TLS(0) (single pass, not iterated to
/// self-consistency), delta_i = delta_TLS(n), drive flux P_in / (h f_r).
/// Power i uses seed + i.
std::vector<FrequencyTrace> synthesize_power_sweep(const PowerSweepConfig& cfg);

}  // namespace resofit
