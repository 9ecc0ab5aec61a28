#include "resofit/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "resofit/constants.hpp"
#include "resofit/errors.hpp"

namespace resofit {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ParameterDomainError(what);
}

}  // namespace

void validate_trace(const FrequencyTrace& trace, std::size_t min_points) {
  require(trace.freqs.size() == trace.s21.size(), "trace: freqs and s21 differ in length");
  require(trace.freqs.size() >= min_points,
          "trace: needs at least " + std::to_string(min_points) + " points, got " +
              std::to_string(trace.freqs.size()));
  for (std::size_t i = 0; i < trace.freqs.size(); ++i) {
    require(std::isfinite(trace.freqs[i]), "trace: non-finite frequency at index " + std::to_string(i));
    require(std::isfinite(trace.s21[i].real()) && std::isfinite(trace.s21[i].imag()),
            "trace: non-finite S21 at index " + std::to_string(i));
    if (i > 0) {
      require(trace.freqs[i] > trace.freqs[i - 1],
              "trace: frequencies not strictly increasing at index " + std::to_string(i));
    }
  }
  require(std::isfinite(trace.attenuation_db) && trace.attenuation_db >= 0.0,
          "trace: attenuation must be >= 0 dB");
  require(std::isfinite(trace.temperature_k) && trace.temperature_k > 0.0,
          "trace: temperature must be > 0 K");
}

FrequencyTrace slice_trace(const FrequencyTrace& trace, double lo_hz, double hi_hz) {
  FrequencyTrace out;
  out.instrument_power_dbm = trace.instrument_power_dbm;
  out.attenuation_db = trace.attenuation_db;
  out.temperature_k = trace.temperature_k;
  out.label = trace.label;
  const auto first = std::lower_bound(trace.freqs.begin(), trace.freqs.end(), lo_hz);
  const auto last = std::upper_bound(trace.freqs.begin(), trace.freqs.end(), hi_hz);
  const auto i0 = static_cast<std::size_t>(first - trace.freqs.begin());
  const auto i1 = static_cast<std::size_t>(last - trace.freqs.begin());
  if (i1 > i0) {
    out.freqs.assign(trace.freqs.begin() + i0, trace.freqs.begin() + i1);
    out.s21.assign(trace.s21.begin() + i0, trace.s21.begin() + i1);
  }
  return out;
}

void validate(const LinearParams& p) {
  require(std::isfinite(p.amplitude) && p.amplitude > 0.0, "amplitude must be > 0");
  require(std::isfinite(p.electric_delay), "electric_delay must be finite");
  require(std::isfinite(p.phase_offset), "phase_offset must be finite");
  require(std::isfinite(p.fano_asymmetry) && std::abs(p.fano_asymmetry) < std::numbers::pi / 2,
          "fano_asymmetry must lie in (-pi/2, pi/2)");
  require(std::isfinite(p.resonant_freq) && p.resonant_freq > 0.0, "resonant_freq must be > 0");
  require(p.internal_loss > 0.0 && p.internal_loss < 1.0, "internal_loss must lie in (0, 1)");
  require(p.coupling_loss > 0.0 && p.coupling_loss < 1.0, "coupling_loss must lie in (0, 1)");
}

void validate(const TlsParams& p) {
  require(p.q_tls > 0.0, "q_tls must be > 0 (infinity means no TLS loss)");
  require(std::isfinite(p.n_c) && p.n_c > 0.0, "n_c must be > 0");
  require(p.alpha_tls > 0.0 && p.alpha_tls <= 2.0, "alpha_tls must lie in (0, 2]");
  require(std::isfinite(p.delta_0) && p.delta_0 >= 0.0, "delta_0 must be >= 0");
  require(std::isfinite(p.temperature) && p.temperature > 0.0, "temperature must be > 0");
  require(std::isfinite(p.f_r) && p.f_r > 0.0, "f_r must be > 0");
}

void validate(const NonlinearParams& p) {
  validate(p.linear);
  require(std::isfinite(p.kerr), "kerr must be finite");
  require(std::isfinite(p.two_photon) && p.two_photon >= 0.0, "two_photon must be >= 0");
  require(std::isfinite(p.drive_flux) && p.drive_flux >= 0.0, "drive_flux must be >= 0");
}

Complex environment(const LinearParams& p, double freq_hz) {
  return std::polar(p.amplitude, constants::kTwoPi * freq_hz * p.electric_delay + p.phase_offset);
}

double normalized_detuning(const LinearParams& p, double freq_hz) {
  return (freq_hz - p.resonant_freq) / (p.resonant_freq * p.total_loss());
}

Complex linear_s21_at(const LinearParams& p, double freq_hz) {
  const double x = normalized_detuning(p, freq_hz);
  const Complex lorentz = std::polar(p.diameter(), p.fano_asymmetry) / Complex(1.0, 2.0 * x);
  return environment(p, freq_hz) * (1.0 - lorentz);
}

std::vector<Complex> eval_linear_s21(const LinearParams& p, std::span<const double> freqs) {
  validate(p);
  std::vector<Complex> out;
  out.reserve(freqs.size());
  for (double f : freqs) {
    if (!std::isfinite(f)) throw ParameterDomainError("eval_linear_s21: non-finite frequency");
    out.push_back(linear_s21_at(p, f));
  }
  return out;
}

double loaded_linewidth(const LinearParams& p) {
  validate(p);
  return p.resonant_freq * p.total_loss();
}

double diameter_corrected_qc(const LinearParams& p) {
  if (!(std::abs(p.fano_asymmetry) < std::numbers::pi / 2)) {
    throw ParameterDomainError("diameter correction degenerate: |fano_asymmetry| >= pi/2");
  }
  return 1.0 / p.coupling_loss;
}

double raw_qc(const LinearParams& p) {
  return diameter_corrected_qc(p) / std::cos(p.fano_asymmetry);
}

}  // namespace resofit
