#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace resofit {

using Complex = std::complex<double>;

/// One complex S21 sweep plus the drive metadata needed for calibration.
struct FrequencyTrace {
  std::vector<double> freqs;   // Hz, strictly increasing
  std::vector<Complex> s21;    // dimensionless
  double instrument_power_dbm = 0.0;
  double attenuation_db = 0.0;  // positive = loss
  double temperature_k = 0.01;
  std::string label;

  std::size_t size() const { return freqs.size(); }
};

inline constexpr std::size_t kMinTracePoints = 8;

/// Throws ParameterDomainError unless the trace satisfies its invariants.
/// Parsers use `min_points = 1` (a file may legitimately hold a short sweep);
/// analysis entry points use the default.
void validate_trace(const FrequencyTrace& trace, std::size_t min_points = kMinTracePoints);

/// Returns the sub-trace with freqs in [lo, hi]; metadata is copied.
FrequencyTrace slice_trace(const FrequencyTrace& trace, double lo_hz, double hi_hz);

/// Parameters of the generalized asymmetric hanger line shape
///   S21 = A e^{i(2 pi f t_d + phi)} (1 - delta_c/(delta_c+delta_i) e^{i alpha_f}/(1 + 2i x))
/// with x = (f - f_r) / (f_r (delta_i + delta_c)).
/// `coupling_loss` is the diameter-corrected value.
struct LinearParams {
  double amplitude = 1.0;
  double electric_delay = 0.0;  // s
  double phase_offset = 0.0;    // rad
  double fano_asymmetry = 0.0;  // rad
  double resonant_freq = 5e9;   // Hz
  double internal_loss = 1e-6;
  double coupling_loss = 1e-6;

  double q_internal() const { return 1.0 / internal_loss; }
  double q_coupling() const { return 1.0 / coupling_loss; }
  double total_loss() const { return internal_loss + coupling_loss; }
  /// delta_c / (delta_c + delta_i): the IQ-circle diameter in units of A.
  double diameter() const { return coupling_loss / total_loss(); }
};

void validate(const LinearParams& p);

/// Power-dependent two-level-system loss model parameters.
struct TlsParams {
  double q_tls = 4e6;
  double n_c = 10.0;        // photons
  double alpha_tls = 0.5;   // (0, 2]
  double delta_0 = 0.0;     // power-independent loss
  double temperature = 0.01;  // K
  double f_r = 5e9;           // Hz
};

void validate(const TlsParams& p);

/// Linear parameters plus Kerr coefficient, two-photon loss rate and drive.
struct NonlinearParams {
  LinearParams linear;
  double kerr = 0.0;        // Hz, signed
  double two_photon = 0.0;  // Hz, >= 0
  double drive_flux = 0.0;  // photons/s arriving at the resonator
};

void validate(const NonlinearParams& p);

/// Environment factor A e^{i(2 pi f t_d + phi)}.
Complex environment(const LinearParams& p, double freq_hz);

/// Normalized detuning (f - f_r)/(f_r (delta_i + delta_c)).
double normalized_detuning(const LinearParams& p, double freq_hz);

/// Linear model at one frequency without domain checks (hot path for fits).
Complex linear_s21_at(const LinearParams& p, double freq_hz);

std::vector<Complex> eval_linear_s21(const LinearParams& p, std::span<const double> freqs);

/// Full loaded linewidth f_r (delta_i + delta_c) in Hz.
double loaded_linewidth(const LinearParams& p);

/// Q_c after the asymmetry (diameter) correction, i.e. 1/delta_c.
double diameter_corrected_qc(const LinearParams& p);

/// Q_c before the correction: corrected = raw * cos(alpha_f).
double raw_qc(const LinearParams& p);

}  // namespace resofit
