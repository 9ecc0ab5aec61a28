#pragma once

#include <span>

#include "resofit/fit_report.hpp"
#include "resofit/model.hpp"

namespace resofit {

/// delta_TLS(n) = tanh(h f_r / (2 k_B T)) / (Q_TLS (1 + n/n_c)^alpha) + delta_0.
double eval_tls_loss(const TlsParams& t, double mean_photons);

/// TLS loss plus the two-photon term gamma_nl n / f_r (gamma_nl in Hz).
double eval_combined_loss(const TlsParams& t, double two_photon_hz, double mean_photons);

struct LossPoint {
  double photons = 0.0;
  double internal_loss = 0.0;
};

/// Fitted TLS parameters. `tls_loss` is 1/Q_TLS so that a power-independent
/// sample (no TLS term) is representable as 0 with a finite error.
struct TlsFitParams {
  double tls_loss = 0.0;
  double n_c = 0.0;
  double alpha_tls = 0.0;
  double delta_0 = 0.0;
  double two_photon = 0.0;  // Hz; fitted only when requested
  double temperature = 0.0;
  double f_r = 0.0;

  /// TlsParams with q_tls = 1/tls_loss (infinite when tls_loss == 0).
  TlsParams to_tls() const;
};

using TlsFitReport = FitReport<TlsFitParams>;

/// Least squares on log10(delta_i) over {1/Q_TLS, n_c, alpha_tls, delta_0}
/// (plus gamma_nl when `include_two_photon`). Bounds: 1/Q_TLS >= 0,
/// n_c > 0, alpha_tls in (0, 2], delta_0 >= 0. Needs at least 6 points whose
/// photon numbers span 3 decades (InsufficientSpanError otherwise); throws
/// NonConvergenceError when the solver does not converge.
TlsFitReport fit_tls(std::span<const LossPoint> points, double temperature, double f_r,
                     bool include_two_photon = false);

}  // namespace resofit
