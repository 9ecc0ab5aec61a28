#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "resofit/fit_report.hpp"
#include "resofit/model.hpp"

namespace resofit {

inline constexpr std::size_t kMinLinearFitPoints = 10;

/// Rough noise and dip statistics of a trace, shared by the estimator,
/// the fit diagnostics and segmentation.
struct TraceStatistics {
  double baseline = 0.0;     // median |S21| over the outer 20 %
  double noise_sigma = 0.0;  // per-quadrature noise, from MAD of successive differences (outer 20 %)
  double min_magnitude = 0.0;
  std::size_t min_index = 0;
};

TraceStatistics trace_statistics(const FrequencyTrace& trace);

/// Initial guess for `fit_linear`: f_r at the |S21| minimum, loaded linewidth
/// from the half-depth width of |S21|^2, A from the baseline median,
/// t_d from the off-resonant phase slope (refined by a circle-residual
/// search), phi from the residual off-resonant phase, alpha_f = 0 and
/// delta_c/delta_i from the dip depth. Throws NoResonanceError when the dip
/// is not at least 3 sigma (and 1e-3 of the baseline) deep.
LinearParams estimate_initial(const FrequencyTrace& trace);

struct LinearFitOptions {
  int max_iterations = 200;
  double relative_fd_step = 1e-8;
};

/// Least-squares fit of the asymmetric hanger model to the whole trace.
/// Throws PreconditionError for fewer than 10 points, NoResonanceError when no
/// guess is supplied and none can be estimated, SingularJacobianError when the
/// Jacobian at the solution is rank deficient.
LinearFitReport fit_linear(const FrequencyTrace& trace, std::optional<LinearParams> guess = std::nullopt,
                           const LinearFitOptions& options = {});

/// Sub-trace within +-`n_linewidths` loaded linewidths of the estimated
/// resonance. Returns the input unchanged if the window would hold fewer than
/// `kMinLinearFitPoints` points.
FrequencyTrace window_around_resonance(const FrequencyTrace& trace, double n_linewidths);

struct ResonanceWindow {
  FrequencyTrace trace;
  double center_hz = 0.0;
  double linewidth_hz = 0.0;
  double depth = 0.0;     // baseline - min |S21|
  bool merged = false;    // window absorbed an overlapping neighbour
};

/// Locates |S21| dips in a wideband scan and cuts a window spanning at least
/// 12 estimated linewidths around each one; windows are returned in
/// frequency order. Throws SegmentationMismatchError when `expected` is
/// given and differs from the number found.
std::vector<ResonanceWindow> segment_resonances(const FrequencyTrace& wideband,
                                                std::optional<std::size_t> expected = std::nullopt);

}  // namespace resofit
