#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "resofit/model.hpp"

namespace resofit {

struct Diagnostics {
  bool nonlinear_suspected = false;
  bool bifurcated = false;
  bool low_snr = false;
  bool low_sensitivity = false;
  std::vector<std::string> notes;
};

/// Result of any fit: the parameter set, per-parameter standard errors in
/// the same units (stored in a second `Params` value), and fit quality.
template <class Params>
struct FitReport {
  Params params{};
  Params std_errors{};
  double residual_rms = 0.0;
  std::size_t n_points = 0;
  bool converged = false;
  int iterations = 0;
  Diagnostics diagnostics;
};

using LinearFitReport = FitReport<LinearParams>;
using NonlinearFitReport = FitReport<NonlinearParams>;

}  // namespace resofit
