#include "resofit/linear_fit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "detail/fit_frame.hpp"
#include "detail/stats.hpp"
#include "resofit/circle_fit.hpp"
#include "resofit/constants.hpp"
#include "resofit/errors.hpp"
#include "resofit/least_squares.hpp"

namespace resofit {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<double> smoothed_magnitudes(const FrequencyTrace& trace) {
  const std::size_t n = trace.size();
  std::vector<double> mag(n);
  for (std::size_t i = 0; i < n; ++i) mag[i] = std::abs(trace.s21[i]);
  if (n < 25) return mag;
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i >= 2 ? i - 2 : 0;
    const std::size_t hi = std::min(n - 1, i + 2);
    double s = 0.0;
    for (std::size_t k = lo; k <= hi; ++k) s += mag[k];
    out[i] = s / static_cast<double>(hi - lo + 1);
  }
  return out;
}

// Frequency where mag^2 first rises back to `level`, walking from `start` in
// direction `dir`; linear interpolation between grid points. NaN if the
// trace edge is reached first.
double half_depth_crossing(const FrequencyTrace& trace, const std::vector<double>& mag,
                           std::size_t start, int dir, double level) {
  auto i = static_cast<std::ptrdiff_t>(start);
  const auto n = static_cast<std::ptrdiff_t>(mag.size());
  while (true) {
    const std::ptrdiff_t next = i + dir;
    if (next < 0 || next >= n) return std::numeric_limits<double>::quiet_NaN();
    const double a = mag[static_cast<std::size_t>(i)] * mag[static_cast<std::size_t>(i)];
    const double b = mag[static_cast<std::size_t>(next)] * mag[static_cast<std::size_t>(next)];
    if (b >= level) {
      const double t = b > a ? (level - a) / (b - a) : 0.0;
      const double fa = trace.freqs[static_cast<std::size_t>(i)];
      const double fb = trace.freqs[static_cast<std::size_t>(next)];
      return fa + t * (fb - fa);
    }
    i = next;
  }
}

double half_depth_width(const FrequencyTrace& trace, const std::vector<double>& mag, std::size_t imin,
                        double baseline) {
  const double level = 0.5 * (baseline * baseline + mag[imin] * mag[imin]);
  const double left = half_depth_crossing(trace, mag, imin, -1, level);
  const double right = half_depth_crossing(trace, mag, imin, +1, level);
  const double f0 = trace.freqs[imin];
  if (std::isfinite(left) && std::isfinite(right)) return right - left;
  if (std::isfinite(left)) return 2.0 * (f0 - left);
  if (std::isfinite(right)) return 2.0 * (right - f0);
  return trace.freqs.back() - trace.freqs.front();
}

std::vector<std::size_t> outer_indices(std::size_t n) {
  const std::size_t k = std::max<std::size_t>(2, n / 10);
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < std::min(k, n); ++i) idx.push_back(i);
  for (std::size_t i = n > k ? n - k : 0; i < n; ++i) {
    if (idx.empty() || i > idx.back()) idx.push_back(i);
  }
  return idx;
}

// Pooled slope of unwrapped phase vs frequency over the two outer regions,
// each side with its own intercept. The symmetric resonance term of `shape`
// is divided out first so its phase tails do not leak into the slope.
double phase_slope_delay(const FrequencyTrace& trace, const LinearParams& shape) {
  const std::size_t n = trace.size();
  const std::size_t k = std::max<std::size_t>(2, n / 10);
  const double total = shape.total_loss();
  const double diameter = shape.coupling_loss / total;
  double sxy = 0.0;
  double sxx = 0.0;
  auto accumulate_side = [&](std::size_t lo, std::size_t hi) {
    std::vector<double> ph;
    double prev = 0.0;
    double offset = 0.0;
    for (std::size_t i = lo; i < hi; ++i) {
      const double x = (trace.freqs[i] - shape.resonant_freq) / (shape.resonant_freq * total);
      double a = std::arg(trace.s21[i] / (1.0 - diameter / Complex(1.0, 2.0 * x)));
      if (i > lo) {
        double d = a + offset - prev;
        while (d > std::numbers::pi) { offset -= constants::kTwoPi; d -= constants::kTwoPi; }
        while (d < -std::numbers::pi) { offset += constants::kTwoPi; d += constants::kTwoPi; }
      }
      a += offset;
      ph.push_back(a);
      prev = a;
    }
    double fm = 0.0;
    double pm = 0.0;
    for (std::size_t i = lo; i < hi; ++i) {
      fm += trace.freqs[i];
      pm += ph[i - lo];
    }
    fm /= static_cast<double>(hi - lo);
    pm /= static_cast<double>(hi - lo);
    for (std::size_t i = lo; i < hi; ++i) {
      const double df = trace.freqs[i] - fm;
      sxx += df * df;
      sxy += df * (ph[i - lo] - pm);
    }
  };
  accumulate_side(0, std::min(k, n));
  accumulate_side(n > k ? n - k : 0, n);
  return sxx > 0.0 ? sxy / sxx / constants::kTwoPi : 0.0;
}

double rolling_median_at(const std::vector<double>& v, std::size_t i, std::size_t half) {
  const std::size_t lo = i >= half ? i - half : 0;
  const std::size_t hi = std::min(v.size(), i + half + 1);
  return detail::median(std::vector<double>(v.begin() + static_cast<std::ptrdiff_t>(lo),
                                            v.begin() + static_cast<std::ptrdiff_t>(hi)));
}

}  // namespace

TraceStatistics trace_statistics(const FrequencyTrace& trace) {
  TraceStatistics st;
  const std::size_t n = trace.size();
  if (n == 0) return st;
  const auto outer = outer_indices(n);
  std::vector<double> outer_mag;
  for (std::size_t i : outer) outer_mag.push_back(std::abs(trace.s21[i]));
  st.baseline = detail::median(outer_mag);

  std::vector<double> diffs;
  for (std::size_t j = 1; j < outer.size(); ++j) {
    if (outer[j] != outer[j - 1] + 1) continue;
    const Complex d = trace.s21[outer[j]] - trace.s21[outer[j - 1]];
    diffs.push_back(std::abs(d.real()));
    diffs.push_back(std::abs(d.imag()));
  }
  // Successive differences of N(0, s^2) are N(0, 2 s^2); median |.| = 0.6745 sigma.
  st.noise_sigma = diffs.empty() ? 0.0 : detail::median(diffs) / 0.6745 / std::sqrt(2.0);

  const auto mag = smoothed_magnitudes(trace);
  const auto it = std::min_element(mag.begin(), mag.end());
  st.min_index = static_cast<std::size_t>(it - mag.begin());
  st.min_magnitude = *it;
  return st;
}

LinearParams estimate_initial(const FrequencyTrace& trace) {
  validate_trace(trace);
  const TraceStatistics st = trace_statistics(trace);
  const double depth = st.baseline - st.min_magnitude;
  if (!(depth > std::max(3.0 * st.noise_sigma, 1e-3 * st.baseline))) {
    throw NoResonanceError("no resonance dip found in trace '" + trace.label +
                           "' (depth below 3 sigma of the baseline noise)");
  }
  const auto mag = smoothed_magnitudes(trace);

  LinearParams p;
  p.amplitude = st.baseline;
  p.resonant_freq = trace.freqs[st.min_index];
  const double width = half_depth_width(trace, mag, st.min_index, st.baseline);
  const double total = std::clamp(width / p.resonant_freq, 1e-13, 0.5);
  const double diameter = std::clamp(1.0 - st.min_magnitude / st.baseline, 1e-3, 0.999);
  p.coupling_loss = diameter * total;
  p.internal_loss = (1.0 - diameter) * total;
  p.fano_asymmetry = 0.0;

  p.electric_delay = phase_slope_delay(trace, p);
  Complex acc{0.0, 0.0};
  for (std::size_t i : outer_indices(trace.size())) {
    const Complex z = trace.s21[i] * std::polar(1.0, -constants::kTwoPi * trace.freqs[i] * p.electric_delay);
    if (std::abs(z) > 0.0) acc += z / std::abs(z);
  }
  p.phase_offset = std::arg(acc);
  return p;
}

LinearFitReport fit_linear(const FrequencyTrace& trace, std::optional<LinearParams> guess,
                           const LinearFitOptions& options) {
  if (trace.size() < kMinLinearFitPoints) {
    throw PreconditionError("fit_linear: need at least " + std::to_string(kMinLinearFitPoints) +
                            " points for 7 parameters, got " + std::to_string(trace.size()));
  }
  validate_trace(trace);
  const LinearParams start = guess ? *guess : estimate_initial(trace);
  validate(start);

  const detail::FitFrame frame = detail::make_frame(trace, start);
  const auto u0 = detail::to_internal(start, frame);
  const std::size_t n = trace.size();

  LeastSquaresProblem problem;
  problem.n_params = detail::kLinearCoords;
  problem.n_residuals = 2 * n;
  problem.lower.resize(detail::kLinearCoords);
  problem.upper.resize(detail::kLinearCoords);
  detail::internal_bounds(problem.lower, problem.upper);
  problem.residuals = [&](std::span<const double> u, std::span<double> out) {
    const double f_r = frame.f_center + frame.linewidth0 * u[4];
    const double di = std::exp(u[5]);
    const double dc = std::exp(u[6]);
    const double total = di + dc;
    const Complex numer = std::polar(dc / total, u[3]);
    for (std::size_t k = 0; k < n; ++k) {
      const double f = trace.freqs[k];
      const double x = (f - f_r) / (f_r * total);
      const Complex model = detail::environment_internal(u, frame, f) * (1.0 - numer / Complex(1.0, 2.0 * x));
      const Complex r = model - trace.s21[k];
      out[2 * k] = r.real();
      out[2 * k + 1] = r.imag();
    }
  };

  LeastSquaresOptions lsq;
  lsq.max_iterations = options.max_iterations;
  lsq.relative_fd_step = options.relative_fd_step;
  const LeastSquaresResult sol =
      solve_least_squares(problem, std::vector<double>(u0.begin(), u0.end()), lsq);
  if (sol.rank_deficient) {
    throw SingularJacobianError("fit_linear: Jacobian is rank deficient at the solution for trace '" +
                                trace.label + "' (degenerate data)");
  }

  LinearFitReport rep;
  rep.params = detail::from_internal(sol.x, frame);
  rep.n_points = n;
  rep.iterations = sol.iterations;
  rep.residual_rms = std::sqrt(sol.sum_squares / static_cast<double>(n));

  const Eigen::MatrixXd m = detail::linear_map_jacobian(sol.x, frame);
  const Eigen::MatrixXd cov = m * sol.covariance * m.transpose();
  std::array<double, detail::kLinearCoords> err{};
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    bool unbounded = false;
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (m(i, j) != 0.0 && !std::isfinite(sol.std_errors[static_cast<std::size_t>(j)])) unbounded = true;
    }
    err[static_cast<std::size_t>(i)] = unbounded ? kInf : std::sqrt(std::max(cov(i, i), 0.0));
  }
  rep.std_errors = LinearParams{err[0], err[1], err[2], err[3], err[4], err[5], err[6]};

  bool in_domain = true;
  try {
    validate(rep.params);
  } catch (const ParameterDomainError&) {
    in_domain = false;
  }
  rep.converged = sol.converged && in_domain;
  if (!sol.converged) rep.diagnostics.notes.push_back("solver: " + sol.stop_reason);
  if (!in_domain) rep.diagnostics.notes.push_back("parameters left their domain");

  const TraceStatistics st = trace_statistics(trace);
  const double depth = st.baseline - st.min_magnitude;
  rep.diagnostics.low_snr = depth < 10.0 * st.noise_sigma;
  const double noise_floor = std::max(st.noise_sigma, 1e-6 * rep.params.amplitude);
  if (rep.residual_rms > 3.0 * std::sqrt(2.0) * noise_floor) {
    rep.diagnostics.nonlinear_suspected = true;
    rep.diagnostics.notes.push_back("residual rms exceeds 3x the noise estimate");
  }
  return rep;
}

FrequencyTrace window_around_resonance(const FrequencyTrace& trace, double n_linewidths) {
  const LinearParams g = estimate_initial(trace);
  const double lw = g.resonant_freq * g.total_loss();
  FrequencyTrace w = slice_trace(trace, g.resonant_freq - n_linewidths * lw, g.resonant_freq + n_linewidths * lw);
  return w.size() >= kMinLinearFitPoints ? w : trace;
}

std::vector<ResonanceWindow> segment_resonances(const FrequencyTrace& wideband,
                                                std::optional<std::size_t> expected) {
  validate_trace(wideband);
  const std::size_t n = wideband.size();
  const auto mag = smoothed_magnitudes(wideband);
  // The median window must stay wide compared with a dip even on densely
  // sampled scans, or the baseline sags into it and linewidths come out short.
  const std::size_t kHalfWindow = std::max<std::size_t>(100, n / 40);

  std::vector<double> baseline(n);
  for (std::size_t i = 0; i < n; ++i) baseline[i] = rolling_median_at(mag, i, kHalfWindow);

  std::vector<double> diffs;
  for (std::size_t i = 1; i < n; ++i) {
    const Complex d = wideband.s21[i] - wideband.s21[i - 1];
    diffs.push_back(std::abs(d.real()));
    diffs.push_back(std::abs(d.imag()));
  }
  const double sigma = detail::median(diffs) / 0.6745 / std::sqrt(2.0);

  struct Candidate {
    std::size_t index;
    double depth;
    double linewidth;
  };
  std::vector<Candidate> found;
  std::size_t i = 0;
  while (i < n) {
    const double thr = std::max(5.0 * sigma, 1e-3 * baseline[i]);
    if (baseline[i] - mag[i] <= thr) {
      ++i;
      continue;
    }
    std::size_t j = i;
    std::size_t best = i;
    while (j < n && baseline[j] - mag[j] > std::max(5.0 * sigma, 1e-3 * baseline[j])) {
      if (mag[j] < mag[best]) best = j;
      ++j;
    }
    const double lw = half_depth_width(wideband, mag, best, baseline[best]);
    found.push_back({best, baseline[best] - mag[best], lw});
    i = j;
  }

  // Fragments of one noisy dip: keep the deepest within 3 linewidths.
  std::sort(found.begin(), found.end(), [](const Candidate& a, const Candidate& b) { return a.depth > b.depth; });
  std::vector<Candidate> distinct;
  for (const auto& c : found) {
    const double fc = wideband.freqs[c.index];
    const bool dup = std::any_of(distinct.begin(), distinct.end(), [&](const Candidate& d) {
      return std::abs(wideband.freqs[d.index] - fc) < 3.0 * std::max(d.linewidth, c.linewidth);
    });
    if (!dup) distinct.push_back(c);
  }

  struct Span {
    double lo, hi, center, linewidth, depth;
    bool merged;
  };
  std::vector<Span> spans;
  for (const auto& c : distinct) {  // deepest first
    const double fc = wideband.freqs[c.index];
    Span s{fc - 6.0 * c.linewidth, fc + 6.0 * c.linewidth, fc, c.linewidth, c.depth, false};
    auto overlap = std::find_if(spans.begin(), spans.end(),
                                [&](const Span& o) { return s.lo <= o.hi && o.lo <= s.hi; });
    if (overlap != spans.end()) {
      overlap->lo = std::min(overlap->lo, s.lo);
      overlap->hi = std::max(overlap->hi, s.hi);
      overlap->merged = true;
    } else {
      spans.push_back(s);
    }
  }
  std::sort(spans.begin(), spans.end(), [](const Span& a, const Span& b) { return a.center < b.center; });

  if (expected && spans.size() != *expected) {
    std::vector<double> centers;
    for (const auto& s : spans) centers.push_back(s.center);
    throw SegmentationMismatchError(*expected, std::move(centers));
  }

  std::vector<ResonanceWindow> out;
  for (const auto& s : spans) {
    ResonanceWindow w;
    w.trace = slice_trace(wideband, s.lo, s.hi);
    w.trace.label = wideband.label.empty() ? "resonance" : wideband.label;
    w.center_hz = s.center;
    w.linewidth_hz = s.linewidth;
    w.depth = s.depth;
    w.merged = s.merged;
    out.push_back(std::move(w));
  }
  return out;
}

}  // namespace resofit
