#include "resofit/duffing.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "detail/fit_frame.hpp"
#include "detail/stats.hpp"
#include "resofit/circle_fit.hpp"
#include "resofit/constants.hpp"
#include "resofit/errors.hpp"
#include "resofit/least_squares.hpp"
#include "resofit/linear_fit.hpp"

namespace resofit {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();
constexpr double kInf = std::numeric_limits<double>::infinity();

struct Cubic {
  double a, b, c;  // a n^3 + b n^2 + c n - 1/2

  Cubic(double xi, double eta, double x)
      : a(xi * xi + 0.25 * eta * eta), b(2.0 * (0.25 * eta - xi * x)), c(0.25 + x * x) {}

  double value(double n) const { return ((a * n + b) * n + c) * n - 0.5; }
  double slope(double n) const { return (3.0 * a * n + 2.0 * b) * n + c; }
  double scale(double n) const {
    return std::max({std::abs(a * n * n * n), std::abs(b * n * n), std::abs(c * n), 0.5});
  }
};

// Root in a sign-change bracket: Newton steps kept inside the bracket,
// bisection otherwise.
double bracketed_root(const Cubic& f, double lo, double hi) {
  double flo = f.value(lo);
  double fhi = f.value(hi);
  if (flo == 0.0) return lo;
  if (fhi == 0.0) return hi;
  if (flo > 0.0) {
    std::swap(lo, hi);
    std::swap(flo, fhi);
  }
  double r = 0.5 * (lo + hi);
  for (int it = 0; it < 400; ++it) {
    const double fr = f.value(r);
    if (fr == 0.0) return r;
    if (fr < 0.0) {
      lo = r;
    } else {
      hi = r;
    }
    const double left = std::min(lo, hi);
    const double right = std::max(lo, hi);
    if (right - left <= 4.0 * kEps * std::max(std::abs(left), std::abs(right))) return 0.5 * (left + right);
    const double d = f.slope(r);
    double next = d != 0.0 ? r - fr / d : 0.5 * (left + right);
    if (!(next > left && next < right)) next = 0.5 * (left + right);
    if (std::abs(next - r) <= 2.0 * kEps * std::abs(next)) return next;
    r = next;
  }
  return r;
}

std::vector<double> positive_roots(const Cubic& f) {
  if (f.a == 0.0) {
    // xi = eta = 0: c n = 1/2.
    return {0.5 / f.c};
  }
  std::vector<double> breaks{0.0};
  const double disc = f.b * f.b - 3.0 * f.a * f.c;
  if (disc > 0.0) {
    const double q = -(f.b + std::copysign(std::sqrt(disc), f.b));
    const double s1 = q / (3.0 * f.a);
    const double s2 = f.c / q;
    for (double s : {std::min(s1, s2), std::max(s1, s2)}) {
      if (s > 0.0 && std::isfinite(s)) breaks.push_back(s);
    }
  }
  double upper = std::max(1.0, (std::abs(f.b) + f.c + 0.5) / f.a);
  while (f.value(upper) <= 0.0) upper *= 2.0;
  breaks.push_back(upper);

  std::vector<double> roots;
  std::vector<int> sign(breaks.size());
  for (std::size_t k = 0; k < breaks.size(); ++k) {
    const double v = f.value(breaks[k]);
    const bool tangent = k > 0 && k + 1 < breaks.size() && std::abs(v) <= 64.0 * kEps * f.scale(breaks[k]);
    sign[k] = tangent ? 0 : (v > 0.0 ? 1 : -1);
    if (tangent) roots.push_back(breaks[k]);
  }
  for (std::size_t k = 0; k + 1 < breaks.size(); ++k) {
    if (sign[k] * sign[k + 1] < 0) roots.push_back(bracketed_root(f, breaks[k], breaks[k + 1]));
  }
  std::sort(roots.begin(), roots.end());
  return roots;
}

double select_root(const std::vector<double>& roots, BranchPolicy policy, std::optional<double> previous) {
  switch (policy) {
    case BranchPolicy::kLow:
      return roots.front();
    case BranchPolicy::kHigh:
      return roots.back();
    case BranchPolicy::kSweepUp:
    case BranchPolicy::kSweepDown: {
      if (!previous) return policy == BranchPolicy::kSweepUp ? roots.front() : roots.back();
      // The middle root of three is the unstable branch.
      std::vector<double> stable = roots;
      if (stable.size() == 3) stable = {roots.front(), roots.back()};
      return *std::min_element(stable.begin(), stable.end(), [&](double l, double r) {
        return std::abs(l - *previous) < std::abs(r - *previous);
      });
    }
  }
  return roots.front();
}

enum class Order { kAny, kAscending, kDescending };

Order frequency_order(std::span<const double> freqs) {
  bool inc = true;
  bool dec = true;
  for (std::size_t i = 1; i < freqs.size(); ++i) {
    inc = inc && freqs[i] > freqs[i - 1];
    dec = dec && freqs[i] < freqs[i - 1];
  }
  if (inc) return Order::kAscending;
  if (dec) return Order::kDescending;
  return Order::kAny;
}

// Visit indices in the physical sweep direction of `policy`.
std::vector<std::size_t> sweep_indices(std::span<const double> freqs, BranchPolicy policy) {
  std::vector<std::size_t> idx(freqs.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  if (policy != BranchPolicy::kSweepUp && policy != BranchPolicy::kSweepDown) return idx;
  const Order order = frequency_order(freqs);
  if (order == Order::kAny && freqs.size() > 1) {
    throw ParameterDomainError("sweep branch policies need a monotone frequency grid");
  }
  const bool ascending = order != Order::kDescending;
  const bool want_up = policy == BranchPolicy::kSweepUp;
  if (ascending != want_up) std::reverse(idx.begin(), idx.end());
  return idx;
}

struct Shape {
  Complex numer;  // (delta_c / total) e^{i alpha}
  double xi;
  double eta;
  double scaled_drive;
};

// Shared per-point evaluation; `env(f)` supplies the environment factor and
// `detuning(f)` the normalized detuning.
template <class Env, class Detuning>
NonlinearResponse respond(const Shape& s, std::span<const double> freqs, BranchPolicy policy, Env&& env,
                          Detuning&& detuning) {
  NonlinearResponse out;
  const std::size_t n = freqs.size();
  out.s21.resize(n);
  out.normalized_photons.resize(n);
  out.photons.resize(n);
  out.root_count.resize(n);
  std::optional<double> prev;
  std::uint8_t prev_count = 0;
  for (std::size_t i : sweep_indices(freqs, policy)) {
    const double x = detuning(freqs[i]);
    const PhotonNumberSolution sol = solve_photon_number(s.xi, s.eta, x, policy, prev);
    const double nt = sol.selected;
    const auto count = static_cast<std::uint8_t>(sol.roots.size());
    // Only a multi-root stretch can hop branches; a unique root moves continuously
    // however steep the line shape is on a coarse grid.
    if (prev && count > 1 && count == prev_count) {
      const double jump = std::abs(nt - *prev) / std::max(nt, *prev);
      out.max_continuous_jump = std::max(out.max_continuous_jump, jump);
    }
    prev = nt;
    prev_count = count;
    out.normalized_photons[i] = nt;
    out.photons[i] = nt * s.scaled_drive;
    out.root_count[i] = count;
    if (count > 1) ++out.multi_root_points;
    const Complex denom(1.0 + s.eta * nt, 2.0 * (x - s.xi * nt));
    out.s21[i] = env(freqs[i]) * (1.0 - s.numer / denom);
  }
  return out;
}

Shape shape_of(const NonlinearParams& p) {
  const DriveNormalization dn = normalized_drive_params(p);
  return Shape{std::polar(p.linear.diameter(), p.linear.fano_asymmetry), dn.xi, dn.eta, dn.scaled_drive};
}

}  // namespace

const char* to_string(BranchPolicy policy) {
  switch (policy) {
    case BranchPolicy::kLow: return "low";
    case BranchPolicy::kHigh: return "high";
    case BranchPolicy::kSweepUp: return "sweep-up";
    case BranchPolicy::kSweepDown: return "sweep-down";
  }
  return "low";
}

BranchPolicy parse_branch_policy(std::string_view text) {
  if (text == "low") return BranchPolicy::kLow;
  if (text == "high") return BranchPolicy::kHigh;
  if (text == "sweep-up" || text == "sweep_up") return BranchPolicy::kSweepUp;
  if (text == "sweep-down" || text == "sweep_down") return BranchPolicy::kSweepDown;
  throw ParameterDomainError("unknown branch policy '" + std::string(text) + "'");
}

DriveNormalization normalized_drive_params(const NonlinearParams& p) {
  validate(p);
  const double total = p.linear.total_loss();
  const double linewidth_hz = p.linear.resonant_freq * total;
  if (!(linewidth_hz > 0.0)) throw ParameterDomainError("zero total linewidth");
  const double kappa = constants::kTwoPi * linewidth_hz;
  const double kappa_c = constants::kTwoPi * p.linear.resonant_freq * p.linear.coupling_loss;
  DriveNormalization d;
  d.scaled_drive = kappa_c * p.drive_flux / (kappa * kappa);
  d.xi = d.scaled_drive * p.kerr / linewidth_hz;
  d.eta = d.scaled_drive * p.two_photon / linewidth_hz;
  return d;
}

double photon_cubic(double n, double xi, double eta, double detuning) {
  return Cubic(xi, eta, detuning).value(n);
}

PhotonNumberSolution solve_photon_number(double xi, double eta, double detuning, BranchPolicy policy,
                                         std::optional<double> previous) {
  if (!(eta >= 0.0) || !std::isfinite(eta)) throw ParameterDomainError("eta must be finite and >= 0");
  if (!std::isfinite(xi) || !std::isfinite(detuning)) throw ParameterDomainError("xi and detuning must be finite");
  const Cubic f(xi, eta, detuning);
  PhotonNumberSolution sol;
  sol.roots = positive_roots(f);
  if (sol.roots.empty()) {
    throw InternalConsistencyError("photon-number cubic has no positive root (xi=" + std::to_string(xi) +
                                   ", eta=" + std::to_string(eta) + ", x=" + std::to_string(detuning) + ")");
  }
  sol.selected = select_root(sol.roots, policy, previous);
  return sol;
}

NonlinearResponse evaluate_nonlinear(const NonlinearParams& p, std::span<const double> freqs,
                                     BranchPolicy policy) {
  const Shape s = shape_of(p);
  for (double f : freqs) {
    if (!std::isfinite(f)) throw ParameterDomainError("eval_nonlinear_s21: non-finite frequency");
  }
  return respond(
      s, freqs, policy, [&](double f) { return environment(p.linear, f); },
      [&](double f) { return normalized_detuning(p.linear, f); });
}

std::vector<Complex> eval_nonlinear_s21(const NonlinearParams& p, std::span<const double> freqs,
                                        BranchPolicy policy) {
  return evaluate_nonlinear(p, freqs, policy).s21;
}

double max_photon_number(const NonlinearParams& p, std::span<const double> freqs, BranchPolicy policy) {
  const auto r = evaluate_nonlinear(p, freqs, policy);
  return r.photons.empty() ? 0.0 : *std::max_element(r.photons.begin(), r.photons.end());
}

NonlinearFitReport fit_nonlinear(const FrequencyTrace& trace, const NonlinearParams& guess, BranchPolicy policy,
                                 const NonlinearFitOptions& options) {
  constexpr std::size_t kParams = detail::kLinearCoords + 2;
  if (trace.size() < kParams + 1) {
    throw PreconditionError("fit_nonlinear: need at least " + std::to_string(kParams + 1) + " points");
  }
  validate_trace(trace);
  validate(guess);
  const double drive = guess.drive_flux;

  const detail::FitFrame frame = detail::make_frame(trace, guess.linear);
  const auto lin0 = detail::to_internal(guess.linear, frame);
  // Kerr and two-photon coordinates are scaled by the linear-limit photon
  // number at resonance so that they read as normalized shifts (~ xi n~).
  double n_ref = 2.0 * normalized_drive_params(guess).scaled_drive;
  if (!(n_ref > 0.0)) n_ref = 1.0;
  const double rate_scale = frame.linewidth0 / n_ref;

  std::vector<double> u0(lin0.begin(), lin0.end());
  u0.push_back(guess.kerr / rate_scale);
  u0.push_back(guess.two_photon / rate_scale);

  LeastSquaresProblem problem;
  problem.n_params = kParams;
  problem.n_residuals = 2 * trace.size();
  problem.lower.resize(kParams);
  problem.upper.resize(kParams);
  detail::internal_bounds(problem.lower, problem.upper);
  problem.lower[7] = -kInf;
  problem.upper[7] = kInf;
  problem.lower[8] = 0.0;
  problem.upper[8] = kInf;

  auto params_of = [&](std::span<const double> u) {
    NonlinearParams p;
    p.linear = detail::from_internal(u, frame);
    p.kerr = u[7] * rate_scale;
    p.two_photon = u[8] * rate_scale;
    p.drive_flux = drive;
    return p;
  };
  auto response_of = [&](std::span<const double> u) {
    const NonlinearParams p = params_of(u);
    Shape s = shape_of(p);
    const double f_r = p.linear.resonant_freq;
    const double total = p.linear.total_loss();
    return respond(
        s, trace.freqs, policy, [&](double f) { return detail::environment_internal(u, frame, f); },
        [&](double f) { return (f - f_r) / (f_r * total); });
  };

  problem.residuals = [&](std::span<const double> u, std::span<double> out) {
    try {
      const NonlinearResponse r = response_of(u);
      for (std::size_t k = 0; k < trace.size(); ++k) {
        const Complex d = r.s21[k] - trace.s21[k];
        out[2 * k] = d.real();
        out[2 * k + 1] = d.imag();
      }
    } catch (const Error&) {
      std::fill(out.begin(), out.end(), std::numeric_limits<double>::quiet_NaN());
    }
  };

  LeastSquaresOptions lsq;
  lsq.max_iterations = options.max_iterations;
  lsq.relative_fd_step = options.relative_fd_step;
  const LeastSquaresResult sol = solve_least_squares(problem, u0, lsq);

  NonlinearFitReport rep;
  rep.params = params_of(sol.x);
  rep.n_points = trace.size();
  rep.iterations = sol.iterations;
  rep.residual_rms = std::sqrt(sol.sum_squares / static_cast<double>(trace.size()));

  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(kParams, kParams);
  m.topLeftCorner(detail::kLinearCoords, detail::kLinearCoords) = detail::linear_map_jacobian(sol.x, frame);
  m(7, 7) = rate_scale;
  m(8, 8) = rate_scale;
  const Eigen::MatrixXd cov = m * sol.covariance * m.transpose();
  std::array<double, kParams> err{};
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    bool unbounded = false;
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (m(i, j) != 0.0 && !std::isfinite(sol.std_errors[static_cast<std::size_t>(j)])) unbounded = true;
    }
    err[static_cast<std::size_t>(i)] = unbounded ? kInf : std::sqrt(std::max(cov(i, i), 0.0));
  }
  rep.std_errors.linear = LinearParams{err[0], err[1], err[2], err[3], err[4], err[5], err[6]};
  rep.std_errors.kerr = err[7];
  rep.std_errors.two_photon = err[8];
  rep.std_errors.drive_flux = 0.0;

  bool in_domain = true;
  try {
    validate(rep.params);
  } catch (const ParameterDomainError&) {
    in_domain = false;
  }
  rep.converged = sol.converged && in_domain;
  if (!sol.converged) rep.diagnostics.notes.push_back("solver: " + sol.stop_reason);

  const NonlinearResponse final_response = response_of(sol.x);
  rep.diagnostics.bifurcated = final_response.multi_root_points > 0;
  if (final_response.max_continuous_jump > options.continuity_threshold) {
    throw BifurcationUnstableError("fit_nonlinear: selected photon number jumps by " +
                                   std::to_string(100.0 * final_response.max_continuous_jump) +
                                   " % between adjacent points away from a fold (trace '" + trace.label + "')");
  }
  const DriveNormalization dn = normalized_drive_params(rep.params);
  rep.diagnostics.notes.push_back("xi=" + std::to_string(dn.xi) + " eta=" + std::to_string(dn.eta));
  rep.diagnostics.low_sensitivity = !(3.0 * rep.std_errors.kerr < std::abs(rep.params.kerr)) &&
                                    !(3.0 * rep.std_errors.two_photon < rep.params.two_photon);
  rep.diagnostics.nonlinear_suspected = std::abs(dn.xi) > 0.1 || dn.eta > 0.1;
  return rep;
}

KerrExtraction extract_kerr_two_photon(std::span<const NonlinearFitReport> fits,
                                       std::span<const double> photon_numbers) {
  if (fits.size() != photon_numbers.size()) {
    throw PreconditionError("extract_kerr_two_photon: fits and photon numbers differ in length");
  }
  if (fits.size() < 4) {
    throw InsufficientPowersError("extract_kerr_two_photon: need at least 4 powers, got " +
                                  std::to_string(fits.size()));
  }
  KerrExtraction out;
  for (std::size_t i = 0; i < fits.size(); ++i) {
    const double n = photon_numbers[i];
    if (!(n > 0.0) || !std::isfinite(n)) throw PreconditionError("photon numbers must be positive");
    out.photon_numbers.push_back(n);
    out.kerr_shifts.push_back(fits[i].params.kerr * n);
    out.two_photon_rates.push_back(fits[i].params.two_photon * n);
  }
  // Slope error: the larger of the residual scatter and the per-power fit
  // errors propagated through the regression. Bounded fits (gamma >= 0) can
  // scatter far less than their own uncertainty.
  auto regress = [&](const std::vector<double>& y, const std::vector<double>& y_err, double& slope, double& err,
                     double& r2) {
    double sxx = 0.0;
    double sxy = 0.0;
    double syy = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      sxx += out.photon_numbers[i] * out.photon_numbers[i];
      sxy += out.photon_numbers[i] * y[i];
      syy += y[i] * y[i];
    }
    slope = sxy / sxx;
    double ss_res = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double r = y[i] - slope * out.photon_numbers[i];
      ss_res += r * r;
    }
    double propagated = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double w = out.photon_numbers[i] * y_err[i];
      propagated += w * w;
    }
    err = std::sqrt(std::max(ss_res / static_cast<double>(y.size() - 1) / sxx, propagated / (sxx * sxx)));
    r2 = syy > 0.0 ? 1.0 - ss_res / syy : 0.0;
  };
  std::vector<double> kerr_err;
  std::vector<double> two_photon_err;
  for (std::size_t i = 0; i < fits.size(); ++i) {
    const double n = photon_numbers[i];
    const double ek = fits[i].std_errors.kerr;
    const double eg = fits[i].std_errors.two_photon;
    kerr_err.push_back(std::isfinite(ek) ? ek * n : 0.0);
    two_photon_err.push_back(std::isfinite(eg) ? eg * n : 0.0);
  }
  regress(out.kerr_shifts, kerr_err, out.kerr, out.kerr_err, out.r2_kerr);
  regress(out.two_photon_rates, two_photon_err, out.two_photon, out.two_photon_err, out.r2_two_photon);
  return out;
}

double ellipticity_metric(const FrequencyTrace& trace, const LinearParams& linear_fit) {
  validate_trace(trace);
  validate(linear_fit);
  std::vector<Complex> z(trace.size());
  for (std::size_t i = 0; i < trace.size(); ++i) z[i] = trace.s21[i] / environment(linear_fit, trace.freqs[i]);
  const Circle c = fit_circle(z);
  const double noise = trace_statistics(trace).noise_sigma / linear_fit.amplitude;
  if (c.radius < std::max(3.0 * noise, 1e-9)) {
    throw LowSignalError("ellipticity: circle radius " + std::to_string(c.radius) + " is below the noise floor");
  }
  return max_relative_radial_deviation(c, z);
}

}  // namespace resofit
