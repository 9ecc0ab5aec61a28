#include "resofit/tls_fit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "detail/stats.hpp"
#include "resofit/constants.hpp"
#include "resofit/errors.hpp"
#include "resofit/least_squares.hpp"

namespace resofit {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double thermal_factor(double f_r, double temperature) {
  return std::tanh(constants::kPlanck * f_r / (2.0 * constants::kBoltzmann * temperature));
}

}  // namespace

double eval_tls_loss(const TlsParams& t, double n) {
  if (!(n >= 0.0)) throw ParameterDomainError("photon number must be >= 0");
  return thermal_factor(t.f_r, t.temperature) / (t.q_tls * std::pow(1.0 + n / t.n_c, t.alpha_tls)) + t.delta_0;
}

double eval_combined_loss(const TlsParams& t, double two_photon_hz, double n) {
  if (!(two_photon_hz >= 0.0)) throw ParameterDomainError("two-photon rate must be >= 0");
  return eval_tls_loss(t, n) + two_photon_hz * n / t.f_r;
}

TlsParams TlsFitParams::to_tls() const {
  TlsParams t;
  t.q_tls = tls_loss > 0.0 ? 1.0 / tls_loss : kInf;
  t.n_c = n_c;
  t.alpha_tls = alpha_tls;
  t.delta_0 = delta_0;
  t.temperature = temperature;
  t.f_r = f_r;
  return t;
}

TlsFitReport fit_tls(std::span<const LossPoint> points, double temperature, double f_r, bool include_two_photon) {
  if (!(temperature > 0.0) || !(f_r > 0.0)) throw ParameterDomainError("fit_tls: T and f_r must be > 0");
  for (const auto& p : points) {
    if (!(p.photons > 0.0) || !(p.internal_loss > 0.0) || !std::isfinite(p.photons) ||
        !std::isfinite(p.internal_loss)) {
      throw ParameterDomainError("fit_tls: photon numbers and losses must be finite and > 0");
    }
  }
  if (points.size() < 6) {
    throw InsufficientSpanError("fit_tls: need at least 6 points, got " + std::to_string(points.size()));
  }
  const auto [nmin_it, nmax_it] = std::minmax_element(
      points.begin(), points.end(), [](const LossPoint& a, const LossPoint& b) { return a.photons < b.photons; });
  const double nmin = nmin_it->photons;
  const double nmax = nmax_it->photons;
  const double decades = std::log10(nmax / nmin);
  if (decades < 3.0) {
    throw InsufficientSpanError("fit_tls: photon numbers span " + std::to_string(decades) +
                                " decades, need at least 3");
  }

  const double th = thermal_factor(f_r, temperature);
  std::vector<double> losses;
  for (const auto& p : points) losses.push_back(p.internal_loss);
  const double scale = detail::median(losses);
  const double lmin = *std::min_element(losses.begin(), losses.end());
  const double lmax = *std::max_element(losses.begin(), losses.end());

  // Internal coordinates: [tls_loss*th/scale, delta_0/scale, log10 n_c, alpha, gamma nmax/(f_r scale)].
  const std::size_t np = include_two_photon ? 5 : 4;
  std::vector<double> u0{std::max(lmax - lmin, 0.05 * lmax) / scale, 0.9 * lmin / scale,
                         0.5 * (std::log10(nmin) + std::log10(nmax)) - 1.0, 0.5};
  // Start n_c near the photon number where the loss is half-way down.
  const double half = 0.5 * (lmax + lmin);
  for (const auto& p : points) {
    if (std::abs(p.internal_loss - half) < 0.25 * (lmax - lmin)) {
      u0[2] = std::log10(p.photons);
      break;
    }
  }
  std::vector<double> lower{0.0, 0.0, -6.0, 1e-3};
  std::vector<double> upper{kInf, kInf, 14.0, 2.0};
  const double gamma_scale = scale * f_r / nmax;
  if (include_two_photon) {
    u0.push_back(0.1);
    lower.push_back(0.0);
    upper.push_back(kInf);
  }

  LeastSquaresProblem problem;
  problem.n_params = np;
  problem.n_residuals = points.size();
  problem.lower = lower;
  problem.upper = upper;
  problem.residuals = [&](std::span<const double> u, std::span<double> out) {
    const double nc = std::pow(10.0, u[2]);
    for (std::size_t k = 0; k < points.size(); ++k) {
      const double n = points[k].photons;
      double model = scale * (u[0] / std::pow(1.0 + n / nc, u[3]) + u[1]);
      if (include_two_photon) model += u[4] * gamma_scale * n / f_r;
      out[k] = model > 0.0 ? std::log10(model) - std::log10(points[k].internal_loss)
                           : std::numeric_limits<double>::quiet_NaN();
    }
  };
  const LeastSquaresResult sol = solve_least_squares(problem, u0);
  if (!sol.converged) throw NonConvergenceError("fit_tls: " + sol.stop_reason);

  TlsFitReport rep;
  rep.params.tls_loss = sol.x[0] * scale / th;
  rep.params.delta_0 = sol.x[1] * scale;
  rep.params.n_c = std::pow(10.0, sol.x[2]);
  rep.params.alpha_tls = sol.x[3];
  rep.params.two_photon = include_two_photon ? sol.x[4] * gamma_scale : 0.0;
  rep.params.temperature = temperature;
  rep.params.f_r = f_r;
  const auto& e = sol.std_errors;
  rep.std_errors.tls_loss = e[0] * scale / th;
  rep.std_errors.delta_0 = e[1] * scale;
  rep.std_errors.n_c = rep.params.n_c * std::log(10.0) * e[2];
  rep.std_errors.alpha_tls = e[3];
  rep.std_errors.two_photon = include_two_photon ? e[4] * gamma_scale : 0.0;
  rep.residual_rms = std::sqrt(sol.sum_squares / static_cast<double>(points.size()));
  rep.n_points = points.size();
  rep.converged = true;
  rep.iterations = sol.iterations;
  if (sol.x[0] == 0.0) rep.diagnostics.notes.push_back("TLS term at its lower bound (power-independent loss)");
  if (sol.rank_deficient) rep.diagnostics.notes.push_back("n_c/alpha not constrained by the data");
  return rep;
}

}  // namespace resofit
