#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "resofit/fit_report.hpp"
#include "resofit/model.hpp"

namespace resofit {

/// Which root of the photon-number cubic to use where it has three.
///  kLow / kHigh: smallest / largest positive root at every point.
///  kSweepUp / kSweepDown: continuation along increasing / decreasing
///  frequency, staying on the stable branch closest to the previous point.
enum class BranchPolicy { kLow, kHigh, kSweepUp, kSweepDown };

const char* to_string(BranchPolicy policy);
/// Accepts "low", "high", "sweep-up"/"sweep_up", "sweep-down"/"sweep_down".
BranchPolicy parse_branch_policy(std::string_view text);

struct DriveNormalization {
  double xi = 0.0;            // |a~_in|^2 K_nl / (kappa_i + kappa_c)
  double eta = 0.0;           // |a~_in|^2 gamma_nl / (kappa_i + kappa_c)
  double scaled_drive = 0.0;  // |a~_in|^2 = kappa_c |a_in|^2 / (kappa_i + kappa_c)^2, photons
};

/// Dimensionless drive parameters. Linewidths entering |a~_in|^2 are angular
/// (kappa = 2 pi f_r delta) so that n = n~ |a~_in|^2 is the physical photon
/// number; xi and eta are ratios of like-unit rates.
DriveNormalization normalized_drive_params(const NonlinearParams& p);

/// Steady-state photon-number polynomial
///   n^3 (xi^2 + eta^2/4) + 2 n^2 (eta/4 - xi x) + n (1/4 + x^2) - 1/2
/// for normalized detuning x.
double photon_cubic(double n, double xi, double eta, double detuning);

struct PhotonNumberSolution {
  double selected = 0.0;
  std::vector<double> roots;  // positive real roots, ascending
};

/// All positive real roots of the cubic, bracketed between the stationary
/// points and polished by safeguarded Newton, plus the one picked by
/// `policy`. Sweep policies without `previous` start on the low branch
/// (sweep up) or the high branch (sweep down).
PhotonNumberSolution solve_photon_number(double xi, double eta, double detuning, BranchPolicy policy,
                                         std::optional<double> previous = std::nullopt);

struct NonlinearResponse {
  std::vector<Complex> s21;
  std::vector<double> normalized_photons;  // n~ per point
  std::vector<double> photons;             // physical n per point
  std::vector<std::uint8_t> root_count;
  std::size_t multi_root_points = 0;
  /// Largest relative jump of the selected root between adjacent points
  /// (in sweep order) that both have three roots.
  double max_continuous_jump = 0.0;
};

NonlinearResponse evaluate_nonlinear(const NonlinearParams& p, std::span<const double> freqs,
                                     BranchPolicy policy);

std::vector<Complex> eval_nonlinear_s21(const NonlinearParams& p, std::span<const double> freqs,
                                        BranchPolicy policy);

/// Maximum intra-resonator photon number over `freqs` on the selected branch.
double max_photon_number(const NonlinearParams& p, std::span<const double> freqs, BranchPolicy policy);

struct NonlinearFitOptions {
  int max_iterations = 200;
  double relative_fd_step = 1e-8;
  double continuity_threshold = 0.10;
};

/// Least-squares fit over the seven linear parameters plus K_nl and
/// gamma_nl (>= 0); the drive flux is taken from `guess` and held fixed.
/// Every residual evaluation re-solves the cubic per frequency point.
NonlinearFitReport fit_nonlinear(const FrequencyTrace& trace, const NonlinearParams& guess,
                                 BranchPolicy policy = BranchPolicy::kSweepUp,
                                 const NonlinearFitOptions& options = {});

struct KerrExtraction {
  double kerr = 0.0;  // Hz
  double kerr_err = 0.0;
  double two_photon = 0.0;  // Hz
  double two_photon_err = 0.0;
  double r2_kerr = 0.0;  // uncentred R^2 of the through-origin regression
  double r2_two_photon = 0.0;
  std::vector<double> photon_numbers;
  std::vector<double> kerr_shifts;        // K_nl n per power, Hz
  std::vector<double> two_photon_rates;   // gamma_nl n per power, Hz
};

/// Through-origin regressions of the per-power Kerr shift K n and two-photon
/// rate gamma n against the per-power photon number; the slopes are K_nl and
/// gamma_nl. Needs at least four powers.
KerrExtraction extract_kerr_two_photon(std::span<const NonlinearFitReport> per_power_fits,
                                       std::span<const double> photon_numbers);

/// Max radial deviation from the best-fit circle over the circle radius,
/// after dividing out the environment of `linear_fit`. Throws LowSignalError
/// when the circle radius is below the noise floor.
double ellipticity_metric(const FrequencyTrace& trace, const LinearParams& linear_fit);

}  // namespace resofit
