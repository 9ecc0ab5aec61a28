#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace resofit {

/// Residual callback: writes `n_residuals` values for parameters `x`.
/// Non-finite output marks `x` as infeasible; the solver backs off.
using ResidualFunction = std::function<void(std::span<const double> x, std::span<double> out)>;

struct LeastSquaresProblem {
  std::size_t n_params = 0;
  std::size_t n_residuals = 0;
  ResidualFunction residuals;
  std::vector<double> lower;  // empty = unbounded
  std::vector<double> upper;
};

struct LeastSquaresOptions {
  int max_iterations = 200;
  double relative_fd_step = 1e-8;  // forward-difference step, relative to max(|x|, 1)
  double ftol = 1e-15;             // relative cost decrease
  double xtol = 1e-12;             // relative step size
  double gtol = 1e-14;             // scaled gradient
  double initial_damping = 1e-3;
};

struct LeastSquaresResult {
  std::vector<double> x;
  std::vector<double> std_errors;  // +inf for parameters the data do not constrain
  Eigen::MatrixXd covariance;
  double sum_squares = 0.0;
  double residual_variance = 0.0;  // sum_squares / (m - n)
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  bool rank_deficient = false;
  std::string stop_reason;
};

/// Damped Gauss-Newton (Levenberg-Marquardt with Marquardt diagonal scaling
/// and Nielsen damping updates) with box constraints enforced by projection.
/// Jacobians are forward finite differences. The covariance is the
/// pseudo-inverse of J^T J at the solution scaled by the residual variance.
LeastSquaresResult solve_least_squares(const LeastSquaresProblem& problem, std::vector<double> x0,
                                       const LeastSquaresOptions& options = {});

}  // namespace resofit
