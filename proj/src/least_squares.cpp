#include "resofit/least_squares.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "resofit/errors.hpp"

namespace resofit {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Evaluator {
  const LeastSquaresProblem& problem;
  int count = 0;

  double operator()(const std::vector<double>& x, Eigen::VectorXd& r) {
    ++count;
    r.resize(static_cast<Eigen::Index>(problem.n_residuals));
    problem.residuals(x, std::span<double>(r.data(), problem.n_residuals));
    const double ss = r.squaredNorm();
    return std::isfinite(ss) ? ss : kInf;
  }
};

double lower_of(const LeastSquaresProblem& p, std::size_t j) {
  return p.lower.empty() ? -kInf : p.lower[j];
}
double upper_of(const LeastSquaresProblem& p, std::size_t j) {
  return p.upper.empty() ? kInf : p.upper[j];
}

void project(const LeastSquaresProblem& p, std::vector<double>& x) {
  for (std::size_t j = 0; j < x.size(); ++j) x[j] = std::clamp(x[j], lower_of(p, j), upper_of(p, j));
}

// Forward differences; the step flips sign at an upper bound.
bool jacobian(const LeastSquaresProblem& p, Evaluator& eval, const std::vector<double>& x,
              const Eigen::VectorXd& r0, double rel_step, Eigen::MatrixXd& jac) {
  const auto m = static_cast<Eigen::Index>(p.n_residuals);
  jac.resize(m, static_cast<Eigen::Index>(p.n_params));
  std::vector<double> xp = x;
  Eigen::VectorXd r1;
  for (std::size_t j = 0; j < p.n_params; ++j) {
    double h = rel_step * std::max(std::abs(x[j]), 1.0);
    if (x[j] + h > upper_of(p, j)) h = -h;
    xp[j] = x[j] + h;
    if (!std::isfinite(eval(xp, r1))) {
      xp[j] = x[j] - h;
      h = -h;
      if (!std::isfinite(eval(xp, r1))) return false;
    }
    jac.col(static_cast<Eigen::Index>(j)) = (r1 - r0) / h;
    xp[j] = x[j];
  }
  return true;
}

}  // namespace

LeastSquaresResult solve_least_squares(const LeastSquaresProblem& problem, std::vector<double> x,
                                       const LeastSquaresOptions& options) {
  const std::size_t n = problem.n_params;
  const std::size_t m = problem.n_residuals;
  if (x.size() != n) throw PreconditionError("least squares: initial vector has wrong size");
  if (m < n) throw PreconditionError("least squares: fewer residuals than parameters");
  if ((!problem.lower.empty() && problem.lower.size() != n) ||
      (!problem.upper.empty() && problem.upper.size() != n)) {
    throw PreconditionError("least squares: bound vectors have wrong size");
  }
  project(problem, x);

  Evaluator eval{problem};
  LeastSquaresResult result;
  Eigen::VectorXd r;
  double ss = eval(x, r);
  if (!std::isfinite(ss)) throw PreconditionError("least squares: initial point is infeasible");

  Eigen::MatrixXd jac;
  double lambda = options.initial_damping;
  double nu = 2.0;
  bool need_jacobian = true;
  Eigen::MatrixXd jtj;
  Eigen::VectorXd grad;
  Eigen::VectorXd diag;

  int iter = 0;
  for (; iter < options.max_iterations; ++iter) {
    if (need_jacobian) {
      if (!jacobian(problem, eval, x, r, options.relative_fd_step, jac)) {
        result.stop_reason = "jacobian evaluation failed";
        break;
      }
      jtj = jac.transpose() * jac;
      grad = jac.transpose() * r;
      diag = jtj.diagonal().cwiseMax(1e-30);
      need_jacobian = false;

      double gmax = 0.0;
      for (Eigen::Index j = 0; j < grad.size(); ++j) {
        // Ignore gradient components that point out of an active bound.
        const auto uj = static_cast<std::size_t>(j);
        if ((x[uj] <= lower_of(problem, uj) && grad(j) > 0.0) ||
            (x[uj] >= upper_of(problem, uj) && grad(j) < 0.0)) {
          continue;
        }
        gmax = std::max(gmax, std::abs(grad(j)) / std::sqrt(diag(j) * std::max(ss, 1e-300)));
      }
      if (gmax <= options.gtol) {
        result.converged = true;
        result.stop_reason = "gradient below tolerance";
        break;
      }
    }

    // Active set: parameters sitting on a bound whose gradient points
    // outward are frozen for this step.
    std::vector<Eigen::Index> free_idx;
    for (std::size_t j = 0; j < n; ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      const bool pinned = (x[j] <= lower_of(problem, j) && grad(jj) > 0.0) ||
                          (x[j] >= upper_of(problem, j) && grad(jj) < 0.0);
      if (!pinned) free_idx.push_back(jj);
    }
    Eigen::VectorXd step = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    if (!free_idx.empty()) {
      const auto nf = static_cast<Eigen::Index>(free_idx.size());
      Eigen::MatrixXd damped(nf, nf);
      Eigen::VectorXd rhs(nf);
      for (Eigen::Index a = 0; a < nf; ++a) {
        rhs(a) = -grad(free_idx[static_cast<std::size_t>(a)]);
        for (Eigen::Index b = 0; b < nf; ++b) {
          damped(a, b) = jtj(free_idx[static_cast<std::size_t>(a)], free_idx[static_cast<std::size_t>(b)]);
        }
        damped(a, a) += lambda * diag(free_idx[static_cast<std::size_t>(a)]);
      }
      const Eigen::VectorXd sub = damped.ldlt().solve(rhs);
      for (Eigen::Index a = 0; a < nf; ++a) step(free_idx[static_cast<std::size_t>(a)]) = sub(a);
    }
    std::vector<double> trial(n);
    for (std::size_t j = 0; j < n; ++j) trial[j] = x[j] + step(static_cast<Eigen::Index>(j));
    project(problem, trial);

    Eigen::VectorXd actual_step(static_cast<Eigen::Index>(n));
    double xnorm = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      actual_step(static_cast<Eigen::Index>(j)) = trial[j] - x[j];
      xnorm += x[j] * x[j];
    }
    xnorm = std::sqrt(xnorm);

    Eigen::VectorXd r_trial;
    const double ss_trial = eval(trial, r_trial);
    const Eigen::VectorXd jstep = jac * actual_step;
    const double predicted = -(2.0 * grad.dot(actual_step) + jstep.squaredNorm());
    const double rho = predicted > 0.0 ? (ss - ss_trial) / predicted : -1.0;

    if (std::isfinite(ss_trial) && ss_trial < ss) {
      const double rel_decrease = (ss - ss_trial) / std::max(ss, 1e-300);
      x = std::move(trial);
      r = std::move(r_trial);
      ss = ss_trial;
      need_jacobian = true;
      lambda *= std::max(1.0 / 3.0, 1.0 - std::pow(2.0 * rho - 1.0, 3));
      nu = 2.0;
      const bool small_step = actual_step.norm() <= options.xtol * (xnorm + options.xtol);
      if (rel_decrease <= options.ftol || small_step || ss == 0.0) {
        result.converged = true;
        result.stop_reason = small_step ? "step below tolerance" : "cost decrease below tolerance";
        ++iter;
        break;
      }
    } else {
      lambda *= nu;
      nu *= 2.0;
      if (actual_step.norm() <= options.xtol * (xnorm + options.xtol) || lambda > 1e30) {
        result.converged = true;
        result.stop_reason = "no further decrease possible";
        ++iter;
        break;
      }
    }
  }
  if (!result.converged && result.stop_reason.empty()) result.stop_reason = "maximum iterations reached";

  // Covariance at the final point.
  if (!jacobian(problem, eval, x, r, options.relative_fd_step, jac)) {
    jac.setZero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
  }
  jtj = jac.transpose() * jac;
  Eigen::VectorXd scale = jtj.diagonal().cwiseSqrt();
  Eigen::MatrixXd corr = jtj;
  for (Eigen::Index i = 0; i < corr.rows(); ++i) {
    for (Eigen::Index j = 0; j < corr.cols(); ++j) {
      const double s = scale(i) * scale(j);
      corr(i, j) = s > 0.0 ? corr(i, j) / s : (i == j ? 0.0 : 0.0);
    }
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(corr);
  const Eigen::VectorXd ev = eig.eigenvalues();
  const double ev_max = ev.size() > 0 ? ev.maxCoeff() : 0.0;
  Eigen::VectorXd inv_ev(ev.size());
  for (Eigen::Index k = 0; k < ev.size(); ++k) {
    if (ev(k) > 1e-12 * ev_max && ev_max > 0.0) {
      inv_ev(k) = 1.0 / ev(k);
    } else {
      inv_ev(k) = 0.0;
      result.rank_deficient = true;
    }
  }
  Eigen::MatrixXd pinv = eig.eigenvectors() * inv_ev.asDiagonal() * eig.eigenvectors().transpose();
  const double dof = static_cast<double>(m > n ? m - n : 1);
  result.residual_variance = ss / dof;
  result.covariance.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  result.std_errors.assign(n, 0.0);
  for (Eigen::Index i = 0; i < pinv.rows(); ++i) {
    for (Eigen::Index j = 0; j < pinv.cols(); ++j) {
      const double s = scale(i) * scale(j);
      result.covariance(i, j) = s > 0.0 ? pinv(i, j) / s * result.residual_variance : 0.0;
    }
  }
  for (std::size_t j = 0; j < n; ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    result.std_errors[j] = scale(jj) > 0.0 ? std::sqrt(std::max(result.covariance(jj, jj), 0.0)) : kInf;
  }

  result.x = std::move(x);
  result.sum_squares = ss;
  result.iterations = iter;
  result.evaluations = eval.count;
  return result;
}

}  // namespace resofit
