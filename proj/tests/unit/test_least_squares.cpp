#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "resofit/least_squares.hpp"

using namespace resofit;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("Rosenbrock valley") {
  LeastSquaresProblem prob;
  prob.n_params = 2;
  prob.n_residuals = 2;
  prob.residuals = [](std::span<const double> x, std::span<double> r) {
    r[0] = 10.0 * (x[1] - x[0] * x[0]);
    r[1] = 1.0 - x[0];
  };
  const auto sol = solve_least_squares(prob, {-1.2, 1.0});
  CHECK(sol.converged);
  CHECK_THAT(sol.x[0], WithinAbs(1.0, 1e-8));
  CHECK_THAT(sol.x[1], WithinAbs(1.0, 1e-8));
}

TEST_CASE("exponential decay with known noise recovers parameters and errors") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> noise(0.0, 0.01);
  std::vector<double> t, y;
  for (int i = 0; i < 200; ++i) {
    t.push_back(0.05 * i);
    y.push_back(2.0 * std::exp(-0.7 * t.back()) + noise(rng));
  }
  LeastSquaresProblem prob;
  prob.n_params = 2;
  prob.n_residuals = t.size();
  prob.residuals = [&](std::span<const double> x, std::span<double> r) {
    for (std::size_t i = 0; i < t.size(); ++i) r[i] = x[0] * std::exp(-x[1] * t[i]) - y[i];
  };
  const auto sol = solve_least_squares(prob, {1.0, 0.1});
  REQUIRE(sol.converged);
  CHECK(std::abs(sol.x[0] - 2.0) < 4 * sol.std_errors[0]);
  CHECK(std::abs(sol.x[1] - 0.7) < 4 * sol.std_errors[1]);
  CHECK_THAT(std::sqrt(sol.residual_variance), WithinRel(0.01, 0.15));
}

TEST_CASE("bounds are respected and an active bound freezes its parameter") {
  LeastSquaresProblem prob;
  prob.n_params = 2;
  prob.n_residuals = 2;
  prob.residuals = [](std::span<const double> x, std::span<double> r) {
    r[0] = x[0] + 1.0;  // unconstrained optimum at -1
    r[1] = x[1] - 3.0;
  };
  prob.lower = {0.0, -10.0};
  prob.upper = {10.0, 10.0};
  const auto sol = solve_least_squares(prob, {5.0, 0.0});
  CHECK(sol.converged);
  CHECK(sol.x[0] == 0.0);
  CHECK_THAT(sol.x[1], WithinAbs(3.0, 1e-8));
}

TEST_CASE("an unused parameter gets an infinite standard error") {
  LeastSquaresProblem prob;
  prob.n_params = 2;
  prob.n_residuals = 3;
  prob.residuals = [](std::span<const double> x, std::span<double> r) {
    r[0] = x[0] - 1.0;
    r[1] = x[0] - 1.1;
    r[2] = x[0] - 0.9;
  };
  const auto sol = solve_least_squares(prob, {0.0, 0.0});
  CHECK(sol.rank_deficient);
  CHECK(std::isinf(sol.std_errors[1]));
  CHECK(std::isfinite(sol.std_errors[0]));
}

TEST_CASE("non-finite residuals are treated as infeasible steps") {
  LeastSquaresProblem prob;
  prob.n_params = 1;
  prob.n_residuals = 1;
  prob.residuals = [](std::span<const double> x, std::span<double> r) {
    r[0] = x[0] > 2.0 ? NAN : std::log(x[0]) - std::log(1.5);
  };
  const auto sol = solve_least_squares(prob, {1.9});
  CHECK(sol.converged);
  CHECK_THAT(sol.x[0], WithinRel(1.5, 1e-9));
}
