#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "resofit/calibration.hpp"
#include "resofit/errors.hpp"
#include "resofit/linear_fit.hpp"
#include "resofit/synth.hpp"
#include "resofit/tls_fit.hpp"
#include "test_util.hpp"

using namespace resofit;
using Catch::Matchers::WithinRel;
using testutil::rel;

TEST_CASE("Gaussian stream is Box-Muller on the standard engine") {
  GaussianNoise g(42);
  std::mt19937_64 e(42);
  auto u = [&] { return static_cast<double>(e() >> 11) * 0x1.0p-53; };
  for (int k = 0; k < 100; ++k) {
    const double u1 = u();
    const double u2 = u();
    const double r = std::sqrt(-2.0 * std::log(1.0 - u1));
    const double theta = 6.283185307179586 * u2;
    const auto [a, b] = g.next_pair();
    CHECK(a == r * std::cos(theta));
    CHECK(b == r * std::sin(theta));
  }
}

TEST_CASE("grid is uniform around the resonance") {
  const auto p = testutil::reference_params();
  const auto f = resonance_grid(p, 5.0, 401);
  REQUIRE(f.size() == 401);
  const double lw = loaded_linewidth(p);
  CHECK_THAT(f.front(), WithinRel(p.resonant_freq - 5.0 * lw, 1e-15));
  CHECK_THAT(f.back(), WithinRel(p.resonant_freq + 5.0 * lw, 1e-15));
  CHECK(f[200] == p.resonant_freq);
}

TEST_CASE("noise-free linear synthesis is the model") {
  const auto p = testutil::reference_params();
  const auto f = resonance_grid(p, 5.0, 401);
  const auto t = synthesize_linear(p, f, 0.0, 1);
  const auto m = eval_linear_s21(p, f);
  for (std::size_t i = 0; i < f.size(); ++i) CHECK(t.s21[i] == m[i]);
}

TEST_CASE("same seed, same trace; different seed, different trace") {
  const auto p = testutil::reference_params();
  const auto f = resonance_grid(p, 5.0, 401);
  const auto a = synthesize_linear(p, f, 0.01, 7);
  const auto b = synthesize_linear(p, f, 0.01, 7);
  const auto c = synthesize_linear(p, f, 0.01, 8);
  CHECK(a.s21 == b.s21);
  CHECK(a.s21 != c.s21);
}

TEST_CASE("noise level matches sigma times amplitude") {
  const auto p = testutil::reference_params();
  const auto f = resonance_grid(p, 5.0, 401);
  const auto t = synthesize_linear(p, f, 0.01, 9);
  const auto m = eval_linear_s21(p, f);
  double ss = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    const Complex d = t.s21[i] - m[i];
    ss += d.real() * d.real() + d.imag() * d.imag();
    n += 2;
  }
  CHECK(rel(std::sqrt(ss / static_cast<double>(n)), 0.01 * p.amplitude) < 0.1);
  CHECK_THROWS_AS(synthesize_linear(p, f, -0.1, 1), ParameterDomainError);
}

TEST_CASE("nonlinear synthesis without nonlinearity equals linear synthesis") {
  NonlinearParams p;
  p.linear = testutil::reference_params();
  p.drive_flux = 1e9;
  const auto f = resonance_grid(p.linear, 5.0, 401);
  CHECK(synthesize_nonlinear(p, f, BranchPolicy::kSweepUp, 0.01, 3).s21 ==
        synthesize_linear(p.linear, f, 0.01, 3).s21);
}

TEST_CASE("sweep directions differ beyond bifurcation") {
  NonlinearParams p;
  p.linear = testutil::reference_params();
  p.kerr = -100.0;
  const double lw = loaded_linewidth(p.linear);
  const double kc = 2.0 * oracle::kPi * p.linear.resonant_freq * p.linear.coupling_loss;
  const double kt = 2.0 * oracle::kPi * lw;
  p.drive_flux = (2.0 * lw / 100.0) * kt * kt / kc;  // xi = -2
  const auto f = resonance_grid(p.linear, 8.0, 2001);
  const auto up = synthesize_nonlinear(p, f, BranchPolicy::kSweepUp, 0.0, 1);
  const auto down = synthesize_nonlinear(p, f, BranchPolicy::kSweepDown, 0.0, 1);
  std::size_t differ = 0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (std::abs(up.s21[i] - down.s21[i]) > 1e-3) ++differ;
  }
  CHECK(differ > 10);
}

TEST_CASE("two-photon loss shows up as ellipticity in noise-free synthesis") {
  NonlinearParams p;
  p.linear = testutil::reference_params();
  p.two_photon = 50.0;
  p.drive_flux = 1e6;
  const auto f = resonance_grid(p.linear, 8.0, 801);
  const auto t = synthesize_nonlinear(p, f, BranchPolicy::kSweepUp, 0.0, 1);
  CHECK(ellipticity_metric(t, p.linear) > 1e-4);
}

namespace {

PowerSweepConfig sweep_config() {
  PowerSweepConfig c;
  c.linear = testutil::reference_params();
  c.linear.coupling_loss = 1.0 / 3e5;
  c.tls.q_tls = 4e6;
  c.tls.n_c = 10.0;
  c.tls.alpha_tls = 0.5;
  c.tls.delta_0 = 2.5e-7;
  c.tls.f_r = c.linear.resonant_freq;
  c.attenuation_db = 74.0;
  for (int k = 0; k < 12; ++k) c.instrument_powers_dbm.push_back(-84.0 + 80.0 * k / 11.0);
  c.freqs = resonance_grid(c.linear, 5.0, 401);
  c.seed = 5;
  c.label = "S";
  return c;
}

}  // namespace

TEST_CASE("one power of a sweep equals direct nonlinear synthesis") {
  auto c = sweep_config();
  c.instrument_powers_dbm = {-40.0};
  c.kerr = -20.0;
  c.two_photon = 5.0;
  const auto traces = synthesize_power_sweep(c);
  REQUIRE(traces.size() == 1);

  const double watts = dbm_to_watts(-40.0 - 74.0);
  LinearParams low = c.linear;
  low.internal_loss = eval_tls_loss(c.tls, 0.0);
  const double n = mean_photon_number(watts, low);
  NonlinearParams p;
  p.linear = c.linear;
  p.linear.internal_loss = eval_tls_loss(c.tls, n);
  p.kerr = c.kerr;
  p.two_photon = c.two_photon;
  p.drive_flux = input_photon_flux(watts, c.linear.resonant_freq);
  CHECK(traces[0].s21 == synthesize_nonlinear(p, c.freqs, c.policy, 0.0, c.seed).s21);
  CHECK(traces[0].instrument_power_dbm == -40.0);
  CHECK(traces[0].attenuation_db == 74.0);
  CHECK(traces[0].temperature_k == c.tls.temperature);
  CHECK(traces[0].label == "S");
}

TEST_CASE("power sweep saturates TLS loss at high power") {
  const auto c = sweep_config();
  const auto traces = synthesize_power_sweep(c);
  REQUIRE(traces.size() == 12);
  const auto lo = fit_linear(traces.front());
  const auto hi = fit_linear(traces.back());
  CHECK(rel(lo.params.internal_loss, eval_tls_loss(c.tls, 0.0)) < 0.05);
  CHECK(rel(hi.params.internal_loss, c.tls.delta_0) < 0.05);
  // Less internal loss means a larger circle: the dip deepens with power.
  CHECK(hi.params.diameter() > lo.params.diameter());
}

TEST_CASE("each power uses its own seed") {
  auto c = sweep_config();
  c.noise_sigma = 0.01;
  c.instrument_powers_dbm = {-80.0, -79.0};
  const auto two = synthesize_power_sweep(c);
  c.instrument_powers_dbm = {-79.0};
  c.seed += 1;
  const auto one = synthesize_power_sweep(c);
  CHECK(two[1].s21 == one[0].s21);
}
