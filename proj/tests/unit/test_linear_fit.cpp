#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "resofit/errors.hpp"
#include "resofit/linear_fit.hpp"
#include "resofit/synth.hpp"
#include "test_util.hpp"

using namespace resofit;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;
using testutil::reference_params;
using testutil::rel;

TEST_CASE("initial estimate lands near a noise-free resonance") {
  const auto p = reference_params();
  const auto freqs = resonance_grid(p, 5.0, 401);
  const auto trace = synthesize_linear(p, freqs, 0.0, 1);
  const auto g = estimate_initial(trace);
  const double lw = loaded_linewidth(p);
  CHECK(std::abs(g.resonant_freq - p.resonant_freq) < 0.2 * lw);
  CHECK(rel(g.total_loss(), p.total_loss()) < 0.3);
  CHECK(rel(g.amplitude, p.amplitude) < 0.05);
}

TEST_CASE("initial estimate recovers a 50 ns cable delay") {
  auto p = reference_params();
  p.electric_delay = 50e-9;
  // +-50 linewidths: enough off-resonant baseline for the phase slope to resolve 5 ns.
  const auto freqs = resonance_grid(p, 50.0, 801);
  const auto trace = synthesize_linear(p, freqs, 0.005, 2);
  CHECK(rel(estimate_initial(trace).electric_delay, 50e-9) < 0.1);
}

TEST_CASE("flat trace has no resonance") {
  auto p = reference_params();
  p.coupling_loss = 1e-13;  // no visible dip
  const auto freqs = resonance_grid(p, 5.0, 401);
  const auto trace = synthesize_linear(p, freqs, 0.01, 3);
  CHECK_THROWS_AS(estimate_initial(trace), NoResonanceError);
  CHECK_THROWS_AS(fit_linear(trace), NoResonanceError);
}

TEST_CASE("noise-free fit recovers every parameter to 1e-6") {
  const auto p = reference_params();
  const auto freqs = resonance_grid(p, 5.0, 401);
  const auto rep = fit_linear(synthesize_linear(p, freqs, 0.0, 1));
  REQUIRE(rep.converged);
  CHECK(rel(rep.params.amplitude, p.amplitude) < 1e-6);
  CHECK(rel(rep.params.electric_delay, p.electric_delay) < 1e-6);
  CHECK(rel(rep.params.phase_offset, p.phase_offset) < 1e-6);
  CHECK(rel(rep.params.fano_asymmetry, p.fano_asymmetry) < 1e-6);
  CHECK(rel(rep.params.resonant_freq, p.resonant_freq) < 1e-6);
  CHECK(rel(rep.params.internal_loss, p.internal_loss) < 1e-6);
  CHECK(rel(rep.params.coupling_loss, p.coupling_loss) < 1e-6);
  CHECK(rep.residual_rms < 1e-9);
  CHECK(rep.n_points == 401);
}

TEST_CASE("one percent noise over ten linewidths") {
  auto p = reference_params();
  p.fano_asymmetry = 0.2;
  const auto freqs = resonance_grid(p, 5.0, 401);
  const auto rep = fit_linear(synthesize_linear(p, freqs, 0.01, 4));
  REQUIRE(rep.converged);
  CHECK(rel(rep.params.q_internal(), p.q_internal()) < 0.03);
  CHECK(std::abs(rep.params.resonant_freq - p.resonant_freq) < 0.1 * loaded_linewidth(p));
  // std errors are of the right size
  CHECK(std::abs(rep.params.internal_loss - p.internal_loss) < 5 * rep.std_errors.internal_loss);
  CHECK(rep.std_errors.internal_loss > 0.0);
  CHECK_THAT(rep.residual_rms, WithinRel(0.01 * p.amplitude * std::sqrt(2.0), 0.15));
  CHECK_FALSE(rep.diagnostics.nonlinear_suspected);
}

TEST_CASE("asymmetric line: corrected Q_c matches the generator") {
  auto p = reference_params();
  p.fano_asymmetry = 0.3;
  const auto freqs = resonance_grid(p, 5.0, 401);
  const auto rep = fit_linear(synthesize_linear(p, freqs, 0.002, 5));
  REQUIRE(rep.converged);
  CHECK(rel(diameter_corrected_qc(rep.params), p.q_coupling()) < 0.01);
  CHECK(rel(raw_qc(rep.params), p.q_coupling() / std::cos(0.3)) < 0.01);
}

TEST_CASE("too few points") {
  const auto p = reference_params();
  const auto freqs = resonance_grid(p, 5.0, 5);
  CHECK_THROWS_AS(fit_linear(synthesize_linear(p, freqs, 0.0, 1), p), PreconditionError);
}

TEST_CASE("identical points give a singular Jacobian") {
  FrequencyTrace t;
  for (int i = 0; i < 50; ++i) {
    t.freqs.push_back(5e9 + 100.0 * i);
    t.s21.emplace_back(0.5, 0.0);
  }
  auto guess = reference_params();
  guess.electric_delay = 0.0;
  CHECK_THROWS_AS(fit_linear(t, guess), SingularJacobianError);
}

TEST_CASE("low SNR is flagged") {
  auto p = reference_params();
  p.internal_loss = 1e-5;  // shallow dip
  p.coupling_loss = 2e-7;
  const auto freqs = resonance_grid(p, 5.0, 401);
  const auto trace = synthesize_linear(p, freqs, 0.005, 6);
  const auto rep = fit_linear(trace, p);
  CHECK(rep.diagnostics.low_snr);
}

TEST_CASE("a Kerr-tilted trace is flagged as possibly nonlinear") {
  NonlinearParams np;
  np.linear = reference_params();
  np.kerr = -0.3 * loaded_linewidth(np.linear);
  np.drive_flux = 1.0;
  const auto d0 = normalized_drive_params(np);
  np.drive_flux = 0.3 / std::abs(d0.xi);  // xi = -0.3
  const auto freqs = resonance_grid(np.linear, 5.0, 401);
  const auto rep = fit_linear(synthesize_nonlinear(np, freqs, BranchPolicy::kSweepUp, 0.001, 7));
  CHECK(rep.diagnostics.nonlinear_suspected);
}

TEST_CASE("windowing keeps the requested number of linewidths") {
  const auto p = reference_params();
  const auto freqs = resonance_grid(p, 40.0, 4001);
  const auto trace = synthesize_linear(p, freqs, 0.002, 8);
  const auto w = window_around_resonance(trace, 10.0);
  const double lw = loaded_linewidth(p);
  CHECK(w.size() < trace.size());
  CHECK(w.freqs.front() >= p.resonant_freq - 11.0 * lw);
  CHECK(w.freqs.back() <= p.resonant_freq + 11.0 * lw);
  CHECK(w.freqs.back() - w.freqs.front() > 15.0 * lw);
}

namespace {

FrequencyTrace wideband(const std::vector<LinearParams>& res, double f0, double f1, std::size_t n, double noise,
                        std::uint64_t seed) {
  FrequencyTrace t;
  GaussianNoise g(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const double f = f0 + (f1 - f0) * double(i) / double(n - 1);
    Complex s(1.0, 0.0);
    for (const auto& p : res) s *= linear_s21_at(p, f);
    const auto [a, b] = g.next_pair();
    t.freqs.push_back(f);
    t.s21.push_back(s + noise * Complex(a, b));
  }
  return t;
}

}  // namespace

TEST_CASE("segmentation finds eight resonances between 4.2 and 7.8 GHz") {
  std::vector<LinearParams> res;
  for (int k = 0; k < 8; ++k) {
    LinearParams p;
    p.resonant_freq = 4.2e9 + k * (3.6e9 / 7.0);
    p.internal_loss = 1.0 / 2e5;
    p.coupling_loss = 1.0 / 5e4;
    p.electric_delay = 0.0;
    p.phase_offset = 0.0;
    res.push_back(p);
  }
  // A coarse grid cannot resolve 100 kHz lines over 3.6 GHz; sample each
  // neighbourhood densely instead and stitch.
  FrequencyTrace t;
  for (const auto& p : res) {
    const auto part = wideband(res, p.resonant_freq - 3e6, p.resonant_freq + 3e6, 3001, 0.002, 9 + t.size());
    t.freqs.insert(t.freqs.end(), part.freqs.begin(), part.freqs.end());
    t.s21.insert(t.s21.end(), part.s21.begin(), part.s21.end());
  }
  const auto windows = segment_resonances(t, 8);
  REQUIRE(windows.size() == 8);
  for (std::size_t k = 0; k < 8; ++k) {
    const double lw = loaded_linewidth(res[k]);
    CHECK(std::abs(windows[k].center_hz - res[k].resonant_freq) < lw);
    CHECK(windows[k].trace.freqs.back() - windows[k].trace.freqs.front() >= 10.0 * lw);
    if (k > 0) CHECK(windows[k].trace.freqs.front() > windows[k - 1].trace.freqs.back());
  }
}

TEST_CASE("segmentation on a flat trace reports the mismatch") {
  const auto t = wideband({}, 5e9, 5.01e9, 2001, 0.002, 10);
  try {
    segment_resonances(t, 1);
    FAIL("expected SegmentationMismatchError");
  } catch (const SegmentationMismatchError& e) {
    CHECK(e.expected() == 1);
    CHECK(e.found_centers().empty());
  }
}

TEST_CASE("segmentation of a single resonance") {
  auto p = reference_params();
  p.electric_delay = 0.0;
  const auto freqs = resonance_grid(p, 30.0, 3001);
  const auto windows = segment_resonances(synthesize_linear(p, freqs, 0.002, 11));
  REQUIRE(windows.size() == 1);
  CHECK(std::abs(windows[0].center_hz - p.resonant_freq) < loaded_linewidth(p));
}
