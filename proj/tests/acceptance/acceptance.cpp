// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>

#include "oracles.hpp"
#include "resofit/calibration.hpp"
#include "resofit/cli.hpp"
#include "resofit/duffing.hpp"
#include "resofit/errors.hpp"
#include "resofit/linear_fit.hpp"
#include "resofit/model.hpp"
#include "resofit/report_io.hpp"
#include "resofit/synth.hpp"
#include "resofit/trace_io.hpp"
#include "test_util.hpp"

using namespace resofit;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double uniform(std::mt19937_64& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

double log_uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::exp(uniform(rng, std::log(lo), std::log(hi)));
}

LinearParams random_linear(std::mt19937_64& rng) {
  LinearParams p;
  p.amplitude = uniform(rng, 0.3, 2.0);
  p.electric_delay = uniform(rng, 0.0, 60e-9);
  p.phase_offset = uniform(rng, -3.0, 3.0);
  p.fano_asymmetry = uniform(rng, -0.5, 0.5);
  p.resonant_freq = uniform(rng, 4e9, 8e9);
  p.internal_loss = 1.0 / log_uniform(rng, 1e5, 1e7);
  p.coupling_loss = 1.0 / log_uniform(rng, 2e5, 1.8e6);
  return p;
}

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

int run_cli(const std::vector<std::string>& args, std::string* err = nullptr) {
  std::ostringstream out;
  std::ostringstream e;
  std::vector<std::string> argv{"resofit"};
  argv.insert(argv.end(), args.begin(), args.end());
  const int code = cli::run(argv, {out, e});
  if (err) *err = e.str();
  return code;
}

// ---------------------------------------------------------------------------

Outcome linear_limit() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(101);
  double worst = 0.0;
  for (int k = 0; k < 1000; ++k) {
    NonlinearParams p;
    p.linear = random_linear(rng);
    p.drive_flux = log_uniform(rng, 1e3, 1e12);
    const auto f = resonance_grid(p.linear, uniform(rng, 2.0, 50.0), 401);
    const auto lin = eval_linear_s21(p.linear, f);
    const auto non = eval_nonlinear_s21(p, f, BranchPolicy::kSweepUp);
    for (std::size_t i = 0; i < f.size(); ++i) worst = std::max(worst, std::abs(non[i] - lin[i]));
  }
  const double dt = seconds_since(t0);
  return {worst < 1e-12 && dt < 5.0, "max |nonlinear - linear| = " + fmt("%.3g", worst) + " in " + fmt("%.2f s", dt)};
}

Outcome cubic_correctness() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(202);
  double worst_residual = 0.0;
  double worst_oracle = 0.0;
  bool counts_agree = true;
  int three = 0;
  for (int k = 0; k < 1000; ++k) {
    const double xi = uniform(rng, -3.0, 3.0);
    const double eta = uniform(rng, 0.0, 1.5);
    const double x = uniform(rng, -4.0, 4.0);
    const auto sol = solve_photon_number(xi, eta, x, BranchPolicy::kLow);
    const auto ref = oracle::cubic_roots_bisection(xi, eta, x);
    if (ref.size() != sol.roots.size()) {
      counts_agree = false;
      continue;
    }
    if (sol.roots.size() == 3) ++three;
    for (std::size_t r = 0; r < ref.size(); ++r) {
      const double n = sol.roots[r];
      const double scale = std::max({1.0, std::abs(n * n * n * (xi * xi + eta * eta / 4.0)),
                                     std::abs(2.0 * n * n * (eta / 4.0 - xi * x)), std::abs(n * (0.25 + x * x))});
      worst_residual = std::max(worst_residual, std::abs(photon_cubic(n, xi, eta, x)) / scale);
      worst_oracle = std::max(worst_oracle, rel(n, ref[r]));
    }
  }
  const double n0 = solve_photon_number(0.0, 0.0, 0.0, BranchPolicy::kLow).selected;
  const double nh = solve_photon_number(0.0, 0.0, 0.5, BranchPolicy::kLow).selected;
  const bool exact = std::abs(n0 - 2.0) < 1e-12 && std::abs(nh - 1.0) < 1e-12;
  const double dt = seconds_since(t0);
  return {counts_agree && worst_residual < 1e-10 && worst_oracle < 1e-8 && exact && dt < 10.0,
          "residual " + fmt("%.2g", worst_residual) + ", oracle " + fmt("%.2g", worst_oracle) + ", " +
              std::to_string(three) + " three-root draws, n(0,0,0)=" + fmt("%.15g", n0) +
              " n(0,0,1/2)=" + fmt("%.15g", nh) + ", " + fmt("%.2f s", dt)};
}

Outcome calibration() {
  std::mt19937_64 rng(303);
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    NonlinearParams p;
    p.linear = random_linear(rng);
    const double watts = dbm_to_watts(uniform(rng, -170.0, -90.0));
    p.drive_flux = input_photon_flux(watts, p.linear.resonant_freq);
    const auto r = evaluate_nonlinear(p, std::vector<double>{p.linear.resonant_freq}, BranchPolicy::kLow);
    worst = std::max(worst, rel(r.photons[0], mean_photon_number(watts, p.linear)));
  }
  LinearParams w;
  w.resonant_freq = 5e9;
  w.internal_loss = 1e-6;
  w.coupling_loss = 1e-6;
  const double lib = mean_photon_number(1e-15, w);
  const double ref = oracle::mean_photons(1e-15, 5e9, 1e-6, 1e-6);
  const bool worked = rel(lib, ref) < 1e-12 && std::abs(lib - 4.804e3) < 0.5;
  return {worst < 1e-9 && worked,
          "max relative difference " + fmt("%.2g", worst) + ", worked value " + fmt("%.6g", lib) + " (oracle " +
              fmt("%.6g", ref) + ")"};
}

Outcome linear_round_trip() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(404);
  int converged = 0;
  int recovered = 0;
  double worst_qi = 0.0;
  for (int k = 0; k < 100; ++k) {
    const auto p = random_linear(rng);
    const auto t = synthesize_linear(p, resonance_grid(p, 5.0, 401), 0.01, 4000 + k);
    try {
      const auto fit = fit_linear(t);
      if (!fit.converged) continue;
      ++converged;
      const double qi = rel(fit.params.q_internal(), p.q_internal());
      worst_qi = std::max(worst_qi, qi);
      if (qi < 0.05 && std::abs(fit.params.resonant_freq - p.resonant_freq) < 0.1 * loaded_linewidth(p)) ++recovered;
    } catch (const Error&) {
    }
  }
  const double dt = seconds_since(t0);
  return {converged >= 98 && recovered >= 98 && dt < 60.0,
          std::to_string(converged) + "/100 converged, " + std::to_string(recovered) +
              "/100 within tolerance (worst Q_i error " + fmt("%.3f", worst_qi) + "), " + fmt("%.1f s", dt)};
}

std::string replace_line(std::string text, const std::string& key, const std::string& value) {
  std::istringstream in(text);
  std::ostringstream out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind(key + " ", 0) == 0 || line.rfind(key + "=", 0) == 0) line = key + " = " + value;
    out << line << '\n';
  }
  return out.str();
}

Outcome tls_round_trip() {
  const auto t0 = Clock::now();
  testutil::TempDir dir;
  const std::string conf = read_file(fs::path(RESOFIT_DOCS_DIR) / "simulate.conf");
  const auto d = dir.path().string();
  std::string err;
  if (run_cli({"simulate", RESOFIT_DOCS_DIR "/simulate.conf", d + "/tls"}, &err) != 0 ||
      run_cli({"fit-sweep", d + "/tls/manifest.txt", "--out", d + "/tls.json"}, &err) != 0) {
    return {false, "pipeline failed: " + err};
  }
  const auto tls = std::get<TlsFitReport>(read_report(dir.path() / "tls.json").entries.back().fit).params;
  const double e_q = rel(1.0 / tls.tls_loss, 4e6);
  const double e_nc = rel(tls.n_c, 10.0);
  const double e_a = rel(tls.alpha_tls, 0.5);
  const double e_d = rel(tls.delta_0, 2.5e-7);
  const bool recovered = e_q < 0.1 && e_nc < 0.1 && e_a < 0.1 && e_d < 0.1;

  // Same sweep with a negligible TLS term.
  std::ofstream(dir.path() / "flat.conf") << replace_line(conf, "q_tls", "1e30");
  if (run_cli({"simulate", d + "/flat.conf", d + "/flat"}, &err) != 0 ||
      run_cli({"fit-sweep", d + "/flat/manifest.txt", "--out", d + "/flat.json"}, &err) != 0) {
    return {false, "power-independent pipeline failed: " + err};
  }
  const auto flat = std::get<TlsFitReport>(read_report(dir.path() / "flat.json").entries.back().fit);
  const bool zero = flat.params.tls_loss <= 2.0 * flat.std_errors.tls_loss;
  return {recovered && zero,
          "Q_TLS " + fmt("%.4g", 1.0 / tls.tls_loss) + " n_c " + fmt("%.4g", tls.n_c) + " alpha " +
              fmt("%.4g", tls.alpha_tls) + " delta_0 " + fmt("%.4g", tls.delta_0) + " (worst error " +
              fmt("%.3f", std::max({e_q, e_nc, e_a, e_d})) + "); flat sample 1/Q_TLS " +
              fmt("%.3g", flat.params.tls_loss) + " +- " + fmt("%.3g", flat.std_errors.tls_loss) + ", " +
              fmt("%.1f s", seconds_since(t0))};
}

Outcome kerr_round_trip() {
  const auto t0 = Clock::now();
  testutil::TempDir dir;
  const auto d = dir.path().string();
  std::string err;
  if (run_cli({"simulate", RESOFIT_DOCS_DIR "/kerr.conf", d + "/k"}, &err) != 0 ||
      run_cli({"extract-kerr", d + "/k/manifest.txt", "--out", d + "/k.json"}, &err) != 0) {
    return {false, "pipeline failed: " + err};
  }
  const auto doc = read_report(dir.path() / "k.json");
  const auto ex = std::get<KerrExtraction>(doc.entries.back().fit);
  const std::size_t powers = ex.photon_numbers.size();
  const bool ok = powers == 10 && rel(ex.kerr, -1500.0) < 0.05 && rel(ex.two_photon, 1000.0) < 0.05 &&
                  ex.r2_kerr > 0.99 && ex.r2_two_photon > 0.99;
  return {ok, std::to_string(powers) + " powers, K_nl " + fmt("%.1f Hz", ex.kerr) + " (R2 " + fmt("%.5f", ex.r2_kerr) +
                  "), gamma_nl " + fmt("%.1f Hz", ex.two_photon) + " (R2 " + fmt("%.5f", ex.r2_two_photon) + "), " +
                  fmt("%.1f s", seconds_since(t0))};
}

// Drive flux giving the requested xi for the reference resonator.
NonlinearParams drive_for(double xi, double eta) {
  NonlinearParams p;
  p.linear = testutil::reference_params();
  const double lw = loaded_linewidth(p.linear);
  const double kc = 2.0 * oracle::kPi * p.linear.resonant_freq * p.linear.coupling_loss;
  const double kt = 2.0 * oracle::kPi * lw;
  p.kerr = xi == 0.0 ? 0.0 : std::copysign(100.0, xi);
  p.drive_flux = (xi == 0.0 ? 1e6 : std::abs(xi) * lw / 100.0 * kt * kt / kc);
  // eta at the same drive: gamma = eta / |a~_in|^2 * linewidth.
  const double scaled = kc * p.drive_flux / (kt * kt);
  p.two_photon = eta * lw / scaled;
  return p;
}

Outcome two_photon_geometry() {
  double worst_kerr = 0.0;
  double least_ratio = INFINITY;
  for (double xi : {-0.35, -0.2, -0.1, 0.1, 0.2, 0.35}) {
    const auto kerr = drive_for(xi, 0.0);
    const auto f = resonance_grid(kerr.linear, 8.0, 801);
    const auto tk = synthesize_nonlinear(kerr, f, BranchPolicy::kSweepUp, 0.0, 1);
    const double ek = ellipticity_metric(tk, kerr.linear);
    const auto both = drive_for(xi, 0.1);
    const auto te = synthesize_nonlinear(both, f, BranchPolicy::kSweepUp, 0.0, 1);
    const double ee = ellipticity_metric(te, both.linear);
    worst_kerr = std::max(worst_kerr, ek);
    least_ratio = std::min(least_ratio, ee / ek);
  }
  return {worst_kerr < 1e-6 && least_ratio > 10.0,
          "pure Kerr ellipticity <= " + fmt("%.2g", worst_kerr) + ", eta=0.1 at least " + fmt("%.3g", least_ratio) +
              "x that"};
}

Outcome hysteresis() {
  // Root-count scan over (xi, x). The cubic is unchanged under (xi, x) -> (-xi, -x),
  // so positive xi suffices. The boundary is the smallest xi with any three-root point.
  auto has_three_roots = [](double xi) {
    for (int j = 0; j <= 8000; ++j) {
      if (solve_photon_number(xi, 0.0, -4.0 + 0.001 * j, BranchPolicy::kLow).roots.size() == 3) return true;
    }
    return false;
  };
  double critical = NAN;
  bool below_clean = true;
  bool above_present = true;
  for (int i = 1; i <= 400; ++i) {
    const double xi = 0.005 * i;
    const bool any = has_three_roots(xi);
    if (any && std::isnan(critical)) critical = xi;
    if (!any && !std::isnan(critical)) above_present = false;
  }
  if (std::isnan(critical)) return {false, "no three-root region found up to |xi| = 2"};
  for (double xi = critical - 0.005; xi > 0.0; xi -= 0.0005) below_clean = below_clean && !has_three_roots(xi);

  // Sweep both ways well beyond the boundary.
  const auto p = drive_for(-1.0, 0.0);
  const auto f = resonance_grid(p.linear, 6.0, 6001);
  const auto up = evaluate_nonlinear(p, f, BranchPolicy::kSweepUp);
  const auto down = evaluate_nonlinear(p, f, BranchPolicy::kSweepDown);
  std::size_t differ = 0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (rel(up.normalized_photons[i], down.normalized_photons[i]) > 1e-6) ++differ;
  }
  auto jumps = [](const std::vector<double>& n) {
    int count = 0;
    for (std::size_t i = 1; i < n.size(); ++i) {
      if (std::abs(n[i] - n[i - 1]) > 0.1 * std::max(n[i], n[i - 1])) ++count;
    }
    return count;
  };
  const int ju = jumps(up.normalized_photons);
  const int jd = jumps(down.normalized_photons);
  const bool ok = below_clean && above_present && differ > 0 && ju == 1 && jd == 1;
  return {ok, "three-root region from |xi| ~ " + fmt("%.3f", critical) + " (pure-Kerr fold " +
                  fmt("%.4f", 2.0 / (3.0 * std::sqrt(3.0))) + "), branches differ at " + std::to_string(differ) +
                  " points, jumps up/down " + std::to_string(ju) + "/" + std::to_string(jd)};
}

Outcome parser_corpus() {
  const fs::path corpus = fs::path(RESOFIT_TEST_DATA) / "corpus";
  std::ifstream index(corpus / "expected.txt");
  std::string line;
  int files = 0;
  int located = 0;
  while (std::getline(index, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    std::string name;
    std::string kind;
    std::size_t want_line = 0;
    std::size_t want_col = 0;
    fields >> name >> kind >> want_line >> want_col;
    ++files;
    try {
      if (fs::path(name).extension() == ".csv") {
        parse_csv_trace(corpus / name);
      } else {
        parse_touchstone(corpus / name, TraceMetadata{-70.0, 74.0, 0.01, "R"});
      }
    } catch (const ParseError& e) {
      if (to_string(e.kind()) == kind && e.line() == want_line && e.column() == want_col && e.line() >= 1) ++located;
    }
  }

  testutil::TempDir dir;
  std::mt19937_64 rng(909);
  bool csv_exact = true;
  bool report_exact = true;
  for (int k = 0; k < 20; ++k) {
    const auto p = random_linear(rng);
    auto t = synthesize_linear(p, resonance_grid(p, 5.0, 201), 0.01, 9000 + k);
    t.instrument_power_dbm = uniform(rng, -120.0, 0.0);
    t.attenuation_db = uniform(rng, 0.0, 90.0);
    t.temperature_k = uniform(rng, 0.005, 0.3);
    t.label = "trace " + std::to_string(k);
    write_csv_trace(t, dir.path() / "t.csv");
    const auto back = parse_csv_trace(dir.path() / "t.csv");
    csv_exact = csv_exact && back.freqs == t.freqs && back.s21 == t.s21 &&
                back.instrument_power_dbm == t.instrument_power_dbm && back.attenuation_db == t.attenuation_db &&
                back.temperature_k == t.temperature_k;

    const auto fit = fit_linear(t);
    ReportDocument doc;
    doc.provenance.command = "round trip";
    doc.entries.push_back({t.label, t.instrument_power_dbm, fit, {{"photon_number", uniform(rng, 0.0, 1e9)}}, {}});
    write_report(doc, dir.path() / "r.json");
    const auto rb = read_report(dir.path() / "r.json");
    const auto& f2 = std::get<LinearFitReport>(rb.entries[0].fit);
    report_exact = report_exact && f2.params.resonant_freq == fit.params.resonant_freq &&
                   f2.params.internal_loss == fit.params.internal_loss &&
                   f2.params.phase_offset == fit.params.phase_offset &&
                   f2.std_errors.coupling_loss == fit.std_errors.coupling_loss &&
                   f2.residual_rms == fit.residual_rms && format_report(rb) == format_report(doc);
  }
  return {files == 20 && located == 20 && csv_exact && report_exact,
          std::to_string(located) + "/" + std::to_string(files) + " corpus files located, CSV round trip " +
              (csv_exact ? "exact" : "LOSSY") + ", report round trip " + (report_exact ? "exact" : "LOSSY")};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"linear-limit equivalence", linear_limit},
      {"cubic correctness", cubic_correctness},
      {"calibration cross-check", calibration},
      {"linear fit round trip", linear_round_trip},
      {"TLS round trip", tls_round_trip},
      {"Kerr/two-photon extraction round trip", kerr_round_trip},
      {"two-photon geometry", two_photon_geometry},
      {"hysteresis and bifurcation", hysteresis},
      {"parser corpus and round trips", parser_corpus},
  };
  int failures = 0;
  int number = 0;
  for (const auto& [name, check] : criteria) {
    ++number;
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::printf("%s %d %s: %s\n", o.pass ? "PASS" : "FAIL", number, name, o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
