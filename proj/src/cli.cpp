#include "resofit/cli.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <iomanip>
#include <map>
#include <numbers>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "resofit/calibration.hpp"
#include "resofit/errors.hpp"
#include "resofit/linear_fit.hpp"
#include "resofit/report_io.hpp"
#include "resofit/sweep_io.hpp"
#include "resofit/tls_fit.hpp"
#include "resofit/trace_io.hpp"

namespace resofit::cli {

namespace fs = std::filesystem;

namespace {

int fail(Streams io, int code, const std::string& message) {
  io.err << "error: " << message << '\n';
  return code;
}

std::string fmt(double v, int precision = 6) {
  std::ostringstream ss;
  ss << std::setprecision(precision) << v;
  return ss.str();
}

// Runs f(i) for i in [0, n) on a small thread pool. f must not throw.
template <class F>
void parallel_for(std::size_t n, F&& f) {
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const std::size_t workers = std::min<std::size_t>(n, hw);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) f(i);
    });
  }
  for (auto& t : pool) t.join();
}

bool is_touchstone(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".s2p";
}

fs::path default_report(const fs::path& input, const std::string& command, const GlobalOptions& g) {
  if (g.out) return *g.out;
  return fs::path(input.stem().string() + "." + command + ".json");
}

fs::path table_path(const fs::path& report, PlotKind kind) {
  fs::path p = report;
  p.replace_extension();
  p += std::string(".") + to_string(kind) + ".csv";
  return p;
}

struct LoadedSweep {
  SweepManifest manifest;
  std::vector<FrequencyTrace> traces;  // ascending power
  std::vector<fs::path> paths;
  std::vector<InputDigest> digests;
};

LoadedSweep load_sweep(const fs::path& manifest_path) {
  LoadedSweep s;
  const std::string text = read_file(manifest_path);
  s.digests.push_back({manifest_path.string(), sha256_hex(text)});
  s.manifest = parse_manifest_text(text, manifest_path.parent_path(), manifest_path.string());
  validate(s.manifest);

  auto entries = s.manifest.traces;
  std::stable_sort(entries.begin(), entries.end(),
                   [](const ManifestEntry& a, const ManifestEntry& b) { return a.instrument_power_dbm < b.instrument_power_dbm; });
  for (std::size_t i = 1; i < entries.size(); ++i) {
    if (entries[i].instrument_power_dbm == entries[i - 1].instrument_power_dbm) {
      throw ParameterDomainError("manifest: power " + fmt(entries[i].instrument_power_dbm) + " dBm appears twice");
    }
  }
  for (const auto& e : entries) {
    const std::string body = read_file(e.trace_path);
    s.digests.push_back({e.trace_path.string(), sha256_hex(body)});
    FrequencyTrace t;
    TraceMetadata meta{e.instrument_power_dbm, s.manifest.attenuation_db, s.manifest.temperature_k, s.manifest.label};
    if (is_touchstone(e.trace_path)) {
      t = parse_touchstone_text(body, meta, {2, 1}, e.trace_path.string());
    } else {
      t = parse_csv_trace_text(body, e.trace_path.string());
      t.instrument_power_dbm = meta.instrument_power_dbm;
      t.attenuation_db = meta.attenuation_db;
      t.temperature_k = meta.temperature_k;
      if (!s.manifest.label.empty()) t.label = s.manifest.label;
    }
    validate_trace(t);
    s.traces.push_back(std::move(t));
    s.paths.push_back(e.trace_path);
  }
  return s;
}

std::string power_tag(const FrequencyTrace& t, const fs::path& path) {
  return "power " + fmt(t.instrument_power_dbm) + " dBm (" + path.string() + ")";
}

double input_power(const FrequencyTrace& t) {
  return DriveCalibration{t.attenuation_db, t.instrument_power_dbm}.input_power_watts();
}

FrequencyTrace maybe_window(const FrequencyTrace& t, double n_linewidths) {
  return n_linewidths > 0.0 ? window_around_resonance(t, n_linewidths) : t;
}

// Seed for a per-power nonlinear fit: linear shape from `base`, Kerr and
// two-photon slopes from the shift of this power's linear fit relative to it.
NonlinearParams nonlinear_seed(const LinearParams& base, const LinearParams& here, double p_in) {
  NonlinearParams g;
  g.linear = base;
  g.drive_flux = input_photon_flux(p_in, base.resonant_freq);
  const double n = mean_photon_number(p_in, base);
  if (n > 0.0 && std::isfinite(n)) {
    g.kerr = (here.resonant_freq - base.resonant_freq) / n;
    g.two_photon = std::max(0.0, here.internal_loss - base.internal_loss) * base.resonant_freq / n;
  }
  return g;
}

struct PowerLinear {
  FrequencyTrace trace;
  LinearFitReport fit;
  double p_in = 0.0;
  double photons = 0.0;
  std::exception_ptr error;
};

std::vector<PowerLinear> fit_powers_linear(const LoadedSweep& s, double window) {
  std::vector<PowerLinear> out(s.traces.size());
  parallel_for(out.size(), [&](std::size_t i) {
    try {
      out[i].trace = maybe_window(s.traces[i], window);
      out[i].fit = fit_linear(out[i].trace);
      out[i].p_in = input_power(out[i].trace);
      out[i].photons = mean_photon_number(out[i].p_in, out[i].fit.params);
    } catch (...) {
      out[i].error = std::current_exception();
    }
  });
  return out;
}

// Rethrows the first per-power failure with the power named.
void check_powers(const std::vector<PowerLinear>& fits, const LoadedSweep& s) {
  for (std::size_t i = 0; i < fits.size(); ++i) {
    if (!fits[i].error) continue;
    try {
      std::rethrow_exception(fits[i].error);
    } catch (const std::exception& e) {
      throw Error(power_tag(s.traces[i], s.paths[i]) + ": " + e.what());
    }
  }
}

Provenance make_provenance(const std::string& command, std::vector<InputDigest> inputs, const GlobalOptions& g) {
  Provenance p;
  p.command = command;
  p.inputs = std::move(inputs);
  p.settings["policy"] = to_string(g.policy);
  if (g.seed) p.settings["seed"] = std::to_string(*g.seed);
  return p;
}

// ---- simulation config -------------------------------------------------

double config_number(const KeyValueEntry& kv) {
  std::string_view s = kv.value;
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw ConfigError(kv.key, "'" + kv.value + "' is not a finite number (line " + std::to_string(kv.line) + ")");
  }
  return v;
}

std::uint64_t config_integer(const KeyValueEntry& kv) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(kv.value.data(), kv.value.data() + kv.value.size(), v);
  if (ec != std::errc() || ptr != kv.value.data() + kv.value.size()) {
    throw ConfigError(kv.key, "'" + kv.value + "' is not a non-negative integer (line " + std::to_string(kv.line) + ")");
  }
  return v;
}

std::vector<double> config_list(const KeyValueEntry& kv) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos <= kv.value.size()) {
    const std::size_t comma = kv.value.find(',', pos);
    std::string item = kv.value.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    out.push_back(config_number({kv.key, item, kv.line, kv.value_column}));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

void require(bool ok, const std::string& key, const std::string& detail) {
  if (!ok) throw ConfigError(key, detail);
}

}  // namespace

SimulationConfig parse_simulation_config(std::string_view text, const std::string& source) {
  SimulationConfig cfg;
  PowerSweepConfig& s = cfg.sweep;
  s.linear = LinearParams{};
  s.linear.electric_delay = 0.0;
  s.tls = TlsParams{};
  std::map<std::string, KeyValueEntry> seen;
  for (auto& kv : parse_key_values(text, source)) {
    if (seen.count(kv.key)) throw ConfigError(kv.key, "given twice (line " + std::to_string(kv.line) + ")");
    seen.emplace(kv.key, kv);
  }
  static const std::set<std::string> kKnown{
      "label",        "resonant_freq_hz", "q_coupling",     "amplitude",       "electric_delay_s",
      "phase_offset_rad", "fano_asymmetry_rad", "q_tls",    "n_c",             "alpha_tls",
      "delta_0",      "temperature_k",    "kerr_hz",        "two_photon_hz",   "attenuation_db",
      "powers_dbm",   "power_start_dbm",  "power_stop_dbm", "power_count",     "points",
      "span_linewidths", "noise_sigma",   "seed",           "policy"};
  for (const auto& [key, kv] : seen) {
    if (!kKnown.count(key)) throw ConfigError(key, "unknown key (line " + std::to_string(kv.line) + ")");
  }
  auto num = [&](const std::string& key, double fallback) {
    auto it = seen.find(key);
    return it == seen.end() ? fallback : config_number(it->second);
  };
  for (const char* key : {"resonant_freq_hz", "q_coupling"}) {
    require(seen.count(key) > 0, key, "required key is missing");
  }

  if (seen.count("label")) s.label = seen.at("label").value;
  require(!s.label.empty() && s.label.find_first_of("/\\") == std::string::npos, "label",
          "must be non-empty and contain no path separators");
  s.linear.resonant_freq = num("resonant_freq_hz", 0.0);
  require(s.linear.resonant_freq > 0.0, "resonant_freq_hz", "must be > 0");
  const double qc = num("q_coupling", 0.0);
  require(qc > 0.0, "q_coupling", "must be > 0");
  s.linear.coupling_loss = 1.0 / qc;
  s.linear.amplitude = num("amplitude", 1.0);
  require(s.linear.amplitude > 0.0, "amplitude", "must be > 0");
  s.linear.electric_delay = num("electric_delay_s", 0.0);
  s.linear.phase_offset = num("phase_offset_rad", 0.0);
  s.linear.fano_asymmetry = num("fano_asymmetry_rad", 0.0);
  require(std::abs(s.linear.fano_asymmetry) < std::numbers::pi / 2, "fano_asymmetry_rad", "must lie in (-pi/2, pi/2)");

  s.tls.q_tls = num("q_tls", 4e6);
  require(s.tls.q_tls > 0.0, "q_tls", "must be > 0");
  s.tls.n_c = num("n_c", 10.0);
  require(s.tls.n_c > 0.0, "n_c", "must be > 0");
  s.tls.alpha_tls = num("alpha_tls", 0.5);
  require(s.tls.alpha_tls > 0.0 && s.tls.alpha_tls <= 2.0, "alpha_tls", "must lie in (0, 2]");
  s.tls.delta_0 = num("delta_0", 1e-6);
  require(s.tls.delta_0 >= 0.0, "delta_0", "must be >= 0");
  s.tls.temperature = num("temperature_k", 0.01);
  require(s.tls.temperature > 0.0, "temperature_k", "must be > 0");
  s.tls.f_r = s.linear.resonant_freq;
  s.linear.internal_loss = eval_tls_loss(s.tls, 0.0);

  s.kerr = num("kerr_hz", 0.0);
  s.two_photon = num("two_photon_hz", 0.0);
  require(s.two_photon >= 0.0, "two_photon_hz", "must be >= 0");
  s.attenuation_db = num("attenuation_db", 74.0);

  if (seen.count("powers_dbm")) {
    for (const char* key : {"power_start_dbm", "power_stop_dbm", "power_count"}) {
      require(!seen.count(key), key, "conflicts with powers_dbm");
    }
    s.instrument_powers_dbm = config_list(seen.at("powers_dbm"));
  } else {
    for (const char* key : {"power_start_dbm", "power_stop_dbm", "power_count"}) {
      require(seen.count(key) > 0, key, "required unless powers_dbm is given");
    }
    const double start = num("power_start_dbm", 0.0);
    const double stop = num("power_stop_dbm", 0.0);
    const std::uint64_t count = config_integer(seen.at("power_count"));
    require(count >= 1, "power_count", "must be >= 1");
    require(count == 1 || stop > start, "power_stop_dbm", "must exceed power_start_dbm");
    for (std::uint64_t i = 0; i < count; ++i) {
      s.instrument_powers_dbm.push_back(count == 1 ? start : start + (stop - start) * double(i) / double(count - 1));
    }
  }
  require(!s.instrument_powers_dbm.empty(), "powers_dbm", "needs at least one power");
  for (std::size_t i = 1; i < s.instrument_powers_dbm.size(); ++i) {
    require(s.instrument_powers_dbm[i] > s.instrument_powers_dbm[i - 1], "powers_dbm", "must be strictly ascending");
  }

  if (seen.count("points")) cfg.points = config_integer(seen.at("points"));
  require(cfg.points >= kMinTracePoints, "points", "must be >= " + std::to_string(kMinTracePoints));
  cfg.span_linewidths = num("span_linewidths", 5.0);
  require(cfg.span_linewidths > 0.0, "span_linewidths", "must be > 0");
  s.noise_sigma = num("noise_sigma", 0.0);
  require(s.noise_sigma >= 0.0, "noise_sigma", "must be >= 0");
  if (seen.count("seed")) s.seed = config_integer(seen.at("seed"));
  if (seen.count("policy")) {
    try {
      s.policy = parse_branch_policy(seen.at("policy").value);
    } catch (const ParameterDomainError& e) {
      throw ConfigError("policy", e.what());
    }
  }
  s.freqs = resonance_grid(s.linear, cfg.span_linewidths, cfg.points);
  return cfg;
}

int cmd_simulate(const fs::path& config_path, const GlobalOptions& g, Streams io) {
  SimulationConfig cfg;
  try {
    cfg = parse_simulation_config(read_file(config_path), config_path.string());
  } catch (const Error& e) {
    return fail(io, kExitInput, e.what());
  }
  if (g.seed) cfg.sweep.seed = *g.seed;
  const fs::path out_dir = g.out.value_or(fs::path("."));

  std::vector<FrequencyTrace> traces;
  try {
    traces = synthesize_power_sweep(cfg.sweep);
  } catch (const Error& e) {
    return fail(io, kExitAnalysis, e.what());
  }
  try {
    fs::create_directories(out_dir);
    SweepManifest m;
    m.label = cfg.sweep.label;
    m.attenuation_db = cfg.sweep.attenuation_db;
    m.temperature_k = cfg.sweep.tls.temperature;
    const int width = traces.size() > 100 ? 3 : 2;
    for (std::size_t i = 0; i < traces.size(); ++i) {
      std::ostringstream name;
      name << cfg.sweep.label << "_p" << std::setw(width) << std::setfill('0') << i << ".csv";
      write_csv_trace(traces[i], out_dir / name.str());
      m.traces.push_back({out_dir / name.str(), traces[i].instrument_power_dbm});
      if (g.verbose) io.err << "wrote " << (out_dir / name.str()).string() << '\n';
    }
    write_manifest(m, out_dir / "manifest.txt");
  } catch (const std::exception& e) {
    return fail(io, kExitInput, e.what());
  }
  io.out << "simulated " << traces.size() << " traces of '" << cfg.sweep.label << "' into " << out_dir.string()
         << " (manifest.txt, seed " << cfg.sweep.seed << ")\n";
  return kExitOk;
}

int cmd_fit_linear(const fs::path& trace_path, const FitLinearOptions& opts, const GlobalOptions& g, Streams io) {
  FrequencyTrace trace;
  InputDigest digest;
  try {
    const std::string body = read_file(trace_path);
    digest = {trace_path.string(), sha256_hex(body)};
    if (is_touchstone(trace_path)) {
      TraceMetadata meta;
      meta.instrument_power_dbm = opts.power_dbm.value_or(0.0);
      meta.attenuation_db = opts.attenuation_db.value_or(0.0);
      meta.temperature_k = opts.temperature_k.value_or(0.01);
      trace = parse_touchstone_text(body, meta, opts.ports, trace_path.string());
    } else {
      trace = parse_csv_trace_text(body, trace_path.string());
      if (opts.power_dbm) trace.instrument_power_dbm = *opts.power_dbm;
      if (opts.attenuation_db) trace.attenuation_db = *opts.attenuation_db;
      if (opts.temperature_k) trace.temperature_k = *opts.temperature_k;
    }
    validate_trace(trace);
  } catch (const Error& e) {
    return fail(io, kExitInput, e.what());
  }

  LinearFitReport fit;
  FrequencyTrace fitted;
  try {
    fitted = maybe_window(trace, opts.window_linewidths);
    fit = fit_linear(fitted);
  } catch (const Error& e) {
    return fail(io, kExitAnalysis, e.what());
  }

  ReportEntry entry;
  entry.label = trace.label;
  entry.instrument_power_dbm = trace.instrument_power_dbm;
  entry.fit = fit;
  entry.metrics["photon_number"] = mean_photon_number(input_power(trace), fit.params);
  entry.metrics["window_points"] = double(fitted.size());
  ReportDocument doc;
  doc.provenance = make_provenance("fit-linear", {digest}, g);
  doc.provenance.settings["window_linewidths"] = format_number(opts.window_linewidths);
  doc.entries.push_back(entry);
  const fs::path report = default_report(trace_path, "fit-linear", g);
  try {
    write_report(doc, report);
    write_plot_table(make_iq_trace_table(fitted), table_path(report, PlotKind::kIqTrace));
  } catch (const std::exception& e) {
    return fail(io, kExitInput, e.what());
  }
  const auto& p = fit.params;
  io.out << trace.label << ": f_r=" << fmt(p.resonant_freq, 12) << " Hz Q_i=" << fmt(p.q_internal())
         << " Q_c=" << fmt(p.q_coupling()) << " residual_rms=" << fmt(fit.residual_rms, 3)
         << (fit.converged ? "" : " (not converged)") << '\n';
  if (g.verbose) io.err << "report: " << report.string() << '\n';
  return fit.converged ? kExitOk : fail(io, kExitAnalysis, "fit did not converge");
}

int cmd_fit_sweep(const fs::path& manifest_path, const FitSweepOptions& opts, const GlobalOptions& g, Streams io) {
  LoadedSweep sweep;
  try {
    sweep = load_sweep(manifest_path);
  } catch (const Error& e) {
    return fail(io, kExitInput, e.what());
  }
  const std::size_t m = sweep.traces.size();

  std::vector<PowerLinear> lin;
  std::vector<double> ellipticity(m, std::numeric_limits<double>::quiet_NaN());
  std::vector<double> xi(m, std::numeric_limits<double>::quiet_NaN());
  std::vector<std::string> reasons(m);
  try {
    lin = fit_powers_linear(sweep, opts.window_linewidths);
    for (std::size_t i = 0; i < m; ++i) {
      // With exclusion on, a power above the lowest whose linear fit fails is
      // excluded rather than fatal: a bistable trace need not fit a Lorentzian.
      const bool tolerate = opts.exclude_nonlinear_powers && i > 0;
      std::string problem;
      if (lin[i].error) {
        try {
          std::rethrow_exception(lin[i].error);
        } catch (const std::exception& e) {
          problem = e.what();
        }
      } else if (!lin[i].fit.converged) {
        problem = "linear fit did not converge";
      }
      if (problem.empty()) continue;
      if (!tolerate) throw Error(power_tag(sweep.traces[i], sweep.paths[i]) + ": " + problem);
      reasons[i] = "linear fit failed: " + problem;
    }
    if (opts.exclude_nonlinear_powers) {
      parallel_for(m, [&](std::size_t i) {
        if (!reasons[i].empty()) return;
        try {
          ellipticity[i] = ellipticity_metric(lin[i].trace, lin[i].fit.params);
        } catch (const LowSignalError&) {
        }
      });
      const double baseline = ellipticity[0];
      parallel_for(m, [&](std::size_t i) {
        if (!reasons[i].empty()) return;
        std::vector<std::string> why;
        if (std::isfinite(baseline) && std::isfinite(ellipticity[i]) && ellipticity[i] > opts.ellipticity_factor * baseline) {
          why.push_back("ellipticity " + fmt(ellipticity[i], 3) + " > " + fmt(opts.ellipticity_factor) + "x baseline " +
                        fmt(baseline, 3));
        }
        try {
          const auto seed = nonlinear_seed(lin[0].fit.params, lin[i].fit.params, lin[i].p_in);
          const auto nl = fit_nonlinear(lin[i].trace, seed, g.policy);
          xi[i] = normalized_drive_params(nl.params).xi;
          if (std::abs(xi[i]) > opts.xi_threshold) why.push_back("|xi| " + fmt(std::abs(xi[i]), 3) + " > " + fmt(opts.xi_threshold));
          if (nl.diagnostics.bifurcated) why.push_back("bifurcated");
        } catch (const BifurcationUnstableError&) {
          why.push_back("bifurcated");
        } catch (const std::exception& e) {
          why.push_back(std::string("nonlinear check failed: ") + e.what());
        }
        std::string joined;
        for (const auto& w : why) joined += (joined.empty() ? "" : "; ") + w;
        reasons[i] = joined;
      });
    }
  } catch (const Error& e) {
    return fail(io, kExitAnalysis, e.what());
  }

  std::vector<LossPoint> points;
  std::vector<QiVsNRow> rows;
  std::vector<double> included_fr;
  for (std::size_t i = 0; i < m; ++i) {
    if (!reasons[i].empty()) {
      if (g.verbose) io.err << "excluding " << power_tag(sweep.traces[i], sweep.paths[i]) << ": " << reasons[i] << '\n';
      continue;
    }
    const auto& f = lin[i].fit;
    points.push_back({lin[i].photons, f.params.internal_loss});
    rows.push_back({lin[i].photons, f.params.q_internal(),
                    f.std_errors.internal_loss / (f.params.internal_loss * f.params.internal_loss)});
    included_fr.push_back(f.params.resonant_freq);
    if (g.verbose) {
      io.err << power_tag(sweep.traces[i], sweep.paths[i]) << ": n=" << fmt(lin[i].photons, 4)
             << " Q_i=" << fmt(f.params.q_internal(), 4) << '\n';
    }
  }

  TlsFitReport tls;
  try {
    if (included_fr.empty()) throw InsufficientSpanError("fit_tls: every power was excluded as nonlinear");
    std::nth_element(included_fr.begin(), included_fr.begin() + included_fr.size() / 2, included_fr.end());
    const double f_r = included_fr[included_fr.size() / 2];
    tls = fit_tls(points, sweep.manifest.temperature_k, f_r, opts.model == SweepModel::kTlsTwoPhoton);
  } catch (const Error& e) {
    return fail(io, kExitAnalysis, e.what());
  }

  ReportDocument doc;
  doc.provenance = make_provenance("fit-sweep", sweep.digests, g);
  doc.provenance.settings["model"] = opts.model == SweepModel::kTls ? "tls" : "tls+2photon";
  doc.provenance.settings["exclude_nonlinear_powers"] = opts.exclude_nonlinear_powers ? "true" : "false";
  doc.provenance.settings["ellipticity_factor"] = format_number(opts.ellipticity_factor);
  doc.provenance.settings["xi_threshold"] = format_number(opts.xi_threshold);
  for (std::size_t i = 0; i < m; ++i) {
    ReportEntry e;
    e.label = sweep.traces[i].label;
    e.instrument_power_dbm = sweep.traces[i].instrument_power_dbm;
    e.fit = lin[i].fit;
    e.metrics["photon_number"] = lin[i].photons;
    if (opts.exclude_nonlinear_powers) {
      e.metrics["ellipticity"] = ellipticity[i];
      e.metrics["xi"] = xi[i];
    }
    e.metrics["excluded"] = reasons[i].empty() ? 0.0 : 1.0;
    if (!reasons[i].empty()) e.annotations["exclusion"] = reasons[i];
    doc.entries.push_back(std::move(e));
  }
  ReportEntry te;
  te.label = sweep.manifest.label;
  te.fit = tls;
  te.metrics["powers_used"] = double(points.size());
  doc.entries.push_back(std::move(te));

  const fs::path report = default_report(manifest_path, "fit-sweep", g);
  try {
    write_report(doc, report);
    write_plot_table(make_qi_vs_n_table(rows), table_path(report, PlotKind::kQiVsN));
  } catch (const std::exception& e) {
    return fail(io, kExitInput, e.what());
  }
  const auto& p = tls.params;
  io.out << sweep.manifest.label << ": Q_TLS=" << fmt(p.tls_loss > 0 ? 1.0 / p.tls_loss : INFINITY)
         << " n_c=" << fmt(p.n_c) << " alpha_tls=" << fmt(p.alpha_tls) << " delta_0=" << fmt(p.delta_0);
  if (opts.model == SweepModel::kTlsTwoPhoton) io.out << " gamma_nl=" << fmt(p.two_photon) << " Hz";
  io.out << " (" << points.size() << " of " << m << " powers)\n";
  return kExitOk;
}

int cmd_extract_kerr(const fs::path& manifest_path, const ExtractKerrOptions& opts, const GlobalOptions& g,
                     Streams io) {
  LoadedSweep sweep;
  try {
    sweep = load_sweep(manifest_path);
  } catch (const Error& e) {
    return fail(io, kExitInput, e.what());
  }
  const std::size_t m = sweep.traces.size();
  if (m < 4) {
    return fail(io, kExitAnalysis,
                "InsufficientPowers: Kerr extraction needs at least 4 powers, manifest has " + std::to_string(m));
  }

  std::vector<NonlinearFitReport> fits(m);
  std::vector<double> photons(m);
  std::vector<std::exception_ptr> errors(m);
  KerrExtraction ex;
  try {
    auto lin = fit_powers_linear(sweep, opts.window_linewidths);
    check_powers(lin, sweep);
    const LinearParams& base = lin[0].fit.params;
    parallel_for(m, [&](std::size_t i) {
      try {
        const auto seed = nonlinear_seed(base, lin[i].fit.params, lin[i].p_in);
        fits[i] = fit_nonlinear(lin[i].trace, seed, g.policy);
        if (!fits[i].converged) throw NonConvergenceError("nonlinear fit did not converge");
        photons[i] = max_photon_number(fits[i].params, lin[i].trace.freqs, g.policy);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    });
    for (std::size_t i = 0; i < m; ++i) {
      if (!errors[i]) continue;
      try {
        std::rethrow_exception(errors[i]);
      } catch (const std::exception& e) {
        throw NonConvergenceError(power_tag(sweep.traces[i], sweep.paths[i]) + ": " + e.what());
      }
    }
    ex = extract_kerr_two_photon(fits, photons);
  } catch (const Error& e) {
    return fail(io, kExitAnalysis, e.what());
  }
  const bool kerr_resolved = std::abs(ex.kerr) > opts.significance * ex.kerr_err;
  const bool gamma_resolved = ex.two_photon > opts.significance * ex.two_photon_err;

  ReportDocument doc;
  doc.provenance = make_provenance("extract-kerr", sweep.digests, g);
  doc.provenance.settings["significance"] = format_number(opts.significance);
  for (std::size_t i = 0; i < m; ++i) {
    ReportEntry e;
    e.label = sweep.traces[i].label;
    e.instrument_power_dbm = sweep.traces[i].instrument_power_dbm;
    e.fit = fits[i];
    const auto d = normalized_drive_params(fits[i].params);
    e.metrics["photon_number"] = photons[i];
    e.metrics["xi"] = d.xi;
    e.metrics["eta"] = d.eta;
    doc.entries.push_back(std::move(e));
  }
  ReportEntry ke;
  ke.label = sweep.manifest.label;
  ke.fit = ex;
  if (!kerr_resolved && !gamma_resolved) ke.annotations["diagnostic"] = "low_sensitivity";
  doc.entries.push_back(std::move(ke));

  const fs::path report = default_report(manifest_path, "extract-kerr", g);
  try {
    write_report(doc, report);
    write_plot_table(make_kerr_slope_table(ex), table_path(report, PlotKind::kKerrSlope));
  } catch (const std::exception& e) {
    return fail(io, kExitInput, e.what());
  }
  io.out << sweep.manifest.label << ": K_nl=" << fmt(ex.kerr) << " +- " << fmt(ex.kerr_err, 3)
         << " Hz (R2=" << fmt(ex.r2_kerr, 5) << ") gamma_nl=" << fmt(ex.two_photon) << " +- "
         << fmt(ex.two_photon_err, 3) << " Hz (R2=" << fmt(ex.r2_two_photon, 5) << ")\n";
  if (!kerr_resolved && !gamma_resolved) {
    return fail(io, kExitAnalysis,
                "low sensitivity: neither K_nl nor gamma_nl differs from zero by more than " +
                    fmt(opts.significance) + " standard errors; the sweep does not reach the nonlinear regime");
  }
  return kExitOk;
}

int run(const std::vector<std::string>& args, Streams io) {
  CLI::App app{"Superconducting resonator S21 analysis", "resofit"};
  app.require_subcommand(1);

  GlobalOptions g;
  std::string out_path;
  std::uint64_t seed = 0;
  std::string policy = "sweep-up";
  auto* out_opt = app.add_option("--out", out_path, "Report path (simulate: output directory)");
  auto* seed_opt = app.add_option("--seed", seed, "RNG seed override for simulate");
  app.add_option("--policy", policy, "Branch policy: low, high, sweep-up, sweep-down")
      ->check(CLI::IsMember({"low", "high", "sweep-up", "sweep-down", "sweep_up", "sweep_down"}));
  app.add_flag("--verbose,-v", g.verbose, "Per-power progress on standard error");
  app.fallthrough();

  FitLinearOptions lin_opts;
  std::string trace_path;
  std::vector<int> ports;
  auto* fl = app.add_subcommand("fit-linear", "Fit one trace with the linear line shape");
  fl->add_option("trace", trace_path, "CSV or Touchstone (.s2p) trace")->required();
  fl->add_option("--window", lin_opts.window_linewidths, "Half window in linewidths (0 = whole trace)")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  auto* pw = fl->add_option("--power-dbm", "Instrument power (required for .s2p)");
  auto* at = fl->add_option("--attenuation-db", "Attenuation to the chip");
  auto* tk = fl->add_option("--temperature-k", "Sample temperature");
  fl->add_option("--ports", ports, "Touchstone port pair OUT IN (default 2 1)")->expected(2);

  FitSweepOptions sweep_opts;
  std::string sweep_manifest;
  std::string model = "tls";
  auto* fs_cmd = app.add_subcommand("fit-sweep", "Linear fit per power, then the TLS loss model");
  fs_cmd->add_option("manifest", sweep_manifest, "Sweep manifest")->required();
  fs_cmd->add_option("--model", model, "tls or tls+2photon")->check(CLI::IsMember({"tls", "tls+2photon"}));
  fs_cmd->add_flag("--exclude-nonlinear-powers", sweep_opts.exclude_nonlinear_powers,
                   "Drop powers with elliptic IQ traces, |xi| > 0.1 or bistability");
  fs_cmd->add_option("--window", sweep_opts.window_linewidths, "Half window in linewidths (0 = whole trace)")
      ->check(CLI::NonNegativeNumber);

  ExtractKerrOptions kerr_opts;
  std::string kerr_manifest;
  auto* ek = app.add_subcommand("extract-kerr", "Nonlinear fit per power, then K_nl and gamma_nl slopes");
  ek->add_option("manifest", kerr_manifest, "Sweep manifest")->required();
  ek->add_option("--window", kerr_opts.window_linewidths, "Half window in linewidths (0 = whole trace)")
      ->check(CLI::NonNegativeNumber);
  ek->add_option("--significance", kerr_opts.significance,
                 "Exit 3 unless K_nl or gamma_nl exceeds this many standard errors")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);

  std::string config_path;
  std::string sim_dir;
  auto* sim = app.add_subcommand("simulate", "Write a synthetic power sweep and its manifest");
  sim->add_option("config", config_path, "Key-value generator config")->required();
  sim->add_option("out_dir", sim_dir, "Output directory (same as --out)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  if (!reversed.empty()) reversed.pop_back();  // program name
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, io.out, io.err);
    return code == 0 ? kExitOk : kExitInput;
  }

  if (*out_opt) g.out = out_path;
  if (*seed_opt) g.seed = seed;
  g.policy = parse_branch_policy(policy);

  if (*fl) {
    if (*pw) lin_opts.power_dbm = pw->as<double>();
    if (*at) lin_opts.attenuation_db = at->as<double>();
    if (*tk) lin_opts.temperature_k = tk->as<double>();
    if (!ports.empty()) lin_opts.ports = {ports[0], ports[1]};
    try {
      return cmd_fit_linear(trace_path, lin_opts, g, io);
    } catch (const ParameterDomainError& e) {
      return fail(io, kExitInput, e.what());
    }
  }
  if (*fs_cmd) {
    sweep_opts.model = model == "tls" ? SweepModel::kTls : SweepModel::kTlsTwoPhoton;
    return cmd_fit_sweep(sweep_manifest, sweep_opts, g, io);
  }
  if (*ek) return cmd_extract_kerr(kerr_manifest, kerr_opts, g, io);
  if (!sim_dir.empty()) {
    if (g.out && *g.out != fs::path(sim_dir)) return fail(io, kExitInput, "give the output directory once");
    g.out = sim_dir;
  }
  return cmd_simulate(config_path, g, io);
}

int run(int argc, const char* const* argv, Streams io) {
  return run(std::vector<std::string>(argv, argv + argc), io);
}

}  // namespace resofit::cli
