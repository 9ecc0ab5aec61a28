#include "resofit/report_io.hpp"

#include <openssl/evp.h>

#include <array>
#include <cmath>
#include <limits>
#include <numbers>

#include "json.hpp"
#include "resofit/errors.hpp"
#include "resofit/model.hpp"
#include "resofit/trace_io.hpp"

namespace resofit {

namespace {

using nlohmann::json;

json num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

double get_num(const json& j, const char* key) {
  const json& v = j.at(key);
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    throw json::type_error::create(302, std::string("field '") + key + "' is not a number", &v);
  }
  return v.get<double>();
}

json num_array(const std::vector<double>& xs) {
  json a = json::array();
  for (double x : xs) a.push_back(num(x));
  return a;
}

std::vector<double> get_num_array(const json& j, const char* key) {
  std::vector<double> out;
  for (const auto& v : j.at(key)) {
    json wrap = {{"v", v}};
    out.push_back(get_num(wrap, "v"));
  }
  return out;
}

json linear_json(const LinearParams& p) {
  return {{"amplitude", num(p.amplitude)},           {"electric_delay", num(p.electric_delay)},
          {"phase_offset", num(p.phase_offset)},     {"fano_asymmetry", num(p.fano_asymmetry)},
          {"resonant_freq", num(p.resonant_freq)},   {"internal_loss", num(p.internal_loss)},
          {"coupling_loss", num(p.coupling_loss)}};
}

LinearParams linear_from(const json& j) {
  LinearParams p;
  p.amplitude = get_num(j, "amplitude");
  p.electric_delay = get_num(j, "electric_delay");
  p.phase_offset = get_num(j, "phase_offset");
  p.fano_asymmetry = get_num(j, "fano_asymmetry");
  p.resonant_freq = get_num(j, "resonant_freq");
  p.internal_loss = get_num(j, "internal_loss");
  p.coupling_loss = get_num(j, "coupling_loss");
  return p;
}

json nonlinear_json(const NonlinearParams& p) {
  json j = linear_json(p.linear);
  j["kerr"] = num(p.kerr);
  j["two_photon"] = num(p.two_photon);
  j["drive_flux"] = num(p.drive_flux);
  return j;
}

NonlinearParams nonlinear_from(const json& j) {
  NonlinearParams p;
  p.linear = linear_from(j);
  p.kerr = get_num(j, "kerr");
  p.two_photon = get_num(j, "two_photon");
  p.drive_flux = get_num(j, "drive_flux");
  return p;
}

json tls_json(const TlsFitParams& p) {
  return {{"tls_loss", num(p.tls_loss)}, {"n_c", num(p.n_c)},           {"alpha_tls", num(p.alpha_tls)},
          {"delta_0", num(p.delta_0)},   {"two_photon", num(p.two_photon)}, {"temperature", num(p.temperature)},
          {"f_r", num(p.f_r)}};
}

TlsFitParams tls_from(const json& j) {
  TlsFitParams p;
  p.tls_loss = get_num(j, "tls_loss");
  p.n_c = get_num(j, "n_c");
  p.alpha_tls = get_num(j, "alpha_tls");
  p.delta_0 = get_num(j, "delta_0");
  p.two_photon = get_num(j, "two_photon");
  p.temperature = get_num(j, "temperature");
  p.f_r = get_num(j, "f_r");
  return p;
}

json linear_derived(const LinearParams& p) {
  json d = {{"q_internal", num(p.q_internal())}, {"q_coupling", num(p.q_coupling())}};
  if (std::abs(p.fano_asymmetry) < std::numbers::pi / 2) d["q_coupling_raw"] = num(raw_qc(p));
  return d;
}

json diagnostics_json(const Diagnostics& d) {
  return {{"nonlinear_suspected", d.nonlinear_suspected},
          {"bifurcated", d.bifurcated},
          {"low_snr", d.low_snr},
          {"low_sensitivity", d.low_sensitivity},
          {"notes", d.notes}};
}

Diagnostics diagnostics_from(const json& j) {
  Diagnostics d;
  d.nonlinear_suspected = j.at("nonlinear_suspected").get<bool>();
  d.bifurcated = j.at("bifurcated").get<bool>();
  d.low_snr = j.at("low_snr").get<bool>();
  d.low_sensitivity = j.at("low_sensitivity").get<bool>();
  d.notes = j.at("notes").get<std::vector<std::string>>();
  return d;
}

template <class P>
void common_fields(json& j, const FitReport<P>& r) {
  j["converged"] = r.converged;
  j["iterations"] = r.iterations;
  j["n_points"] = r.n_points;
  j["residual_rms"] = num(r.residual_rms);
  j["diagnostics"] = diagnostics_json(r.diagnostics);
}

template <class P>
void common_from(const json& j, FitReport<P>& r) {
  r.converged = j.at("converged").get<bool>();
  r.iterations = j.at("iterations").get<int>();
  r.n_points = j.at("n_points").get<std::size_t>();
  r.residual_rms = get_num(j, "residual_rms");
  r.diagnostics = diagnostics_from(j.at("diagnostics"));
}

json entry_json(const ReportEntry& e) {
  json j;
  std::visit(
      [&](const auto& fit) {
        using T = std::decay_t<decltype(fit)>;
        if constexpr (std::is_same_v<T, LinearFitReport>) {
          j["kind"] = "linear";
          j["params"] = linear_json(fit.params);
          j["std_errors"] = linear_json(fit.std_errors);
          j["derived"] = linear_derived(fit.params);
          common_fields(j, fit);
        } else if constexpr (std::is_same_v<T, NonlinearFitReport>) {
          j["kind"] = "nonlinear";
          j["params"] = nonlinear_json(fit.params);
          j["std_errors"] = nonlinear_json(fit.std_errors);
          j["derived"] = linear_derived(fit.params.linear);
          common_fields(j, fit);
        } else if constexpr (std::is_same_v<T, TlsFitReport>) {
          j["kind"] = "tls";
          j["params"] = tls_json(fit.params);
          j["std_errors"] = tls_json(fit.std_errors);
          j["derived"] = {{"q_tls", num(fit.params.tls_loss > 0 ? 1.0 / fit.params.tls_loss
                                                                 : std::numeric_limits<double>::infinity())}};
          common_fields(j, fit);
        } else {
          j["kind"] = "kerr_extraction";
          j["kerr"] = num(fit.kerr);
          j["kerr_err"] = num(fit.kerr_err);
          j["two_photon"] = num(fit.two_photon);
          j["two_photon_err"] = num(fit.two_photon_err);
          j["r2_kerr"] = num(fit.r2_kerr);
          j["r2_two_photon"] = num(fit.r2_two_photon);
          j["photon_numbers"] = num_array(fit.photon_numbers);
          j["kerr_shifts"] = num_array(fit.kerr_shifts);
          j["two_photon_rates"] = num_array(fit.two_photon_rates);
        }
      },
      e.fit);
  j["label"] = e.label;
  if (e.instrument_power_dbm) j["instrument_power_dbm"] = num(*e.instrument_power_dbm);
  json metrics = json::object();
  for (const auto& [k, v] : e.metrics) metrics[k] = num(v);
  j["metrics"] = metrics;
  j["annotations"] = e.annotations.empty() ? json::object() : json(e.annotations);
  return j;
}

ReportEntry entry_from(const json& j) {
  ReportEntry e;
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "linear") {
    LinearFitReport r;
    r.params = linear_from(j.at("params"));
    r.std_errors = linear_from(j.at("std_errors"));
    common_from(j, r);
    e.fit = r;
  } else if (kind == "nonlinear") {
    NonlinearFitReport r;
    r.params = nonlinear_from(j.at("params"));
    r.std_errors = nonlinear_from(j.at("std_errors"));
    common_from(j, r);
    e.fit = r;
  } else if (kind == "tls") {
    TlsFitReport r;
    r.params = tls_from(j.at("params"));
    r.std_errors = tls_from(j.at("std_errors"));
    common_from(j, r);
    e.fit = r;
  } else if (kind == "kerr_extraction") {
    KerrExtraction k;
    k.kerr = get_num(j, "kerr");
    k.kerr_err = get_num(j, "kerr_err");
    k.two_photon = get_num(j, "two_photon");
    k.two_photon_err = get_num(j, "two_photon_err");
    k.r2_kerr = get_num(j, "r2_kerr");
    k.r2_two_photon = get_num(j, "r2_two_photon");
    k.photon_numbers = get_num_array(j, "photon_numbers");
    k.kerr_shifts = get_num_array(j, "kerr_shifts");
    k.two_photon_rates = get_num_array(j, "two_photon_rates");
    e.fit = k;
  } else {
    throw json::other_error::create(501, "unknown fit kind '" + kind + "'", &j);
  }
  e.label = j.at("label").get<std::string>();
  if (j.contains("instrument_power_dbm")) e.instrument_power_dbm = get_num(j, "instrument_power_dbm");
  for (const auto& [k, v] : j.at("metrics").items()) {
    json wrap = {{"v", v}};
    e.metrics[k] = get_num(wrap, "v");
  }
  e.annotations = j.at("annotations").get<std::map<std::string, std::string>>();
  return e;
}

}  // namespace

std::string format_report(const ReportDocument& doc) {
  json inputs = json::array();
  for (const auto& in : doc.provenance.inputs) inputs.push_back({{"path", in.path}, {"sha256", in.sha256}});
  json fits = json::array();
  for (const auto& e : doc.entries) fits.push_back(entry_json(e));
  json j = {{"schema", kReportSchema},
            {"schema_version", kReportSchemaVersion},
            {"provenance",
             {{"tool", doc.provenance.tool},
              {"version", doc.provenance.version},
              {"command", doc.provenance.command},
              {"inputs", inputs},
              {"settings", doc.provenance.settings.empty() ? json::object() : json(doc.provenance.settings)}}},
            {"fits", fits}};
  return j.dump(2) + "\n";
}

ReportDocument parse_report_text(std::string_view text, const std::string& source) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(ParseErrorKind::kMalformedRow, source, 0, e.byte, e.what());
  }
  try {
    if (j.at("schema").get<std::string>() != kReportSchema) {
      throw ParseError(ParseErrorKind::kUnsupportedFormat, source, 0, 0, "not a resofit report");
    }
    if (j.at("schema_version").get<int>() != kReportSchemaVersion) {
      throw ParseError(ParseErrorKind::kUnsupportedFormat, source, 0, 0, "unsupported report schema version");
    }
    ReportDocument doc;
    const json& prov = j.at("provenance");
    doc.provenance.tool = prov.at("tool").get<std::string>();
    doc.provenance.version = prov.at("version").get<std::string>();
    doc.provenance.command = prov.at("command").get<std::string>();
    for (const auto& in : prov.at("inputs")) {
      doc.provenance.inputs.push_back({in.at("path").get<std::string>(), in.at("sha256").get<std::string>()});
    }
    doc.provenance.settings = prov.at("settings").get<std::map<std::string, std::string>>();
    for (const auto& f : j.at("fits")) doc.entries.push_back(entry_from(f));
    return doc;
  } catch (const json::exception& e) {
    throw ParseError(ParseErrorKind::kMalformedRow, source, 0, 0, e.what());
  }
}

void write_report(const ReportDocument& doc, const std::filesystem::path& path) {
  write_file_atomic(path, format_report(doc));
}

ReportDocument read_report(const std::filesystem::path& path) {
  return parse_report_text(read_file(path), path.string());
}

std::string sha256_hex(std::string_view data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw InternalConsistencyError("sha256 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[md[i] >> 4]);
    out.push_back(kHex[md[i] & 0xF]);
  }
  return out;
}

InputDigest digest_file(const std::filesystem::path& path) { return {path.string(), sha256_hex(read_file(path))}; }

const char* to_string(PlotKind kind) {
  switch (kind) {
    case PlotKind::kQiVsN: return "qi_vs_n";
    case PlotKind::kIqTrace: return "iq_trace";
    case PlotKind::kKerrSlope: return "kerr_slope";
  }
  return "?";
}

PlotTable make_qi_vs_n_table(std::span<const QiVsNRow> rows) {
  PlotTable t{PlotKind::kQiVsN, {"photon_number", "q_internal", "q_internal_err"}, {}};
  for (const auto& r : rows) t.rows.push_back({r.photon_number, r.q_internal, r.q_internal_err});
  return t;
}

PlotTable make_iq_trace_table(const FrequencyTrace& trace) {
  PlotTable t{PlotKind::kIqTrace, {"freq_hz", "re", "im"}, {}};
  for (std::size_t i = 0; i < trace.size(); ++i) t.rows.push_back({trace.freqs[i], trace.s21[i].real(), trace.s21[i].imag()});
  return t;
}

PlotTable make_kerr_slope_table(const KerrExtraction& k) {
  PlotTable t{PlotKind::kKerrSlope,
              {"photon_number", "kerr_shift_hz", "two_photon_rate_hz", "kerr_line_hz", "two_photon_line_hz"},
              {}};
  for (std::size_t i = 0; i < k.photon_numbers.size(); ++i) {
    const double n = k.photon_numbers[i];
    t.rows.push_back({n, k.kerr_shifts[i], k.two_photon_rates[i], k.kerr * n, k.two_photon * n});
  }
  return t;
}

std::string format_plot_table(const PlotTable& table) {
  std::string out;
  for (std::size_t c = 0; c < table.columns.size(); ++c) {
    if (c) out += ',';
    out += table.columns[c];
  }
  out += '\n';
  for (const auto& row : table.rows) {
    if (row.size() != table.columns.size()) throw InternalConsistencyError("plot table row width mismatch");
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out += ',';
      out += format_number(row[c]);
    }
    out += '\n';
  }
  return out;
}

void write_plot_table(const PlotTable& table, const std::filesystem::path& path) {
  write_file_atomic(path, format_plot_table(table));
}

}  // namespace resofit
