#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "resofit/duffing.hpp"
#include "resofit/fit_report.hpp"
#include "resofit/tls_fit.hpp"

namespace resofit {

inline constexpr const char* kToolName = "resofit";
inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr const char* kReportSchema = "resofit.report";
inline constexpr int kReportSchemaVersion = 1;

struct InputDigest {
  std::string path;
  std::string sha256;  // lowercase hex
};

struct Provenance {
  std::string tool = kToolName;
  std::string version = kToolVersion;
  std::string command;
  std::vector<InputDigest> inputs;
  std::map<std::string, std::string> settings;
};

using FitResult = std::variant<LinearFitReport, NonlinearFitReport, TlsFitReport, KerrExtraction>;

struct ReportEntry {
  std::string label;
  std::optional<double> instrument_power_dbm;
  FitResult fit;
  std::map<std::string, double> metrics;            // e.g. photon_number, ellipticity, xi
  std::map<std::string, std::string> annotations;  // e.g. exclusion reason
};

struct ReportDocument {
  Provenance provenance;
  std::vector<ReportEntry> entries;
};

/// JSON document, schema "resofit.report" version 1:
///
///   { "schema": "resofit.report", "schema_version": 1,
///     "provenance": { "tool", "version", "command",
///                     "inputs": [ { "path", "sha256" } ], "settings": { } },
///     "fits": [ { "kind": "linear" | "nonlinear" | "tls" | "kerr_extraction",
///                 "label", "instrument_power_dbm" (optional),
///                 "params": { }, "std_errors": { },
///                 "converged", "iterations", "n_points", "residual_rms",
///                 "diagnostics": { "nonlinear_suspected", "bifurcated",
///                                  "low_snr", "low_sensitivity", "notes" },
///                 "derived": { },   // written only, ignored on read
///                 "metrics": { }, "annotations": { } } ] }
///
/// A kerr_extraction entry carries "kerr", "kerr_err", "two_photon",
/// "two_photon_err", "r2_kerr", "r2_two_photon" and the per-power arrays in
/// place of params/std_errors. Numbers use the shortest round-trip form;
/// non-finite values are written as the strings "inf", "-inf" and "nan".
std::string format_report(const ReportDocument& doc);
ReportDocument parse_report_text(std::string_view text, const std::string& source = "<memory>");

/// Atomic: the document appears at `path` complete or not at all.
void write_report(const ReportDocument& doc, const std::filesystem::path& path);
ReportDocument read_report(const std::filesystem::path& path);

std::string sha256_hex(std::string_view data);
InputDigest digest_file(const std::filesystem::path& path);

enum class PlotKind { kQiVsN, kIqTrace, kKerrSlope };
const char* to_string(PlotKind kind);

/// Column-oriented table written as CSV with a single header line.
struct PlotTable {
  PlotKind kind = PlotKind::kQiVsN;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
};

struct QiVsNRow {
  double photon_number = 0.0;
  double q_internal = 0.0;
  double q_internal_err = 0.0;
};

/// photon_number, q_internal, q_internal_err
PlotTable make_qi_vs_n_table(std::span<const QiVsNRow> rows);
/// freq_hz, re, im
PlotTable make_iq_trace_table(const FrequencyTrace& trace);
/// photon_number, kerr_shift_hz, two_photon_rate_hz, kerr_line_hz, two_photon_line_hz
PlotTable make_kerr_slope_table(const KerrExtraction& extraction);

std::string format_plot_table(const PlotTable& table);
void write_plot_table(const PlotTable& table, const std::filesystem::path& path);

}  // namespace resofit
