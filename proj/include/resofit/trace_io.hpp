#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>

#include "resofit/model.hpp"

namespace resofit {

/// Canonical CSV trace format:
///
///   # label=R1
///   # power_dbm=-70
///   # attenuation_db=74
///   # temperature_k=0.01
///   freq_hz,s21_re,s21_im
///   5.0e9,0.98,-0.01
///   ...
///
/// `power_dbm`, `attenuation_db` and `temperature_k` are required; `label`
/// defaults to the file stem. Other `# key=value` lines are ignored, as are
/// `#` lines without `=`. Line endings may be LF or CRLF.
FrequencyTrace parse_csv_trace(const std::filesystem::path& path);
FrequencyTrace parse_csv_trace_text(std::string_view text, const std::string& source = "<memory>");

/// Writes the canonical CSV with 17 significant digits and `\n` line endings.
std::string format_csv_trace(const FrequencyTrace& trace);
void write_csv_trace(const FrequencyTrace& trace, const std::filesystem::path& path);

/// Metadata a Touchstone file cannot carry.
struct TraceMetadata {
  double instrument_power_dbm = 0.0;
  double attenuation_db = 0.0;
  double temperature_k = 0.01;
  std::string label;
};

/// Touchstone v1 two-port import. Honors `# <Hz|kHz|MHz|GHz> S <RI|MA|DB> R <z0>`
/// (defaults GHz S MA R 50) and extracts S_{out,in} (default S21).
FrequencyTrace parse_touchstone(const std::filesystem::path& path, const TraceMetadata& meta,
                                std::pair<int, int> port_pair = {2, 1});
FrequencyTrace parse_touchstone_text(std::string_view text, const TraceMetadata& meta,
                                     std::pair<int, int> port_pair = {2, 1},
                                     const std::string& source = "<memory>");

/// Shortest decimal with 17 significant digits.
std::string format_number(double value);

/// Writes `content` to a temporary sibling and renames it over `path`, so
/// readers never observe a partially written file.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

std::string read_file(const std::filesystem::path& path);

}  // namespace resofit
