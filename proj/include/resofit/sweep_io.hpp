#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace resofit {

/// One `key = value` line of a configuration or manifest file.
struct KeyValueEntry {
  std::string key;
  std::string value;
  std::size_t line = 0;
  std::size_t value_column = 0;  // 1-based
};

/// Reads `key = value` lines. Blank lines and lines starting with `#` are
/// skipped; a `#` after the value starts a trailing comment. Keys may repeat.
std::vector<KeyValueEntry> parse_key_values(std::string_view text, const std::string& source = "<memory>");

struct ManifestEntry {
  std::filesystem::path trace_path;
  double instrument_power_dbm = 0.0;
};

/// A power sweep on one resonator. File form:
///
///   label = R1
///   attenuation_db = 74
///   temperature_k = 0.01
///   trace = R1_p00.csv, -76
///   trace = R1_p01.csv, -74
///
/// Relative trace paths are resolved against the manifest's directory.
/// The manifest's power, attenuation and temperature take precedence over
/// the metadata inside each trace file.
struct SweepManifest {
  std::string label;
  std::vector<ManifestEntry> traces;
  double attenuation_db = 0.0;
  double temperature_k = 0.01;
};

/// Throws ParameterDomainError unless paths are distinct and all numbers finite.
void validate(const SweepManifest& manifest);

SweepManifest parse_manifest(const std::filesystem::path& path);
SweepManifest parse_manifest_text(std::string_view text, const std::filesystem::path& base_dir,
                                  const std::string& source = "<memory>");

/// Trace paths under `base_dir` are written relative to it.
std::string format_manifest(const SweepManifest& manifest, const std::filesystem::path& base_dir);
void write_manifest(const SweepManifest& manifest, const std::filesystem::path& path);

}  // namespace resofit
