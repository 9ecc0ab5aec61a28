#include "resofit/sweep_io.hpp"

#include <charconv>
#include <cmath>
#include <optional>
#include <set>

#include "resofit/errors.hpp"
#include "resofit/trace_io.hpp"

namespace resofit {

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\v' || c == '\f'; }

std::string_view trim(std::string_view s, std::size_t* lead = nullptr) {
  std::size_t a = 0;
  while (a < s.size() && is_space(s[a])) ++a;
  std::size_t b = s.size();
  while (b > a && is_space(s[b - 1])) --b;
  if (lead) *lead = a;
  return s.substr(a, b - a);
}

std::optional<double> to_double(std::string_view s) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

}  // namespace

std::vector<KeyValueEntry> parse_key_values(std::string_view text, const std::string& source) {
  if (text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);
  std::vector<KeyValueEntry> out;
  std::size_t start = 0;
  std::size_t number = 0;
  while (start <= text.size()) {
    ++number;
    const std::size_t end = text.find('\n', start);
    std::string_view line = text.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start);
    start = end == std::string_view::npos ? text.size() + 1 : end + 1;
    if (const std::size_t hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    std::size_t lead = 0;
    const std::string_view body = trim(line, &lead);
    if (body.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ParseError(ParseErrorKind::kMalformedRow, source, number, lead + 1, "expected 'key = value'");
    }
    const std::string_view key = trim(line.substr(0, eq));
    if (key.empty()) throw ParseError(ParseErrorKind::kMalformedRow, source, number, lead + 1, "empty key");
    std::size_t vlead = 0;
    const std::string_view value = trim(line.substr(eq + 1), &vlead);
    out.push_back({std::string(key), std::string(value), number, eq + 2 + vlead});
  }
  return out;
}

void validate(const SweepManifest& manifest) {
  std::set<std::filesystem::path> seen;
  for (const auto& e : manifest.traces) {
    if (!std::isfinite(e.instrument_power_dbm)) {
      throw ParameterDomainError("manifest: power for " + e.trace_path.string() + " is not finite");
    }
    if (!seen.insert(e.trace_path.lexically_normal()).second) {
      throw ParameterDomainError("manifest: duplicate trace path " + e.trace_path.string());
    }
  }
  if (!std::isfinite(manifest.attenuation_db)) throw ParameterDomainError("manifest: attenuation_db is not finite");
  if (!std::isfinite(manifest.temperature_k) || manifest.temperature_k <= 0.0) {
    throw ParameterDomainError("manifest: temperature_k must be positive");
  }
}

SweepManifest parse_manifest_text(std::string_view text, const std::filesystem::path& base_dir,
                                  const std::string& source) {
  SweepManifest m;
  bool have_att = false;
  bool have_temp = false;
  bool have_label = false;
  std::set<std::filesystem::path> seen;
  std::size_t last_line = 0;
  for (const auto& kv : parse_key_values(text, source)) {
    last_line = kv.line;
    auto number = [&](std::string_view s, std::size_t col) {
      const auto v = to_double(s);
      if (!v) {
        throw ParseError(ParseErrorKind::kMalformedRow, source, kv.line, col,
                         "'" + kv.key + "' needs a finite number");
      }
      return *v;
    };
    auto once = [&](bool& flag) {
      if (flag) throw ParseError(ParseErrorKind::kMalformedRow, source, kv.line, 1, "duplicate key '" + kv.key + "'");
      flag = true;
    };
    if (kv.key == "label") {
      once(have_label);
      m.label = kv.value;
    } else if (kv.key == "attenuation_db") {
      once(have_att);
      m.attenuation_db = number(kv.value, kv.value_column);
    } else if (kv.key == "temperature_k") {
      once(have_temp);
      m.temperature_k = number(kv.value, kv.value_column);
      if (m.temperature_k <= 0.0) {
        throw ParseError(ParseErrorKind::kMalformedRow, source, kv.line, kv.value_column,
                         "temperature_k must be positive");
      }
    } else if (kv.key == "trace") {
      const std::size_t comma = kv.value.rfind(',');
      if (comma == std::string::npos) {
        throw ParseError(ParseErrorKind::kMalformedRow, source, kv.line, kv.value_column,
                         "expected 'trace = <path>, <power_dbm>'");
      }
      const std::string_view path_text = trim(std::string_view(kv.value).substr(0, comma));
      std::size_t plead = 0;
      const std::string_view power_text = trim(std::string_view(kv.value).substr(comma + 1), &plead);
      if (path_text.empty()) {
        throw ParseError(ParseErrorKind::kMalformedRow, source, kv.line, kv.value_column, "empty trace path");
      }
      const double power = number(power_text, kv.value_column + comma + 1 + plead);
      std::filesystem::path p(path_text);
      if (p.is_relative()) p = base_dir / p;
      p = p.lexically_normal();
      if (!seen.insert(p).second) {
        throw ParseError(ParseErrorKind::kMalformedRow, source, kv.line, kv.value_column,
                         "duplicate trace path '" + std::string(path_text) + "'");
      }
      m.traces.push_back({p, power});
    } else {
      throw ParseError(ParseErrorKind::kMalformedRow, source, kv.line, 1, "unknown key '" + kv.key + "'");
    }
  }
  if (!have_att) throw ParseError(ParseErrorKind::kMissingMetadata, source, last_line, 0, "missing key 'attenuation_db'");
  if (!have_temp) throw ParseError(ParseErrorKind::kMissingMetadata, source, last_line, 0, "missing key 'temperature_k'");
  if (m.traces.empty()) throw ParseError(ParseErrorKind::kMissingMetadata, source, last_line, 0, "no 'trace' entries");
  return m;
}

SweepManifest parse_manifest(const std::filesystem::path& path) {
  return parse_manifest_text(read_file(path), path.parent_path(), path.string());
}

std::string format_manifest(const SweepManifest& manifest, const std::filesystem::path& base_dir) {
  validate(manifest);
  std::string out = "# resofit sweep manifest\n";
  out += "label = " + manifest.label + "\n";
  out += "attenuation_db = " + format_number(manifest.attenuation_db) + "\n";
  out += "temperature_k = " + format_number(manifest.temperature_k) + "\n";
  for (const auto& e : manifest.traces) {
    std::filesystem::path p = e.trace_path;
    if (!base_dir.empty() && p.is_absolute() == base_dir.is_absolute()) {
      const auto rel = p.lexically_relative(base_dir);
      if (!rel.empty() && *rel.begin() != "..") p = rel;
    }
    out += "trace = " + p.generic_string() + ", " + format_number(e.instrument_power_dbm) + "\n";
  }
  return out;
}

void write_manifest(const SweepManifest& manifest, const std::filesystem::path& path) {
  write_file_atomic(path, format_manifest(manifest, path.parent_path()));
}

}  // namespace resofit
