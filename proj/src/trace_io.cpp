#include "resofit/trace_io.hpp"

#include <unistd.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <vector>

#include "resofit/errors.hpp"

namespace resofit {

namespace {

struct Line {
  std::size_t number;
  std::string_view text;
};

std::vector<Line> split_lines(std::string_view text) {
  if (text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);
  std::vector<Line> lines;
  std::size_t start = 0;
  std::size_t number = 1;
  while (start < text.size()) {
    const std::size_t end = text.find('\n', start);
    std::string_view line = text.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back({number++, line});
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  return lines;
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\v' || c == '\f'; }

// Trim, reporting how many leading characters were removed.
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

std::string upper(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

struct Token {
  std::string_view text;
  std::size_t column;  // 1-based
};

std::vector<Token> whitespace_tokens(std::string_view line) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && is_space(line[i])) ++i;
    const std::size_t start = i;
    while (i < line.size() && !is_space(line[i])) ++i;
    if (i > start) out.push_back({line.substr(start, i - start), start + 1});
  }
  return out;
}

}  // namespace

std::string format_number(double value) {
  std::array<char, 64> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value, std::chars_format::general, 17);
  if (ec != std::errc()) return "nan";
  return std::string(buf.data(), ptr);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(ParseErrorKind::kIo, path.string(), 0, 0, "cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw ParseError(ParseErrorKind::kIo, path.string(), 0, 0, "read failed");
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp-" + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw Error("write failed for " + path.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Error("cannot move report into place at " + path.string());
  }
}

FrequencyTrace parse_csv_trace_text(std::string_view text, const std::string& source) {
  FrequencyTrace trace;
  std::map<std::string, std::pair<double, std::size_t>> numeric;
  std::optional<std::string> label;
  std::size_t header_line = 0;
  std::size_t last_line = 1;

  static constexpr std::array<std::string_view, 3> kNumericKeys{"power_dbm", "attenuation_db", "temperature_k"};

  for (const Line& line : split_lines(text)) {
    last_line = line.number;
    std::size_t lead = 0;
    const std::string_view body = trim(line.text, &lead);
    if (body.empty()) continue;
    if (body.front() == '#') {
      if (header_line != 0) continue;  // comments after the column header
      const std::string_view meta = body.substr(1);
      const std::size_t eq = meta.find('=');
      if (eq == std::string_view::npos) continue;
      std::size_t key_lead = 0;
      const std::string key(trim(meta.substr(0, eq), &key_lead));
      std::size_t value_lead = 0;
      const std::string_view value = trim(meta.substr(eq + 1), &value_lead);
      const std::size_t key_col = lead + 2 + key_lead;
      const std::size_t value_col = lead + 2 + eq + 1 + value_lead;
      if (key.empty()) {
        throw ParseError(ParseErrorKind::kMalformedRow, source, line.number, key_col, "metadata key is empty");
      }
      if (key == "label") {
        if (label) throw ParseError(ParseErrorKind::kMalformedRow, source, line.number, key_col, "duplicate key 'label'");
        label = std::string(value);
        continue;
      }
      if (std::find(kNumericKeys.begin(), kNumericKeys.end(), key) == kNumericKeys.end()) continue;
      if (numeric.count(key)) {
        throw ParseError(ParseErrorKind::kMalformedRow, source, line.number, key_col, "duplicate key '" + key + "'");
      }
      const auto v = to_double(value);
      if (!v) {
        throw ParseError(ParseErrorKind::kMalformedRow, source, line.number, value_col,
                         "metadata '" + key + "' is not a finite number");
      }
      if ((key == "attenuation_db" && *v < 0.0) || (key == "temperature_k" && *v <= 0.0)) {
        throw ParseError(ParseErrorKind::kMalformedRow, source, line.number, value_col,
                         "metadata '" + key + "' is out of range");
      }
      numeric[key] = {*v, line.number};
      continue;
    }
    if (header_line == 0) {
      std::string compact;
      for (char c : body) {
        if (!is_space(c)) compact.push_back(c);
      }
      if (compact != "freq_hz,s21_re,s21_im") {
        throw ParseError(ParseErrorKind::kMissingHeader, source, line.number, lead + 1,
                         "expected column header 'freq_hz,s21_re,s21_im'");
      }
      header_line = line.number;
      continue;
    }

    std::array<double, 3> values{};
    std::size_t field = 0;
    std::size_t pos = 0;
    const std::string_view row = line.text;
    while (true) {
      const std::size_t comma = row.find(',', pos);
      const std::string_view raw = row.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos);
      std::size_t flead = 0;
      const std::string_view cell = trim(raw, &flead);
      if (field >= 3) {
        throw ParseError(ParseErrorKind::kMalformedRow, source, line.number, pos + 1,
                         "expected 3 fields, found more");
      }
      const auto v = to_double(cell);
      if (!v) {
        throw ParseError(ParseErrorKind::kMalformedRow, source, line.number, pos + flead + 1,
                         "field " + std::to_string(field + 1) + " is not a finite number");
      }
      values[field++] = *v;
      if (comma == std::string_view::npos) break;
      pos = comma + 1;
    }
    if (field != 3) {
      throw ParseError(ParseErrorKind::kMalformedRow, source, line.number, row.size() + 1,
                       "expected 3 fields, found " + std::to_string(field));
    }
    if (!trace.freqs.empty() && !(values[0] > trace.freqs.back())) {
      throw ParseError(ParseErrorKind::kNonMonotoneFrequency, source, line.number, 1,
                       "frequency " + format_number(values[0]) + " does not exceed the previous row");
    }
    trace.freqs.push_back(values[0]);
    trace.s21.emplace_back(values[1], values[2]);
  }

  if (header_line == 0) {
    throw ParseError(ParseErrorKind::kMissingHeader, source, last_line, 0, "no 'freq_hz,s21_re,s21_im' header");
  }
  for (std::string_view key : kNumericKeys) {
    if (!numeric.count(std::string(key))) {
      throw ParseError(ParseErrorKind::kMissingMetadata, source, header_line, 0,
                       "missing metadata key '" + std::string(key) + "'");
    }
  }
  if (trace.freqs.empty()) {
    throw ParseError(ParseErrorKind::kMalformedRow, source, last_line, 0, "no data rows");
  }
  trace.instrument_power_dbm = numeric["power_dbm"].first;
  trace.attenuation_db = numeric["attenuation_db"].first;
  trace.temperature_k = numeric["temperature_k"].first;
  trace.label = label ? *label : std::filesystem::path(source).stem().string();
  return trace;
}

FrequencyTrace parse_csv_trace(const std::filesystem::path& path) {
  return parse_csv_trace_text(read_file(path), path.string());
}

std::string format_csv_trace(const FrequencyTrace& trace) {
  std::string label = trace.label;
  std::replace(label.begin(), label.end(), '\n', ' ');
  std::replace(label.begin(), label.end(), '\r', ' ');
  std::string out;
  out.reserve(64 * (trace.size() + 6));
  out += "# label=" + label + "\n";
  out += "# power_dbm=" + format_number(trace.instrument_power_dbm) + "\n";
  out += "# attenuation_db=" + format_number(trace.attenuation_db) + "\n";
  out += "# temperature_k=" + format_number(trace.temperature_k) + "\n";
  out += "freq_hz,s21_re,s21_im\n";
  for (std::size_t i = 0; i < trace.size(); ++i) {
    out += format_number(trace.freqs[i]);
    out += ',';
    out += format_number(trace.s21[i].real());
    out += ',';
    out += format_number(trace.s21[i].imag());
    out += '\n';
  }
  return out;
}

void write_csv_trace(const FrequencyTrace& trace, const std::filesystem::path& path) {
  write_file_atomic(path, format_csv_trace(trace));
}

FrequencyTrace parse_touchstone_text(std::string_view text, const TraceMetadata& meta,
                                     std::pair<int, int> port_pair, const std::string& source) {
  const auto [out_port, in_port] = port_pair;
  if (out_port < 1 || out_port > 2 || in_port < 1 || in_port > 2) {
    throw ParameterDomainError("touchstone: port pair must lie in {1,2}x{1,2}");
  }
  // Two-port data order: N11 N21 N12 N22.
  const int pair_index = (in_port - 1) * 2 + (out_port - 1);

  double unit = 1e9;
  enum class Format { kRI, kMA, kDB } format = Format::kMA;
  bool option_seen = false;
  bool data_seen = false;

  FrequencyTrace trace;
  std::vector<double> pending;
  std::size_t record_line = 0;
  std::size_t last_line = 1;

  auto flush = [&](std::size_t line_no) {
    const double f = pending[0] * unit;
    const double a = pending[1 + 2 * pair_index];
    const double b = pending[2 + 2 * pair_index];
    Complex z;
    switch (format) {
      case Format::kRI: z = Complex(a, b); break;
      case Format::kMA: z = std::polar(a, b * std::numbers::pi / 180.0); break;
      case Format::kDB: z = std::polar(std::pow(10.0, a / 20.0), b * std::numbers::pi / 180.0); break;
    }
    if (!trace.freqs.empty() && !(f > trace.freqs.back())) {
      throw ParseError(ParseErrorKind::kNonMonotoneFrequency, source, line_no, 1,
                       "frequency does not exceed the previous record");
    }
    trace.freqs.push_back(f);
    trace.s21.push_back(z);
    pending.clear();
  };

  for (const Line& line : split_lines(text)) {
    last_line = line.number;
    std::string_view body = line.text;
    if (const std::size_t bang = body.find('!'); bang != std::string_view::npos) body = body.substr(0, bang);
    std::size_t lead = 0;
    const std::string_view trimmed = trim(body, &lead);
    if (trimmed.empty()) continue;
    if (trimmed.front() == '[') {
      throw ParseError(ParseErrorKind::kUnsupportedFormat, source, line.number, lead + 1,
                       "Touchstone v2 keyword '" + std::string(trimmed) + "' is not supported");
    }
    if (trimmed.front() == '#') {
      if (option_seen) continue;  // only the first option line counts
      if (data_seen) {
        throw ParseError(ParseErrorKind::kMalformedOptionLine, source, line.number, lead + 1,
                         "option line after data");
      }
      option_seen = true;
      const auto tokens = whitespace_tokens(body.substr(lead + 1));
      for (std::size_t k = 0; k < tokens.size(); ++k) {
        const std::string tok = upper(tokens[k].text);
        const std::size_t col = lead + 1 + tokens[k].column;
        if (tok == "HZ") unit = 1.0;
        else if (tok == "KHZ") unit = 1e3;
        else if (tok == "MHZ") unit = 1e6;
        else if (tok == "GHZ") unit = 1e9;
        else if (tok == "S") {}
        else if (tok == "Y" || tok == "Z" || tok == "G" || tok == "H") {
          throw ParseError(ParseErrorKind::kUnsupportedFormat, source, line.number, col,
                           "parameter type '" + tok + "' is not S");
        } else if (tok == "RI") format = Format::kRI;
        else if (tok == "MA") format = Format::kMA;
        else if (tok == "DB") format = Format::kDB;
        else if (tok == "R") {
          if (k + 1 >= tokens.size() || !to_double(tokens[k + 1].text) || *to_double(tokens[k + 1].text) <= 0.0) {
            throw ParseError(ParseErrorKind::kMalformedOptionLine, source, line.number, col,
                             "'R' must be followed by a positive reference impedance");
          }
          ++k;
        } else {
          throw ParseError(ParseErrorKind::kMalformedOptionLine, source, line.number, col,
                           "unknown option token '" + std::string(tokens[k].text) + "'");
        }
      }
      continue;
    }
    data_seen = true;
    for (const Token& t : whitespace_tokens(body)) {
      const auto v = to_double(t.text);
      if (!v) {
        throw ParseError(ParseErrorKind::kMalformedRow, source, line.number, t.column,
                         "'" + std::string(t.text) + "' is not a finite number");
      }
      if (pending.empty()) record_line = line.number;
      pending.push_back(*v);
      if (pending.size() == 9) flush(record_line);
    }
  }
  if (!pending.empty()) {
    throw ParseError(ParseErrorKind::kMalformedRow, source, record_line, 0,
                     "incomplete two-port record (" + std::to_string(pending.size()) + " of 9 values)");
  }
  if (trace.freqs.empty()) throw ParseError(ParseErrorKind::kMalformedRow, source, last_line, 0, "no data records");

  trace.instrument_power_dbm = meta.instrument_power_dbm;
  trace.attenuation_db = meta.attenuation_db;
  trace.temperature_k = meta.temperature_k;
  trace.label = meta.label.empty() ? std::filesystem::path(source).stem().string() : meta.label;
  return trace;
}

FrequencyTrace parse_touchstone(const std::filesystem::path& path, const TraceMetadata& meta,
                                std::pair<int, int> port_pair) {
  return parse_touchstone_text(read_file(path), meta, port_pair, path.string());
}

}  // namespace resofit
