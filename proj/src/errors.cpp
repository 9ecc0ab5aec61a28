#include "resofit/errors.hpp"

#include <sstream>

namespace resofit {

namespace {

std::string mismatch_message(std::size_t expected, const std::vector<double>& centers) {
  std::ostringstream os;
  os.precision(10);
  os << "segmentation mismatch: expected " << expected << " resonances, found " << centers.size();
  if (!centers.empty()) {
    os << " at [";
    for (std::size_t i = 0; i < centers.size(); ++i) os << (i ? ", " : "") << centers[i];
    os << "] Hz";
  }
  return os.str();
}

std::string parse_message(ParseErrorKind kind, const std::string& source, std::size_t line,
                          std::size_t column, const std::string& detail) {
  std::ostringstream os;
  os << source;
  if (line > 0) os << ':' << line;
  if (column > 0) os << ':' << column;
  os << ": " << to_string(kind) << ": " << detail;
  return os.str();
}

}  // namespace

const char* to_string(ParseErrorKind kind) {
  switch (kind) {
    case ParseErrorKind::kIo: return "IoError";
    case ParseErrorKind::kMalformedRow: return "MalformedRow";
    case ParseErrorKind::kNonMonotoneFrequency: return "NonMonotoneFrequency";
    case ParseErrorKind::kMissingMetadata: return "MissingMetadata";
    case ParseErrorKind::kMissingHeader: return "MissingHeader";
    case ParseErrorKind::kUnsupportedFormat: return "UnsupportedFormat";
    case ParseErrorKind::kMalformedOptionLine: return "MalformedOptionLine";
  }
  return "ParseError";
}

SegmentationMismatchError::SegmentationMismatchError(std::size_t expected,
                                                     std::vector<double> found_centers)
    : Error(mismatch_message(expected, found_centers)),
      expected_(expected),
      found_centers_(std::move(found_centers)) {}

ParseError::ParseError(ParseErrorKind kind, std::string source, std::size_t line,
                       std::size_t column, const std::string& detail)
    : Error(parse_message(kind, source, line, column, detail)),
      kind_(kind),
      source_(std::move(source)),
      line_(line),
      column_(column) {}

ConfigError::ConfigError(std::string key, const std::string& detail)
    : Error("config key '" + key + "': " + detail), key_(std::move(key)) {}

}  // namespace resofit
