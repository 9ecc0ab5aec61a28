#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "resofit/duffing.hpp"
#include "resofit/synth.hpp"

namespace resofit::cli {

enum ExitCode : int { kExitOk = 0, kExitInput = 2, kExitAnalysis = 3 };

struct GlobalOptions {
  std::optional<std::filesystem::path> out;  // report path, or output directory for `simulate`
  std::optional<std::uint64_t> seed;
  BranchPolicy policy = BranchPolicy::kSweepUp;
  bool verbose = false;
};

struct Streams {
  std::ostream& out;
  std::ostream& err;
};

struct FitLinearOptions {
  double window_linewidths = 10.0;  // 0 disables windowing
  std::optional<double> power_dbm;  // override / supply trace metadata
  std::optional<double> attenuation_db;
  std::optional<double> temperature_k;
  std::pair<int, int> ports{2, 1};  // Touchstone only
};

enum class SweepModel { kTls, kTlsTwoPhoton };

struct FitSweepOptions {
  SweepModel model = SweepModel::kTls;
  bool exclude_nonlinear_powers = false;
  double window_linewidths = 10.0;
  double ellipticity_factor = 10.0;  // exclusion: ellipticity > factor x lowest-power value
  double xi_threshold = 0.1;         // exclusion: fitted |xi| above this
};

struct ExtractKerrOptions {
  double window_linewidths = 10.0;
  double significance = 3.0;  // slopes within this many std errors of zero are "not resolved"
};

/// Generator settings read by `simulate`. Key-value file; see
/// docs/simulate.conf for the annotated key list.
struct SimulationConfig {
  PowerSweepConfig sweep;
  std::size_t points = 401;
  double span_linewidths = 5.0;  // half span, in low-power loaded linewidths
};

/// Throws ConfigError naming the offending key.
SimulationConfig parse_simulation_config(std::string_view text, const std::string& source = "<memory>");

int cmd_fit_linear(const std::filesystem::path& trace_path, const FitLinearOptions& opts, const GlobalOptions& g,
                   Streams io);
int cmd_fit_sweep(const std::filesystem::path& manifest_path, const FitSweepOptions& opts, const GlobalOptions& g,
                  Streams io);
int cmd_extract_kerr(const std::filesystem::path& manifest_path, const ExtractKerrOptions& opts,
                     const GlobalOptions& g, Streams io);
int cmd_simulate(const std::filesystem::path& config_path, const GlobalOptions& g, Streams io);

/// Full command line: `resofit <command> [args] [--out P] [--seed N]
/// [--policy low|high|sweep-up|sweep-down] [--verbose]`. As with argv, the
/// first element is the program name.
int run(int argc, const char* const* argv, Streams io);
int run(const std::vector<std::string>& args, Streams io);

}  // namespace resofit::cli
