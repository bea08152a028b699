#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sparsema/cli/artifacts.hpp"
#include "sparsema/sampler.hpp"
#include "sparsema/simulator.hpp"
#include "sparsema/univariate.hpp"

namespace sparsema::cli {

/// Process exit codes.
enum ExitCode : int { kExitOk = 0, kExitError = 1, kExitNotConverged = 2 };

const char* version();

/// Provenance written next to every command's outputs.
struct RunManifest {
  std::string command;
  nlohmann::json config;
  /// The effective options in --config syntax; feeding it back reproduces the run.
  std::string config_text;
  nlohmann::json seeds;
  std::vector<std::pair<std::string, std::string>> inputs;   ///< path, sha256
  std::vector<std::pair<std::string, std::string>> outputs;  ///< path, sha256
  std::string started;
  std::string finished;

  nlohmann::json to_json() const;
  /// Writes manifest-<command>.json into dir.
  void write(const fs::path& dir) const;
};

std::string manifest_file_name(const std::string& command);
std::string utc_timestamp();

struct SimulateOptions {
  SimConfig config;
  fs::path out;
};

struct FitCommandOptions {
  fs::path input;  ///< dataset CSV, or a directory of replicate directories
  fs::path out;    ///< defaults to the replicate directories in batch mode
  FitOptions fit;
  bool save_projection = false;
};

struct UnivariateOptions {
  fs::path input;
  fs::path out;
  TauConvention tau = TauConvention::per_variate;
};

struct EvaluateOptions {
  fs::path input;
  fs::path out;
  std::uint64_t seed = 0;
  int resamples = 2000;
};

int cmd_simulate(const SimulateOptions& options, RunManifest& manifest, std::ostream& log);
int cmd_fit(const FitCommandOptions& options, RunManifest& manifest, std::ostream& log);
int cmd_univariate(const UnivariateOptions& options, RunManifest& manifest, std::ostream& log);
int cmd_evaluate(const EvaluateOptions& options, RunManifest& manifest, std::ostream& log);

/// Full command-line entry point; argv[0] is the program name.
int run_cli(int argc, const char* const argv[], std::ostream& out, std::ostream& err);
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace sparsema::cli
