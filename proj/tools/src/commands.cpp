#include "sparsema/cli/commands.hpp"

#include <charconv>
#include <chrono>
#include <ctime>
#include <ostream>
#include <sstream>

#include "sparsema/cli/evaluation.hpp"
#include "sparsema/dataset_io.hpp"
#include "sparsema/errors.hpp"
#include "sparsema/projection.hpp"
#include "sparsema/rng.hpp"

#ifndef SPARSEMA_VERSION
#define SPARSEMA_VERSION "0.0.0"
#endif

namespace sparsema::cli {

namespace {

/// Numeric suffix of a replicate directory name, or -1.
long long replicate_index(const fs::path& dir) {
  const std::string name = dir.filename().string();
  const std::string_view digits = std::string_view(name).substr(kReplicatePrefix.size());
  long long value = -1;
  auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value);
  return ec == std::errc() && ptr == digits.data() + digits.size() ? value : -1;
}

void record_output(RunManifest& manifest, const fs::path& path) {
  manifest.outputs.emplace_back(path.string(), sha256_file(path));
}

void record_input(RunManifest& manifest, const fs::path& path) {
  manifest.inputs.emplace_back(path.string(), sha256_file(path));
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  write_file_atomic(path, j.dump(2) + "\n");
}

/// Fit one dataset into dir; returns true when converged.
bool fit_one(const fs::path& dataset_path, const fs::path& dir, const FitCommandOptions& options,
             const FitOptions& fit_options, RunManifest& manifest, nlohmann::json& seeds) {
  const MetaDataset data = read_dataset(dataset_path);
  record_input(manifest, dataset_path);
  const FitResult result = fit(data, fit_options);

  fs::create_directories(dir);
  const fs::path posterior = dir / kPosteriorFile;
  const fs::path covariance = dir / kCovarianceFile;
  const fs::path diagnostics = dir / kDiagnosticsFile;
  write_file_atomic(posterior, format_posterior(result.summary));
  write_file_atomic(covariance,
                    format_covariance(result.summary.variates, result.summary.lifted_covariance_mean));
  write_json(diagnostics, diagnostics_to_json(result, fit_options.sampler, data.num_estimates()));
  record_output(manifest, posterior);
  record_output(manifest, covariance);
  record_output(manifest, diagnostics);
  if (options.save_projection) {
    const fs::path projection = dir / kProjectionFile;
    std::ostringstream text;
    write_projection(text, result.projection);
    write_file_atomic(projection, text.str());
    record_output(manifest, projection);
  }

  nlohmann::json chains = nlohmann::json::array();
  for (const auto& chain : result.diagnostics.chains) {
    chains.push_back({{"seed", chain.seed}, {"stream", chain.stream}});
  }
  seeds = {{"master", fit_options.sampler.seed},
           {"projection", result.projection.seed},
           {"projection_effective", result.projection.effective_seed},
           {"chains", chains}};
  return result.summary.converged;
}

}  // namespace

const char* version() { return SPARSEMA_VERSION; }

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buffer[32];
  std::strftime(buffer, sizeof buffer, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buffer;
}

std::string manifest_file_name(const std::string& command) {
  return "manifest-" + command + ".json";
}

nlohmann::json RunManifest::to_json() const {
  nlohmann::json j;
  j["command"] = command;
  j["version"] = version();
  j["config"] = config;
  j["config_text"] = config_text;
  j["seeds"] = seeds;
  auto digests = [](const auto& list) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& [path, digest] : list) out.push_back({{"path", path}, {"sha256", digest}});
    return out;
  };
  j["inputs"] = digests(inputs);
  j["outputs"] = digests(outputs);
  j["started"] = started;
  j["finished"] = finished;
  return j;
}

void RunManifest::write(const fs::path& dir) const {
  write_json(dir / manifest_file_name(command), to_json());
}

int cmd_simulate(const SimulateOptions& options, RunManifest& manifest, std::ostream& log) {
  options.config.validate();
  fs::create_directories(options.out);
  nlohmann::json replicates = nlohmann::json::array();
  for (int i = 0; i < options.config.n_meta; ++i) {
    const SimReplicate rep = simulate_meta(options.config, i);
    const fs::path dir = options.out / replicate_dir_name(i);
    fs::create_directories(dir);
    std::ostringstream csv;
    write_dataset(csv, rep.data);
    write_file_atomic(dir / kDatasetFile, csv.str());
    write_json(dir / kTruthFile, truth_to_json(rep.truth, rep.data.variates()));
    record_output(manifest, dir / kDatasetFile);
    record_output(manifest, dir / kTruthFile);
    replicates.push_back({{"index", i}, {"stream", i}});
  }
  manifest.seeds = {{"master", options.config.seed}, {"replicates", replicates}};
  log << "simulated " << options.config.n_meta << " replicates into " << options.out.string()
      << "\n";
  return kExitOk;
}

int cmd_fit(const FitCommandOptions& options, RunManifest& manifest, std::ostream& log) {
  if (!fs::is_directory(options.input)) {
    if (options.out.empty()) {
      throw std::invalid_argument("fit: --out is required for a single dataset");
    }
    nlohmann::json seeds;
    const bool converged =
        fit_one(options.input, options.out, options, options.fit, manifest, seeds);
    manifest.seeds = seeds;
    log << (converged ? "converged" : "not converged (R-hat above threshold)") << "\n";
    return converged ? kExitOk : kExitNotConverged;
  }

  const auto replicates = list_replicates(options.input);
  if (replicates.empty()) {
    throw std::runtime_error("fit: no replicate directories under " + options.input.string());
  }
  bool any_error = false;
  bool all_converged = true;
  nlohmann::json per_replicate = nlohmann::json::array();
  for (const auto& rep : replicates) {
    const long long index = replicate_index(rep);
    FitOptions fit_options = options.fit;
    fit_options.sampler.seed = mix_seed(options.fit.sampler.seed, static_cast<std::uint64_t>(index));
    if (options.fit.projection_seed) {
      fit_options.projection_seed = mix_seed(*options.fit.projection_seed, static_cast<std::uint64_t>(index));
    }
    const fs::path dir = options.out.empty() ? rep : options.out / rep.filename();
    RunManifest local = manifest;
    local.inputs.clear();
    local.outputs.clear();
    nlohmann::json seeds;
    try {
      const bool converged = fit_one(rep / kDatasetFile, dir, options, fit_options, local, seeds);
      all_converged = all_converged && converged;
      local.seeds = seeds;
      local.finished = utc_timestamp();
      local.write(dir);
      per_replicate.push_back({{"replicate", rep.filename().string()}, {"seeds", seeds},
                               {"converged", converged}});
      manifest.inputs.insert(manifest.inputs.end(), local.inputs.begin(), local.inputs.end());
      manifest.outputs.insert(manifest.outputs.end(), local.outputs.begin(), local.outputs.end());
      log << rep.filename().string() << ": " << (converged ? "converged" : "not converged")
          << "\n";
    } catch (const std::exception& e) {
      any_error = true;
      per_replicate.push_back({{"replicate", rep.filename().string()}, {"error", e.what()}});
      log << rep.filename().string() << ": error: " << e.what() << "\n";
    }
  }
  manifest.seeds = {{"master", options.fit.sampler.seed}, {"replicates", per_replicate}};
  if (any_error) return kExitError;
  return all_converged ? kExitOk : kExitNotConverged;
}

int cmd_univariate(const UnivariateOptions& options, RunManifest& manifest, std::ostream& log) {
  auto run_one = [&](const fs::path& dataset_path, const fs::path& dir) {
    const MetaDataset data = read_dataset(dataset_path);
    record_input(manifest, dataset_path);
    const auto rows = analyze_univariate(data, options.tau);
    fs::create_directories(dir);
    write_file_atomic(dir / kUnivariateFile, format_univariate(rows));
    record_output(manifest, dir / kUnivariateFile);
    std::size_t singletons = 0;
    for (const auto& r : rows) singletons += r.flag == UnivariateFlag::singleton ? 1 : 0;
    return singletons;
  };
  if (!fs::is_directory(options.input)) {
    if (options.out.empty()) {
      throw std::invalid_argument("univariate: --out is required for a single dataset");
    }
    const std::size_t singletons = run_one(options.input, options.out);
    log << "univariate: " << singletons << " singleton variate(s)\n";
    return kExitOk;
  }
  const auto replicates = list_replicates(options.input);
  if (replicates.empty()) {
    throw std::runtime_error("univariate: no replicate directories under " + options.input.string());
  }
  for (const auto& rep : replicates) {
    run_one(rep / kDatasetFile, options.out.empty() ? rep : options.out / rep.filename());
  }
  log << "univariate: analyzed " << replicates.size() << " replicates\n";
  return kExitOk;
}

int cmd_evaluate(const EvaluateOptions& options, RunManifest& manifest, std::ostream& log) {
  const auto dirs = list_replicates(options.input);
  if (dirs.empty()) {
    throw std::runtime_error("evaluate: no replicate directories under " + options.input.string());
  }
  std::vector<ReplicateInputs> inputs;
  std::vector<std::string> missing;
  for (const auto& dir : dirs) {
    LoadOutcome loaded = load_replicate(dir);
    if (loaded.inputs) {
      inputs.push_back(std::move(*loaded.inputs));
      for (auto file : {kTruthFile, kDatasetFile, kPosteriorFile, kDiagnosticsFile, kUnivariateFile}) {
        record_input(manifest, dir / file);
      }
    } else {
      missing.push_back(dir.filename().string() + ": " + loaded.problem);
      log << "skipping " << dir.filename().string() << ": " << loaded.problem << "\n";
    }
  }
  const Evaluation evaluation = evaluate(inputs, missing, options.seed, options.resamples);

  const fs::path out = options.out.empty() ? options.input : options.out;
  fs::create_directories(out);
  const fs::path summary = out / "summary.json";
  const fs::path metrics = out / "metrics.csv";
  const fs::path forest = out / "forest.csv";
  const fs::path curves = out / "relative_curves.csv";
  write_json(summary, evaluation_to_json(evaluation));
  write_file_atomic(metrics, format_metrics(evaluation.rows));
  write_file_atomic(forest, format_forest(evaluation.rows));
  write_file_atomic(curves, format_curves(evaluation));
  for (const auto& path : {summary, metrics, forest, curves}) record_output(manifest, path);
  manifest.seeds = {{"bootstrap", options.seed}};

  log << "pairs used " << evaluation.exclusions.pairs_used << ", coverage m "
      << evaluation.coverage_m.estimate << ", u " << evaluation.coverage_u.estimate
      << ", relative length " << evaluation.length.ratio << "\n";
  return kExitOk;
}

}  // namespace sparsema::cli
