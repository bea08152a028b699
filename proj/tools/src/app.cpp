#include <algorithm>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "sparsema/cli/commands.hpp"
#include "sparsema/errors.hpp"

namespace sparsema::cli {

namespace {

IntRange to_range(const std::vector<long long>& v) { return IntRange{v.at(0), v.at(1)}; }

/// The effective options of one command in --config syntax.
std::string config_text(const std::string& command, const nlohmann::json& config) {
  std::string out = "[" + command + "]\n";
  for (const auto& [key, value] : config.items()) {
    if (value.is_null()) continue;
    std::string name = key;
    std::replace(name.begin(), name.end(), '_', '-');
    if (value.is_string() && value.get<std::string>().empty()) continue;
    out += name + "=" + value.dump() + "\n";
  }
  return out;
}

}  // namespace

int run_cli(int argc, const char* const argv[], std::ostream& out, std::ostream& err) {
  CLI::App app{"Sparse multivariate random-effects meta-analysis", "sparsema"};
  app.set_version_flag("--version", version());
  app.set_config("--config", "", "Read options from a config file; command-line flags win");
  app.require_subcommand(1);

  // simulate
  SimulateOptions sim;
  std::vector<long long> studies{sim.config.studies.lo, sim.config.studies.hi};
  std::vector<long long> units{sim.config.units.lo, sim.config.units.hi};
  std::vector<long long> variates{sim.config.variates.lo, sim.config.variates.hi};
  std::string het_sd = "calibrated";
  auto* simulate = app.add_subcommand("simulate", "Generate replicate datasets with known truth");
  simulate->add_option("--n-meta", sim.config.n_meta, "Number of replicates")->capture_default_str();
  simulate->add_option("--studies", studies, "Studies per replicate (lo hi)")->expected(2)->capture_default_str();
  simulate->add_option("--units", units, "Units per study (lo hi)")->expected(2)->capture_default_str();
  simulate->add_option("--variates", variates, "Variates per replicate (lo hi)")->expected(2)->capture_default_str();
  simulate->add_option("--density", sim.config.density, "Probability a cell is observed")->capture_default_str();
  simulate->add_option("--het-sd", het_sd, "Heterogeneity sd, or 'calibrated'")->capture_default_str();
  simulate->add_option("--seed", sim.config.seed, "Master seed")->capture_default_str();
  simulate->add_option("--out", sim.out, "Output directory")->required();

  // fit
  FitCommandOptions fit;
  std::optional<int> q;
  std::optional<std::uint64_t> projection_seed;
  auto* fit_cmd = app.add_subcommand("fit", "Fit the low-dimensional model by NUTS");
  fit_cmd->add_option("input", fit.input, "Dataset CSV or directory of replicates")->required()->check(CLI::ExistingPath);
  fit_cmd->add_option("--out", fit.out, "Output directory (batch default: each replicate directory)");
  fit_cmd->add_option("--seed", fit.fit.sampler.seed, "Master seed")->capture_default_str();
  fit_cmd->add_option("--q", q, "Projection dimension (default: largest feasible)");
  fit_cmd->add_option("--q-max", fit.fit.q_max, "Upper bound for the automatic q")->capture_default_str();
  fit_cmd->add_option("--level", fit.fit.level, "Credible level")->capture_default_str();
  fit_cmd->add_option("--chains", fit.fit.sampler.chains)->capture_default_str();
  fit_cmd->add_option("--warmup", fit.fit.sampler.warmup)->capture_default_str();
  fit_cmd->add_option("--samples", fit.fit.sampler.samples)->capture_default_str();
  fit_cmd->add_option("--target-accept", fit.fit.sampler.target_accept)->capture_default_str();
  fit_cmd->add_option("--max-depth", fit.fit.sampler.max_tree_depth)->capture_default_str();
  fit_cmd->add_option("--rhat-threshold", fit.fit.sampler.rhat_threshold)->capture_default_str();
  fit_cmd->add_option("--threads", fit.fit.sampler.threads, "Threads for chains")->capture_default_str();
  fit_cmd->add_option("--projection-seed", projection_seed, "Projection seed (default: derived from --seed)");
  fit_cmd->add_flag("--save-projection", fit.save_projection, "Also write projection.csv");

  // univariate
  UnivariateOptions uni;
  std::uint64_t uni_seed = 0;
  auto* uni_cmd = app.add_subcommand("univariate", "Per-variate REML random-effects meta-analysis");
  uni_cmd->add_option("input", uni.input, "Dataset CSV or directory of replicates")->required()->check(CLI::ExistingPath);
  uni_cmd->add_option("--out", uni.out, "Output directory (batch default: each replicate directory)");
  uni_cmd->add_option("--tau", uni.tau, "tau2 convention: per_variate or shared")
      ->transform(CLI::CheckedTransformer(
          std::map<std::string, TauConvention>{{"per_variate", TauConvention::per_variate},
                                               {"shared", TauConvention::shared}}))
      ->capture_default_str();
  uni_cmd->add_option("--seed", uni_seed, "Accepted for uniformity; the analysis is deterministic");

  // evaluate
  EvaluateOptions eval;
  auto* eval_cmd = app.add_subcommand("evaluate", "Compare fitted replicates against the truth");
  eval_cmd->add_option("input", eval.input, "Directory of fitted replicates")->required()->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--out", eval.out, "Output directory (default: input)");
  eval_cmd->add_option("--seed", eval.seed, "Bootstrap seed")->capture_default_str();
  eval_cmd->add_option("--resamples", eval.resamples, "Bootstrap resamples")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitError;
  }

  RunManifest manifest;
  manifest.started = utc_timestamp();
  try {
    int code = kExitOk;
    fs::path manifest_dir;
    if (simulate->parsed()) {
      manifest.command = "simulate";
      sim.config.studies = to_range(studies);
      sim.config.units = to_range(units);
      sim.config.variates = to_range(variates);
      if (het_sd != "calibrated") {
        try {
          std::size_t used = 0;
          sim.config.het_sd = std::stod(het_sd, &used);
          if (used != het_sd.size()) throw std::invalid_argument(het_sd);
        } catch (const std::exception&) {
          throw DomainError("het_sd: expected a number or 'calibrated', got '" + het_sd + "'");
        }
      }
      manifest.config = {{"n_meta", sim.config.n_meta},     {"studies", studies},
                         {"units", units},                  {"variates", variates},
                         {"density", sim.config.density},   {"het_sd", sim.config.het_sd},
                         {"seed", sim.config.seed},         {"out", sim.out.string()}};
      manifest.config_text = config_text(manifest.command, manifest.config);
      code = cmd_simulate(sim, manifest, err);
      manifest_dir = sim.out;
    } else if (fit_cmd->parsed()) {
      manifest.command = "fit";
      fit.fit.q = q;
      fit.fit.projection_seed = projection_seed;
      const auto& s = fit.fit.sampler;
      manifest.config = {{"input", fit.input.string()},
                         {"out", fit.out.string()},
                         {"seed", s.seed},
                         {"q", q ? nlohmann::json(*q) : nlohmann::json()},
                         {"q_max", fit.fit.q_max},
                         {"level", fit.fit.level},
                         {"chains", s.chains},
                         {"warmup", s.warmup},
                         {"samples", s.samples},
                         {"target_accept", s.target_accept},
                         {"max_depth", s.max_tree_depth},
                         {"rhat_threshold", s.rhat_threshold},
                         {"threads", s.threads},
                         {"projection_seed", projection_seed ? nlohmann::json(*projection_seed) : nlohmann::json()},
                         {"save_projection", fit.save_projection}};
      manifest.config_text = config_text(manifest.command, manifest.config);
      code = cmd_fit(fit, manifest, err);
      manifest_dir = fit.out.empty() ? fit.input : fit.out;
    } else if (uni_cmd->parsed()) {
      manifest.command = "univariate";
      manifest.config = {{"input", uni.input.string()}, {"out", uni.out.string()}, {"tau", to_string(uni.tau)}};
      manifest.config_text = config_text(manifest.command, manifest.config);
      code = cmd_univariate(uni, manifest, err);
      manifest_dir = uni.out.empty() ? uni.input : uni.out;
    } else {
      manifest.command = "evaluate";
      manifest.config = {{"input", eval.input.string()}, {"out", eval.out.string()},
                         {"seed", eval.seed}, {"resamples", eval.resamples}};
      manifest.config_text = config_text(manifest.command, manifest.config);
      code = cmd_evaluate(eval, manifest, err);
      manifest_dir = eval.out.empty() ? eval.input : eval.out;
    }
    if (!fs::is_directory(manifest_dir)) manifest_dir = manifest_dir.parent_path();
    manifest.finished = utc_timestamp();
    manifest.write(manifest_dir.empty() ? fs::path(".") : manifest_dir);
    return code;
  } catch (const InfeasibleError& e) {
    err << "error: " << e.what() << "\n";
    return kExitError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitError;
  }
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"sparsema"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace sparsema::cli
