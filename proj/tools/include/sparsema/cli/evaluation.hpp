#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sparsema/cli/artifacts.hpp"
#include "sparsema/metrics.hpp"

namespace sparsema::cli {

/// Everything evaluation needs from one fitted replicate.
struct ReplicateInputs {
  int meta_id = 0;
  std::string name;
  std::vector<std::string> variates;
  std::vector<double> mu_true;
  std::size_t n_estimates = 0;
  bool converged = false;
  double level = 0.0;
  std::vector<PosteriorRow> posterior;
  std::vector<UnivariateResult> univariate;
};

ReplicateInputs make_inputs(int meta_id, const TruthRecord& truth, std::size_t n_estimates,
                            const PosteriorSummary& posterior,
                            const std::vector<UnivariateResult>& univariate);

/// Reads truth.json, dataset.csv, posterior.csv, diagnostics.json and
/// univariate.csv from a replicate directory. Returns the problem instead
/// when a file is missing or unreadable.
struct LoadOutcome {
  std::optional<ReplicateInputs> inputs;
  std::string problem;
};
LoadOutcome load_replicate(const fs::path& dir);

struct Exclusions {
  std::size_t replicates_total = 0;
  std::vector<std::string> missing;       ///< "name: reason"
  std::vector<std::string> nonconverged;  ///< replicate names
  std::size_t replicates_analyzed = 0;
  std::size_t pairs_total = 0;            ///< variates of analyzed replicates
  std::size_t pairs_zero_width_u = 0;
  std::size_t pairs_zero_width_m = 0;
  std::size_t pairs_used = 0;
  std::size_t bias_excluded = 0;
  std::size_t length_excluded = 0;
};

struct Evaluation {
  std::vector<ComparisonRow> rows;
  Exclusions exclusions;
  double level_m = 0.0;
  Proportion coverage_m;
  Proportion coverage_u;
  MeanRatio length;
  MeanRatio bias;
  std::optional<RegressionResult> length_regression;
  std::optional<RegressionResult> bias_regression;
  std::string regression_note;
};

/// Pairs up multivariate and univariate intervals, applies the exclusion
/// rules and computes every summary metric. Missing replicates are passed
/// as names with reasons.
Evaluation evaluate(const std::vector<ReplicateInputs>& replicates,
                    const std::vector<std::string>& missing, std::uint64_t seed,
                    int resamples = kBootstrapResamples);

nlohmann::json evaluation_to_json(const Evaluation& evaluation);

inline constexpr std::string_view kMetricsHeader =
    "meta_id,variate_id,mu_true,est_m,lower_m,upper_m,est_u,lower_u,upper_u,n_estimates,"
    "n_variates,covered_m,covered_u,log_rel_abs_bias,log_rel_length";
inline constexpr std::string_view kForestHeader =
    "meta_id,variate_id,method,estimate,lower,upper,mu_true";
inline constexpr std::string_view kCurveHeader = "response,predictor,value,ratio,lower,upper";

/// One row per comparison pair; excluded log metrics are left empty.
std::string format_metrics(const std::vector<ComparisonRow>& rows);
/// Long format, two rows per pair, on the correlation scale.
std::string format_forest(const std::vector<ComparisonRow>& rows);
/// Fitted mean ratio against each predictor (the other held at its mean)
/// with pointwise 95% bootstrap bands.
std::string format_curves(const Evaluation& evaluation);

}  // namespace sparsema::cli
