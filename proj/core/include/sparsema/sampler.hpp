#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "sparsema/core.hpp"
#include "sparsema/nuts.hpp"
#include "sparsema/projection.hpp"

namespace sparsema {

struct SamplerConfig {
  int chains = 4;
  int warmup = 1000;
  int samples = 1000;
  double target_accept = 0.8;
  int max_tree_depth = 10;
  std::uint64_t seed = 0;
  double rhat_threshold = 1.01;
  /// Worker threads for chains; results do not depend on it.
  int threads = 1;

  void validate() const;
};

struct ChainResult {
  /// samples x dim, post-warmup only.
  Eigen::MatrixXd draws;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
  double step_size = 0.0;
  int divergences = 0;
  int max_depth_hits = 0;
  double mean_accept_stat = 0.0;
  /// Count of post-warmup transitions at each tree depth 0..max_tree_depth.
  std::vector<int> depth_histogram;
};

/// Chain c uses Philox(config.seed, c + 1); stream 0 is left for callers.
std::vector<ChainResult> nuts_sample(const LogDensityFn& density, int dim,
                                     const SamplerConfig& config);

/// One draw matrix (draws x chains) per parameter; returns split-R-hat
/// (between/within ratio over half-chains). Zero within-chain variance
/// gives +infinity.
double split_rhat(const Eigen::MatrixXd& draws_by_chain);
std::vector<double> split_rhat(const std::vector<ChainResult>& chains);

struct MarginalSummary {
  double mean = 0.0;
  double sd = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

/// Linear interpolation between order statistics at position (n - 1) * prob.
double quantile_sorted(const std::vector<double>& sorted, double prob);

/// Column-wise mean, sd and equal-tailed interval at `level`, after
/// applying `transform` to every draw.
std::vector<MarginalSummary> summarize(const Eigen::MatrixXd& draws, double level,
                                       const std::function<double(double)>& transform = {});

/// Stack chains row-wise.
Eigen::MatrixXd pool_draws(const std::vector<ChainResult>& chains);

struct PosteriorSummary {
  std::vector<std::string> variates;
  double level = 0.95;
  std::vector<MarginalSummary> z;            ///< Fisher-z scale
  std::vector<MarginalSummary> correlation;  ///< after tanh
  std::vector<double> rhat;                  ///< per mu coordinate
  /// Draws x p; rank 1 = largest |correlation| in that draw.
  Eigen::MatrixXi ranks;
  std::vector<double> sucra;
  /// Draws of Sigma (q x q).
  std::vector<Eigen::MatrixXd> sigma_draws;
  /// Element-wise posterior mean of R^T Sigma R.
  Eigen::MatrixXd lifted_covariance_mean;
  bool converged = false;
};

struct SamplerDiagnostics {
  std::vector<ChainResult> chains;  ///< draws cleared after summarizing
  std::vector<double> rhat_all;     ///< every unconstrained coordinate
  double max_rhat_mu = 0.0;
  int total_divergences = 0;
};

struct FitOptions {
  std::optional<int> q;
  int q_max = kDefaultQMax;
  double level = 0.95;
  SamplerConfig sampler;
  /// Defaults to a value derived from sampler.seed.
  std::optional<std::uint64_t> projection_seed;
};

struct FitResult {
  int q = 0;
  ProjectionMatrix projection;
  PosteriorSummary summary;
  SamplerDiagnostics diagnostics;
};

std::uint64_t default_projection_seed(std::uint64_t master_seed);

/// Per-draw ranks by descending |tanh(mu_j)|.
Eigen::MatrixXi rank_by_magnitude(const Eigen::MatrixXd& mu_draws);

/**
 * Fit the low-dimensional model. q defaults to select_q(n, p, q_max); an
 * explicit q must satisfy the same parameter budget. A fit whose R-hat on
 * any mu coordinate is not below the threshold is returned with
 * `converged = false` rather than raised.
 */
FitResult fit(const MetaDataset& data, const FitOptions& options);

}  // namespace sparsema
