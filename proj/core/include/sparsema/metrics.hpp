#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace sparsema {

struct Interval {
  double low = 0.0;
  double high = 0.0;

  double width() const noexcept { return high - low; }
  bool contains(double x) const noexcept { return low <= x && x <= high; }
};

/// One multivariate/univariate pair for a variate of a replicate.
struct ComparisonRow {
  int meta_id = 0;
  std::string variate_id;
  double mu_true = 0.0;
  double est_m = 0.0;
  double est_u = 0.0;
  Interval ci_m;
  Interval ci_u;
  int n_estimates = 0;
  int n_variates = 0;
};

enum class Method { multivariate, univariate };

struct Proportion {
  double estimate = 0.0;
  double low = 0.0;
  double high = 0.0;
  std::size_t successes = 0;
  std::size_t trials = 0;
};

/// Wilson score interval at 95%.
Proportion wilson(std::size_t successes, std::size_t trials);

Proportion coverage(const std::vector<ComparisonRow>& rows, Method side);

/// ln|mu - est_m| - ln|mu - est_u|; nullopt when either error is exactly 0.
std::optional<double> log_rel_abs_bias(const ComparisonRow& row);

/// ln(width_m) - ln(width_u); nullopt when either width is not positive.
std::optional<double> log_rel_length(const ComparisonRow& row);

enum class Response { bias, length };

struct Coefficient {
  std::string name;
  double estimate = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double exp_estimate = 0.0;
  double exp_ci_low = 0.0;
  double exp_ci_high = 0.0;
};

struct RegressionResult {
  std::vector<Coefficient> coefficients;  ///< intercept, n_estimates, n_variates
  std::size_t rows_used = 0;
  std::size_t rows_excluded = 0;
  std::size_t clusters = 0;
  int resamples = 0;
  /// Bootstrap coefficient draws (resamples x 3), kept for prediction bands.
  Eigen::MatrixXd bootstrap;
};

inline constexpr int kBootstrapResamples = 2000;
inline constexpr std::size_t kMinClusters = 30;

/// OLS of the log metric on [1, n_estimates, n_variates] with a 95%
/// percentile CI from resampling whole replicates (meta_id clusters).
RegressionResult regress_metric(const std::vector<ComparisonRow>& rows, Response response,
                                std::uint64_t seed, int resamples = kBootstrapResamples);

struct MeanRatio {
  double mean_log = 0.0;
  /// exp(mean log metric), the geometric-mean ratio.
  double ratio = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::size_t rows_used = 0;
  std::size_t rows_excluded = 0;
};

/// exp of the mean log metric with a cluster-bootstrap 95% CI.
MeanRatio mean_ratio(const std::vector<ComparisonRow>& rows, Response response,
                     std::uint64_t seed, int resamples = kBootstrapResamples);

/// SUCRA_j = (p - mean rank_j) / (p - 1). Every row must be a permutation
/// of 1..p, p >= 2.
std::vector<double> sucra(const Eigen::MatrixXi& rank_draws);

}  // namespace sparsema
