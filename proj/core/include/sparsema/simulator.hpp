#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "sparsema/core.hpp"
#include "sparsema/rng.hpp"

namespace sparsema {

struct IntRange {
  long long lo = 0;
  long long hi = 0;
};

/// Heterogeneity sd obtained by calibrate_het_sd to a median univariate
/// I^2 of 0.5 at the default configuration (seed 20210301, 50 replicates).
inline constexpr double kCalibratedHetSd = 0.0332;

struct SimConfig {
  int n_meta = 1000;
  IntRange studies{4, 15};
  IntRange units{50, 4000};
  IntRange variates{5, 25};
  double density = 0.24;
  double het_sd = kCalibratedHetSd;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SimTruth {
  int index = 0;
  std::uint64_t seed = 0;
  int p = 0;
  int m = 0;
  /// atanh of the outcome column of `correlation`, one per variate.
  Eigen::VectorXd mu_true;
  /// (p + 1) x (p + 1); row/column 0 is the outcome.
  Eigen::MatrixXd correlation;
  /// Additive heterogeneity draw of each study, shared by its estimates.
  Eigen::VectorXd offsets;
  std::vector<long long> units;
  double het_sd = 0.0;
  double realized_density = 0.0;
  int mask_draws = 0;
};

struct SimReplicate {
  MetaDataset data;
  SimTruth truth;
};

/// G G^T / normalized, with G a dim x (dim + 2) standard normal matrix.
Eigen::MatrixXd random_correlation_matrix(int dim, Philox& rng);

/// Variate ids are "v01".."vNN", study ids "s01".."sMM" (zero padded so
/// lexicographic order matches numeric order).
SimReplicate simulate_meta(const SimConfig& config, int index);

struct CalibrationResult {
  double het_sd = 0.0;
  double median_i2 = 0.0;
  int iterations = 0;
};

/// Median of the univariate I^2 values (variates with k >= 2) over
/// `replicates` datasets drawn from `probe` at the given het_sd.
double median_i_squared(const SimConfig& probe, double het_sd, int replicates = 50);

/// Bisection on het_sd until the probe median I^2 is within `tolerance`
/// of `target_i2`. Throws DomainError unless 0 < target < 1 and
/// std::range_error if the target cannot be bracketed.
CalibrationResult calibrate_het_sd(double target_i2, const SimConfig& probe, int replicates = 50,
                                   double tolerance = 0.05);

}  // namespace sparsema
