#pragma once

#include <string>
#include <vector>

#include "sparsema/core.hpp"

namespace sparsema {

inline constexpr double kZ975 = 1.959964;

/// REML log-likelihood of the random-effects model at tau2 (up to a constant).
double reml_objective(const std::vector<double>& y, const std::vector<double>& v, double tau2);

/**
 * Between-study variance by restricted maximum likelihood.
 *
 * Scans [0, 10 * var(y)] on a coarse grid, refines the best bracket by
 * golden-section search and polishes by bisection on the score. Requires
 * k >= 2 and v > 0.
 */
double reml_tau2(const std::vector<double>& y, const std::vector<double>& v);

/// REML objective with a separate mean per group and one shared tau2; the
/// per-group objectives add.
double reml_objective_shared(const std::vector<std::vector<double>>& y,
                             const std::vector<std::vector<double>>& v, double tau2);

/// Shared between-study variance for a meta-regression on a categorical
/// group covariate. Needs more estimates than groups.
double reml_tau2_shared(const std::vector<std::vector<double>>& y,
                        const std::vector<std::vector<double>>& v);

struct PooledEstimate {
  double estimate = 0.0;
  double se = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
};

/// Inverse-variance pooling with weights 1 / (v_i + tau2) and a 95% normal CI.
PooledEstimate pool(const std::vector<double>& y, const std::vector<double>& v, double tau2);

/// Higgins' I^2 from Cochran's Q, clamped to [0, 1]; 0 when Q = 0.
double i_squared(const std::vector<double>& y, const std::vector<double>& v);

enum class UnivariateFlag { ok, singleton, zero_width };

const char* to_string(UnivariateFlag flag);

struct UnivariateResult {
  std::string variate_id;
  int k = 0;
  PooledEstimate pooled;
  double tau2 = 0.0;
  double i2 = 0.0;
  UnivariateFlag flag = UnivariateFlag::ok;

  bool usable() const noexcept { return flag != UnivariateFlag::zero_width; }
};

/// per_variate: one REML tau2 per variate (singletons get 0).
/// shared: one REML tau2 for all variates, as in a meta-regression with
/// variate as a categorical covariate.
enum class TauConvention { per_variate, shared };

const char* to_string(TauConvention convention);

/// One random-effects meta-analysis per variate, in dataset variate order.
std::vector<UnivariateResult> analyze_univariate(
    const MetaDataset& data, TauConvention convention = TauConvention::per_variate);

inline constexpr const char* kUnivariateHeader = "variate_id,k,estimate,se,ci_low,ci_high,tau2,i2,flag";

}  // namespace sparsema
