#include "sparsema/univariate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sparsema/errors.hpp"

namespace sparsema {

namespace {

void check_inputs(const std::vector<double>& y, const std::vector<double>& v, std::size_t min_k,
                  const char* who) {
  if (y.size() != v.size()) {
    throw ConsistencyError(std::string(who) + ": y and v differ in length");
  }
  if (y.size() < min_k) {
    throw DomainError(std::string(who) + ": need at least " + std::to_string(min_k) +
                      " studies");
  }
  for (double vi : v) {
    if (!(vi > 0.0) || !std::isfinite(vi)) {
      throw DomainError(std::string(who) + ": variances must be positive and finite");
    }
  }
}

/// Derivative of the REML objective with respect to tau2.
double reml_score(const std::vector<double>& y, const std::vector<double>& v, double tau2) {
  double sw = 0.0;
  double swy = 0.0;
  double sw2 = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double w = 1.0 / (v[i] + tau2);
    sw += w;
    swy += w * y[i];
    sw2 += w * w;
  }
  const double mean = swy / sw;
  double score = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double w = 1.0 / (v[i] + tau2);
    score += -0.5 * w + 0.5 * w * w * (y[i] - mean) * (y[i] - mean);
  }
  return score + 0.5 * sw2 / sw;
}

}  // namespace

double reml_objective(const std::vector<double>& y, const std::vector<double>& v, double tau2) {
  double sw = 0.0;
  double swy = 0.0;
  double log_terms = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double w = 1.0 / (v[i] + tau2);
    sw += w;
    swy += w * y[i];
    log_terms += std::log(v[i] + tau2);
  }
  const double mean = swy / sw;
  double quad = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    quad += (y[i] - mean) * (y[i] - mean) / (v[i] + tau2);
  }
  return -0.5 * log_terms - 0.5 * std::log(sw) - 0.5 * quad;
}

namespace {

/// Grid scan on [0, upper], golden-section refinement of the best bracket,
/// then bisection polish on the score.
template <class Objective, class Score>
double maximize_reml(Objective objective, Score score, double upper) {
  if (!(upper > 0.0)) {
    return 0.0;
  }
  constexpr int kGrid = 64;
  int best = 0;
  double best_value = objective(0.0);
  for (int i = 1; i <= kGrid; ++i) {
    const double value = objective(upper * i / kGrid);
    if (value > best_value) {
      best_value = value;
      best = i;
    }
  }
  double lo = upper * std::max(best - 1, 0) / kGrid;
  double hi = upper * std::min(best + 1, kGrid) / kGrid;

  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  const double tol = 1e-10 * std::max(hi, 1e-300);
  double a = hi - inv_phi * (hi - lo);
  double b = lo + inv_phi * (hi - lo);
  double fa = objective(a);
  double fb = objective(b);
  while (hi - lo > tol) {
    if (fa < fb) {
      lo = a;
      a = b;
      fa = fb;
      b = lo + inv_phi * (hi - lo);
      fb = objective(b);
    } else {
      hi = b;
      b = a;
      fb = fa;
      a = hi - inv_phi * (hi - lo);
      fa = objective(a);
    }
  }
  double estimate = 0.5 * (lo + hi);

  // Polish on the score when the maximum is interior and bracketed by a
  // sign change; a boundary maximum at 0 is kept as is.
  const double step = upper / kGrid;
  double s_lo = std::max(0.0, estimate - step);
  double s_hi = std::min(upper, estimate + step);
  if (score(s_lo) > 0.0 && score(s_hi) < 0.0) {
    for (int iter = 0; iter < 200 && s_hi - s_lo > 1e-14 * std::max(1.0, s_hi); ++iter) {
      const double mid = 0.5 * (s_lo + s_hi);
      if (score(mid) > 0.0) {
        s_lo = mid;
      } else {
        s_hi = mid;
      }
    }
    estimate = 0.5 * (s_lo + s_hi);
  }
  if (objective(0.0) >= objective(estimate)) {
    return 0.0;
  }
  return estimate;
}

}  // namespace

double reml_tau2(const std::vector<double>& y, const std::vector<double>& v) {
  check_inputs(y, v, 2, "reml_tau2");
  const double k = static_cast<double>(y.size());
  const double ybar = std::accumulate(y.begin(), y.end(), 0.0) / k;
  double var_y = 0.0;
  for (double yi : y) var_y += (yi - ybar) * (yi - ybar);
  var_y /= k - 1.0;
  return maximize_reml([&](double t) { return reml_objective(y, v, t); },
                       [&](double t) { return reml_score(y, v, t); }, 10.0 * var_y);
}

double reml_objective_shared(const std::vector<std::vector<double>>& y,
                             const std::vector<std::vector<double>>& v, double tau2) {
  double total = 0.0;
  for (std::size_t g = 0; g < y.size(); ++g) {
    total += reml_objective(y[g], v[g], tau2);
  }
  return total;
}

double reml_tau2_shared(const std::vector<std::vector<double>>& y,
                        const std::vector<std::vector<double>>& v) {
  if (y.size() != v.size()) {
    throw ConsistencyError("reml_tau2_shared: y and v differ in group count");
  }
  std::size_t n = 0;
  double ss = 0.0;
  for (std::size_t g = 0; g < y.size(); ++g) {
    check_inputs(y[g], v[g], 1, "reml_tau2_shared");
    n += y[g].size();
    const double mean =
        std::accumulate(y[g].begin(), y[g].end(), 0.0) / static_cast<double>(y[g].size());
    for (double yi : y[g]) ss += (yi - mean) * (yi - mean);
  }
  if (n <= y.size()) {
    throw DomainError("reml_tau2_shared: need more estimates than groups");
  }
  const double var_within = ss / static_cast<double>(n - y.size());
  return maximize_reml(
      [&](double t) { return reml_objective_shared(y, v, t); },
      [&](double t) {
        double total = 0.0;
        for (std::size_t g = 0; g < y.size(); ++g) total += reml_score(y[g], v[g], t);
        return total;
      },
      10.0 * var_within);
}

PooledEstimate pool(const std::vector<double>& y, const std::vector<double>& v, double tau2) {
  check_inputs(y, v, 1, "pool");
  if (!(tau2 >= 0.0)) {
    throw DomainError("pool: tau2 must be non-negative");
  }
  double sw = 0.0;
  double swy = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double w = 1.0 / (v[i] + tau2);
    sw += w;
    swy += w * y[i];
  }
  PooledEstimate out;
  out.estimate = swy / sw;
  out.se = 1.0 / std::sqrt(sw);
  out.ci_low = out.estimate - kZ975 * out.se;
  out.ci_high = out.estimate + kZ975 * out.se;
  return out;
}

double i_squared(const std::vector<double>& y, const std::vector<double>& v) {
  check_inputs(y, v, 2, "i_squared");
  double sw = 0.0;
  double swy = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    sw += 1.0 / v[i];
    swy += y[i] / v[i];
  }
  const double mean = swy / sw;
  double q = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    q += (y[i] - mean) * (y[i] - mean) / v[i];
  }
  const double df = static_cast<double>(y.size()) - 1.0;
  if (!(q > 0.0)) {
    return 0.0;
  }
  return std::clamp((q - df) / q, 0.0, 1.0);
}

const char* to_string(UnivariateFlag flag) {
  switch (flag) {
    case UnivariateFlag::ok:
      return "ok";
    case UnivariateFlag::singleton:
      return "singleton";
    case UnivariateFlag::zero_width:
      return "zero_width";
  }
  return "unknown";
}

const char* to_string(TauConvention convention) {
  return convention == TauConvention::shared ? "shared" : "per_variate";
}

std::vector<UnivariateResult> analyze_univariate(const MetaDataset& data,
                                                 TauConvention convention) {
  const std::size_t p = data.num_variates();
  std::vector<std::vector<double>> ys(p);
  std::vector<std::vector<double>> vs(p);
  for (std::size_t i = 0; i < data.num_studies(); ++i) {
    const auto& study = data.studies()[i];
    const auto& cols = data.columns(i);
    for (std::size_t j = 0; j < study.estimates.size(); ++j) {
      ys[cols[j]].push_back(study.estimates[j].y);
      vs[cols[j]].push_back(study.estimates[j].se * study.estimates[j].se);
    }
  }
  const double shared_tau2 = convention == TauConvention::shared ? reml_tau2_shared(ys, vs) : 0.0;
  std::vector<UnivariateResult> out(p);
  for (std::size_t j = 0; j < p; ++j) {
    auto& row = out[j];
    row.variate_id = data.variates()[j];
    row.k = static_cast<int>(ys[j].size());
    if (row.k >= 2) {
      row.tau2 = convention == TauConvention::shared ? shared_tau2 : reml_tau2(ys[j], vs[j]);
      row.i2 = i_squared(ys[j], vs[j]);
    } else {
      row.tau2 = shared_tau2;
      row.flag = UnivariateFlag::singleton;
    }
    row.pooled = pool(ys[j], vs[j], row.tau2);
    if (!(row.pooled.ci_high - row.pooled.ci_low > 0.0) || !std::isfinite(row.pooled.se)) {
      row.flag = UnivariateFlag::zero_width;
    }
  }
  return out;
}

}  // namespace sparsema
