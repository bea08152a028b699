#include "sparsema/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <Eigen/QR>

#include "sparsema/errors.hpp"
#include "sparsema/rng.hpp"
#include "sparsema/sampler.hpp"

namespace sparsema {

namespace {

constexpr double kZ = 1.959964;

std::optional<double> metric(const ComparisonRow& row, Response response) {
  return response == Response::bias ? log_rel_abs_bias(row) : log_rel_length(row);
}

struct Clustered {
  std::vector<double> values;
  Eigen::MatrixXd design;  // rows x 3
  std::vector<std::vector<Eigen::Index>> clusters;
  std::size_t excluded = 0;
};

Clustered collect(const std::vector<ComparisonRow>& rows, Response response) {
  Clustered out;
  std::map<int, std::vector<Eigen::Index>> by_meta;
  std::vector<const ComparisonRow*> used;
  for (const auto& row : rows) {
    auto value = metric(row, response);
    if (!value) {
      ++out.excluded;
      continue;
    }
    by_meta[row.meta_id].push_back(static_cast<Eigen::Index>(out.values.size()));
    out.values.push_back(*value);
    used.push_back(&row);
  }
  out.design.resize(static_cast<Eigen::Index>(used.size()), 3);
  for (std::size_t i = 0; i < used.size(); ++i) {
    out.design(i, 0) = 1.0;
    out.design(i, 1) = used[i]->n_estimates;
    out.design(i, 2) = used[i]->n_variates;
  }
  for (auto& [meta, idx] : by_meta) out.clusters.push_back(std::move(idx));
  return out;
}

std::vector<Eigen::Index> resample_rows(const Clustered& data, Philox& rng) {
  std::vector<Eigen::Index> rows;
  const auto k = static_cast<std::int64_t>(data.clusters.size());
  for (std::int64_t c = 0; c < k; ++c) {
    const auto& cluster = data.clusters[rng.uniform_int(0, k - 1)];
    rows.insert(rows.end(), cluster.begin(), cluster.end());
  }
  return rows;
}

Eigen::VectorXd ols(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, bool& full_rank) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  full_rank = qr.rank() == x.cols();
  return qr.solve(y);
}

Interval percentile_interval(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  return Interval{quantile_sorted(values, 0.025), quantile_sorted(values, 0.975)};
}


}  // namespace

Proportion wilson(std::size_t successes, std::size_t trials) {
  Proportion out;
  out.successes = successes;
  out.trials = trials;
  if (trials == 0) {
    out.estimate = out.low = out.high = std::nan("");
    return out;
  }
  const double n = static_cast<double>(trials);
  const double phat = static_cast<double>(successes) / n;
  const double z2 = kZ * kZ;
  const double denom = 1.0 + z2 / n;
  const double centre = (phat + z2 / (2.0 * n)) / denom;
  const double half = kZ * std::sqrt(phat * (1.0 - phat) / n + z2 / (4.0 * n * n)) / denom;
  out.estimate = phat;
  out.low = std::max(0.0, centre - half);
  out.high = std::min(1.0, centre + half);
  return out;
}

Proportion coverage(const std::vector<ComparisonRow>& rows, Method side) {
  if (rows.empty()) {
    throw DomainError("coverage: no rows");
  }
  std::size_t hits = 0;
  for (const auto& row : rows) {
    const Interval& ci = side == Method::multivariate ? row.ci_m : row.ci_u;
    hits += ci.contains(row.mu_true) ? 1 : 0;
  }
  return wilson(hits, rows.size());
}

std::optional<double> log_rel_abs_bias(const ComparisonRow& row) {
  const double err_m = std::abs(row.mu_true - row.est_m);
  const double err_u = std::abs(row.mu_true - row.est_u);
  if (!(err_m > 0.0) || !(err_u > 0.0)) {
    return std::nullopt;
  }
  return std::log(err_m) - std::log(err_u);
}

std::optional<double> log_rel_length(const ComparisonRow& row) {
  const double wm = row.ci_m.width();
  const double wu = row.ci_u.width();
  if (!(wm > 0.0) || !(wu > 0.0)) {
    return std::nullopt;
  }
  return std::log(wm) - std::log(wu);
}

RegressionResult regress_metric(const std::vector<ComparisonRow>& rows, Response response,
                                std::uint64_t seed, int resamples) {
  const Clustered data = collect(rows, response);
  if (data.clusters.size() < kMinClusters) {
    throw DomainError("regress_metric: need at least " + std::to_string(kMinClusters) +
                      " clusters, have " + std::to_string(data.clusters.size()));
  }
  const Eigen::Map<const Eigen::VectorXd> y(data.values.data(),
                                            static_cast<Eigen::Index>(data.values.size()));
  bool full_rank = false;
  const Eigen::VectorXd beta = ols(data.design, y, full_rank);
  if (!full_rank) {
    throw ConsistencyError("regress_metric: design matrix is rank deficient");
  }

  RegressionResult out;
  out.rows_used = data.values.size();
  out.rows_excluded = data.excluded;
  out.clusters = data.clusters.size();
  out.resamples = resamples;
  out.bootstrap.resize(resamples, 3);
  Philox rng(seed, 0x7265677265);
  int kept = 0;
  for (int b = 0; b < resamples; ++b) {
    const auto idx = resample_rows(data, rng);
    Eigen::MatrixXd xb(static_cast<Eigen::Index>(idx.size()), 3);
    Eigen::VectorXd yb(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) {
      xb.row(i) = data.design.row(idx[i]);
      yb(i) = y(idx[i]);
    }
    bool ok = false;
    const Eigen::VectorXd bb = ols(xb, yb, ok);
    // A resample that happens to lose all spread in a predictor carries no
    // slope information; skip it.
    if (ok) out.bootstrap.row(kept++) = bb.transpose();
  }
  out.bootstrap.conservativeResize(kept, 3);

  static const char* names[] = {"intercept", "n_estimates", "n_variates"};
  for (int c = 0; c < 3; ++c) {
    std::vector<double> draws(out.bootstrap.col(c).data(), out.bootstrap.col(c).data() + kept);
    const Interval ci = percentile_interval(std::move(draws));
    Coefficient coef;
    coef.name = names[c];
    coef.estimate = beta(c);
    coef.ci_low = ci.low;
    coef.ci_high = ci.high;
    coef.exp_estimate = std::exp(beta(c));
    coef.exp_ci_low = std::exp(ci.low);
    coef.exp_ci_high = std::exp(ci.high);
    out.coefficients.push_back(coef);
  }
  return out;
}

MeanRatio mean_ratio(const std::vector<ComparisonRow>& rows, Response response,
                     std::uint64_t seed, int resamples) {
  const Clustered data = collect(rows, response);
  MeanRatio out;
  out.rows_used = data.values.size();
  out.rows_excluded = data.excluded;
  if (data.values.empty()) {
    throw DomainError("mean_ratio: no usable rows");
  }
  double total = 0.0;
  for (double v : data.values) total += v;
  out.mean_log = total / static_cast<double>(data.values.size());
  out.ratio = std::exp(out.mean_log);

  Philox rng(seed, 0x6d65616e);
  std::vector<double> boot(resamples);
  for (int b = 0; b < resamples; ++b) {
    const auto idx = resample_rows(data, rng);
    double sum = 0.0;
    for (auto i : idx) sum += data.values[i];
    boot[b] = idx.empty() ? out.mean_log : sum / static_cast<double>(idx.size());
  }
  const Interval ci = percentile_interval(std::move(boot));
  out.ci_low = std::exp(ci.low);
  out.ci_high = std::exp(ci.high);
  return out;
}

std::vector<double> sucra(const Eigen::MatrixXi& rank_draws) {
  const Eigen::Index p = rank_draws.cols();
  if (p < 2) {
    throw DomainError("sucra: need at least 2 variates");
  }
  if (rank_draws.rows() < 1) {
    throw DomainError("sucra: no draws");
  }
  std::vector<char> seen(p);
  Eigen::VectorXd total = Eigen::VectorXd::Zero(p);
  for (Eigen::Index s = 0; s < rank_draws.rows(); ++s) {
    std::fill(seen.begin(), seen.end(), 0);
    for (Eigen::Index j = 0; j < p; ++j) {
      const int r = rank_draws(s, j);
      if (r < 1 || r > p || seen[r - 1]) {
        throw ConsistencyError("sucra: draw " + std::to_string(s) +
                               " is not a permutation of 1..p");
      }
      seen[r - 1] = 1;
      total(j) += r;
    }
  }
  std::vector<double> out(p);
  const double pd = static_cast<double>(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const double mean_rank = total(j) / static_cast<double>(rank_draws.rows());
    out[j] = (pd - mean_rank) / (pd - 1.0);
  }
  return out;
}

}  // namespace sparsema
