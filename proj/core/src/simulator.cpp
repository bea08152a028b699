#include "sparsema/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Cholesky>

#include "sparsema/errors.hpp"
#include "sparsema/univariate.hpp"

namespace sparsema {

namespace {

std::string padded_id(char prefix, int value, int width) {
  std::string digits_text = std::to_string(value);
  if (static_cast<int>(digits_text.size()) < width) {
    digits_text.insert(0, width - digits_text.size(), '0');
  }
  return prefix + digits_text;
}

int digits(long long n) { return n < 10 ? 1 : 1 + digits(n / 10); }

/// Sample correlation between column 0 and each other column of `n`
/// draws from N(0, C), with C = chol * chol^T.
Eigen::VectorXd sample_outcome_correlations(const Eigen::MatrixXd& chol, long long n, Philox& rng) {
  const Eigen::Index dim = chol.rows();
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(dim);
  Eigen::MatrixXd cross = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::VectorXd z(dim);
  Eigen::VectorXd x(dim);
  // Accumulate in blocks to keep rank-1 updates cheap.
  constexpr Eigen::Index kBlock = 256;
  Eigen::MatrixXd block(kBlock, dim);
  long long done = 0;
  while (done < n) {
    const Eigen::Index rows = static_cast<Eigen::Index>(std::min<long long>(kBlock, n - done));
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index k = 0; k < dim; ++k) z(k) = rng.normal();
      x.noalias() = chol.triangularView<Eigen::Lower>() * z;
      block.row(r) = x.transpose();
    }
    const auto used = block.topRows(rows);
    sum += used.colwise().sum().transpose();
    cross.noalias() += used.transpose() * used;
    done += rows;
  }
  const double nd = static_cast<double>(n);
  const Eigen::VectorXd mean = sum / nd;
  Eigen::VectorXd out(dim - 1);
  const double var0 = cross(0, 0) - nd * mean(0) * mean(0);
  for (Eigen::Index j = 1; j < dim; ++j) {
    const double varj = cross(j, j) - nd * mean(j) * mean(j);
    const double cov = cross(0, j) - nd * mean(0) * mean(j);
    out(j - 1) = cov / std::sqrt(var0 * varj);
  }
  return out;
}

}  // namespace

void SimConfig::validate() const {
  auto check_range = [](const IntRange& r, long long min_lo, const char* name) {
    if (r.lo > r.hi) {
      throw DomainError(std::string("simulation: ") + name + " range is empty");
    }
    if (r.lo < min_lo) {
      throw DomainError(std::string("simulation: ") + name + " must be at least " +
                        std::to_string(min_lo));
    }
  };
  if (n_meta < 1) throw DomainError("simulation: n_meta must be at least 1");
  check_range(studies, 1, "studies");
  check_range(units, 4, "units");
  check_range(variates, 2, "variates");
  if (!(density > 0.0 && density <= 1.0)) {
    throw DomainError("simulation: density must lie in (0, 1]");
  }
  if (!(het_sd >= 0.0) || !std::isfinite(het_sd)) {
    throw DomainError("simulation: het_sd must be non-negative and finite");
  }
}

Eigen::MatrixXd random_correlation_matrix(int dim, Philox& rng) {
  if (dim < 2) {
    throw DomainError("random_correlation_matrix: dim must be at least 2");
  }
  Eigen::MatrixXd g(dim, dim + 2);
  for (int i = 0; i < dim; ++i) {
    for (int j = 0; j < dim + 2; ++j) {
      g(i, j) = rng.normal();
    }
  }
  const Eigen::MatrixXd gram = g * g.transpose();
  const Eigen::VectorXd inv_sd = gram.diagonal().cwiseSqrt().cwiseInverse();
  Eigen::MatrixXd corr = inv_sd.asDiagonal() * gram * inv_sd.asDiagonal();
  corr = (0.5 * (corr + corr.transpose())).eval();
  corr.diagonal().setOnes();
  return corr;
}

SimReplicate simulate_meta(const SimConfig& config, int index) {
  config.validate();
  Philox rng(config.seed, static_cast<std::uint64_t>(index));

  SimTruth truth;
  truth.index = index;
  truth.seed = config.seed;
  truth.het_sd = config.het_sd;
  truth.p = static_cast<int>(rng.uniform_int(config.variates.lo, config.variates.hi));
  truth.m = static_cast<int>(rng.uniform_int(config.studies.lo, config.studies.hi));
  const int p = truth.p;
  const int m = truth.m;

  truth.correlation = random_correlation_matrix(p + 1, rng);
  truth.mu_true.resize(p);
  for (int j = 0; j < p; ++j) {
    truth.mu_true(j) = std::atanh(truth.correlation(0, j + 1));
  }
  Eigen::LLT<Eigen::MatrixXd> llt(truth.correlation);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("simulated correlation matrix is not positive definite");
  }
  const Eigen::MatrixXd chol = llt.matrixL();

  Eigen::MatrixXd estimates(m, p);
  Eigen::MatrixXd ses(m, p);
  truth.offsets.resize(m);
  truth.units.resize(m);
  for (int i = 0; i < m; ++i) {
    const long long n = rng.uniform_int(config.units.lo, config.units.hi);
    truth.units[i] = n;
    const Eigen::VectorXd r = sample_outcome_correlations(chol, n, rng);
    const double se = fisher_z_se(n);
    truth.offsets(i) = config.het_sd * rng.normal();
    for (int j = 0; j < p; ++j) {
      // Clamp guards atanh against |r| == 1 from tiny samples.
      const double rc = std::clamp(r(j), -1.0 + 1e-15, 1.0 - 1e-15);
      estimates(i, j) = std::atanh(rc) + truth.offsets(i);
      ses(i, j) = se;
    }
  }

  // Missing completely at random, redrawn until every study and every
  // variate keeps an estimate and at least one projection dimension fits.
  std::vector<std::vector<char>> keep(m, std::vector<char>(p));
  long long n_kept = 0;
  for (;;) {
    ++truth.mask_draws;
    n_kept = 0;
    std::vector<int> per_variate(p, 0);
    bool studies_ok = true;
    for (int i = 0; i < m; ++i) {
      int per_study = 0;
      for (int j = 0; j < p; ++j) {
        keep[i][j] = rng.bernoulli(config.density) ? 1 : 0;
        per_study += keep[i][j];
        per_variate[j] += keep[i][j];
      }
      studies_ok = studies_ok && per_study > 0;
      n_kept += per_study;
    }
    const bool variates_ok =
        std::all_of(per_variate.begin(), per_variate.end(), [](int c) { return c > 0; });
    if (studies_ok && variates_ok && n_kept >= p + 1) break;
  }
  truth.realized_density = static_cast<double>(n_kept) / (static_cast<double>(m) * p);

  const int study_width = std::max(2, digits(m));
  const int variate_width = std::max(2, digits(p));
  std::vector<Study> studies;
  studies.reserve(m);
  for (int i = 0; i < m; ++i) {
    Study study{padded_id('s', i + 1, study_width), {}};
    for (int j = 0; j < p; ++j) {
      if (keep[i][j]) {
        study.estimates.push_back(
            Estimate{padded_id('v', j + 1, variate_width), estimates(i, j), ses(i, j)});
      }
    }
    studies.push_back(std::move(study));
  }
  return SimReplicate{MetaDataset(std::move(studies)), std::move(truth)};
}

double median_i_squared(const SimConfig& probe, double het_sd, int replicates) {
  SimConfig config = probe;
  config.het_sd = het_sd;
  std::vector<double> values;
  for (int r = 0; r < replicates; ++r) {
    const SimReplicate rep = simulate_meta(config, r);
    for (const auto& row : analyze_univariate(rep.data)) {
      if (row.k >= 2) values.push_back(row.i2);
    }
  }
  if (values.empty()) {
    throw std::range_error("median_i_squared: no variate reported by two or more studies");
  }
  const auto mid = values.begin() + static_cast<std::ptrdiff_t>(values.size() / 2);
  std::nth_element(values.begin(), mid, values.end());
  if (values.size() % 2 == 1) return *mid;
  const double upper = *mid;
  const double lower = *std::max_element(values.begin(), mid);
  return 0.5 * (lower + upper);
}

CalibrationResult calibrate_het_sd(double target_i2, const SimConfig& probe, int replicates,
                                   double tolerance) {
  if (!(target_i2 > 0.0 && target_i2 < 1.0)) {
    throw DomainError("calibrate_het_sd: target I^2 must lie strictly inside (0, 1)");
  }
  CalibrationResult result;
  double lo = 0.0;
  double hi = 0.05;
  double at_hi = median_i_squared(probe, hi, replicates);
  while (at_hi < target_i2) {
    lo = hi;
    hi *= 2.0;
    if (hi > 10.0) {
      throw std::range_error("calibrate_het_sd: target I^2 unattainable below het_sd = 10");
    }
    at_hi = median_i_squared(probe, hi, replicates);
  }
  if (median_i_squared(probe, lo, replicates) > target_i2 + tolerance) {
    throw std::range_error("calibrate_het_sd: target I^2 is below the level reached at het_sd 0");
  }
  for (int iter = 0; iter < 60; ++iter) {
    result.iterations = iter + 1;
    const double mid = 0.5 * (lo + hi);
    const double value = median_i_squared(probe, mid, replicates);
    result.het_sd = mid;
    result.median_i2 = value;
    if (std::abs(value - target_i2) <= tolerance && hi - lo < 1e-3) break;
    if (value < target_i2) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return result;
}

}  // namespace sparsema
