#include "sparsema/core.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_set>

#include "sparsema/errors.hpp"

namespace sparsema {

MetaDataset::MetaDataset(std::vector<Study> studies) : studies_(std::move(studies)) {
  if (studies_.empty()) {
    throw ConsistencyError("dataset has no studies");
  }
  std::set<std::string> ids;
  std::unordered_set<std::string> study_ids;
  for (const auto& study : studies_) {
    if (!study_ids.insert(study.study_id).second) {
      throw ConsistencyError("duplicate study id '" + study.study_id + "'");
    }
    if (study.estimates.empty()) {
      throw ConsistencyError("study '" + study.study_id + "' reports no estimates");
    }
    std::unordered_set<std::string> seen;
    for (const auto& est : study.estimates) {
      if (!seen.insert(est.variate_id).second) {
        throw ConsistencyError("study '" + study.study_id + "' repeats variate '" +
                               est.variate_id + "'");
      }
      if (!std::isfinite(est.y)) {
        throw ConsistencyError("study '" + study.study_id + "', variate '" + est.variate_id +
                               "': estimate is not finite");
      }
      if (!(est.se > 0.0) || !std::isfinite(est.se)) {
        throw ConsistencyError("study '" + study.study_id + "', variate '" + est.variate_id +
                               "': standard error must be positive and finite");
      }
      ids.insert(est.variate_id);
    }
    num_estimates_ += study.estimates.size();
  }
  variates_.assign(ids.begin(), ids.end());
  columns_.reserve(studies_.size());
  for (const auto& study : studies_) {
    columns_.push_back(indicator_matrix(study, variates_).column_of_row);
  }
}

std::vector<int> MetaDataset::studies_per_variate() const {
  std::vector<int> counts(variates_.size(), 0);
  for (const auto& cols : columns_) {
    for (int c : cols) {
      ++counts[c];
    }
  }
  return counts;
}

int MetaDataset::variate_index(std::string_view variate_id) const {
  auto it = std::lower_bound(variates_.begin(), variates_.end(), variate_id);
  if (it == variates_.end() || *it != variate_id) {
    throw ConsistencyError("unknown variate '" + std::string(variate_id) + "'");
  }
  return static_cast<int>(it - variates_.begin());
}

Eigen::MatrixXd IndicatorMatrix::dense() const {
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(rows(), cols);
  for (int j = 0; j < rows(); ++j) {
    x(j, column_of_row[j]) = 1.0;
  }
  return x;
}

Eigen::VectorXd IndicatorMatrix::select(const Eigen::VectorXd& v) const {
  if (v.size() != cols) {
    throw ConsistencyError("indicator matrix has " + std::to_string(cols) +
                           " columns but vector has " + std::to_string(v.size()));
  }
  Eigen::VectorXd out(rows());
  for (int j = 0; j < rows(); ++j) {
    out(j) = v(column_of_row[j]);
  }
  return out;
}

IndicatorMatrix indicator_matrix(const Study& study, const std::vector<std::string>& variates) {
  IndicatorMatrix x;
  x.cols = static_cast<int>(variates.size());
  x.column_of_row.reserve(study.estimates.size());
  std::vector<bool> used(variates.size(), false);
  for (const auto& est : study.estimates) {
    auto it = std::lower_bound(variates.begin(), variates.end(), est.variate_id);
    if (it == variates.end() || *it != est.variate_id) {
      // Fall back to a linear scan in case the ordering is not sorted.
      it = std::find(variates.begin(), variates.end(), est.variate_id);
    }
    if (it == variates.end()) {
      throw ConsistencyError("study '" + study.study_id + "' reports unknown variate '" +
                             est.variate_id + "'");
    }
    const auto col = static_cast<int>(it - variates.begin());
    if (used[col]) {
      throw ConsistencyError("study '" + study.study_id + "' repeats variate '" +
                             est.variate_id + "'");
    }
    used[col] = true;
    x.column_of_row.push_back(col);
  }
  return x;
}

double fisher_z(double r) {
  if (!(std::abs(r) < 1.0)) {
    throw DomainError("fisher_z: correlation must lie in (-1, 1)");
  }
  return std::atanh(r);
}

double inv_fisher_z(double z) {
  if (!std::isfinite(z)) {
    throw DomainError("inv_fisher_z: argument must be finite");
  }
  return std::tanh(z);
}

double fisher_z_se(long long n_units) {
  if (n_units <= 3) {
    throw DomainError("fisher_z_se: need more than 3 units, got " + std::to_string(n_units));
  }
  return 1.0 / std::sqrt(static_cast<double>(n_units - 3));
}

long long param_count(ModelKind model, long long p, std::optional<long long> q) {
  if (p < 1) {
    throw DomainError("param_count: p must be at least 1");
  }
  switch (model) {
    case ModelKind::riley:
      return p * p + p;
    case ModelKind::lin_chu:
      return p * (p + 3) / 2;
    case ModelKind::lowdim:
      if (!q || *q < 1 || *q >= p) {
        throw DomainError("param_count: low-dimensional model needs 1 <= q < p");
      }
      return p + *q * (*q + 1) / 2;
  }
  throw DomainError("param_count: unknown model");
}

bool is_sparse(long long n, long long p) { return n < p * p + p; }

int select_q(long long n, long long p, int q_max) {
  if (q_max < 1) {
    throw DomainError("select_q: q_max must be at least 1");
  }
  const long long upper = std::min<long long>(q_max, p - 1);
  int best = 0;
  for (long long q = 1; q <= upper; ++q) {
    if (param_count(ModelKind::lowdim, p, q) <= n) {
      best = static_cast<int>(q);
    }
  }
  if (best == 0) {
    throw InfeasibleError("no projection dimension fits: n=" + std::to_string(n) +
                          " estimates, p=" + std::to_string(p) +
                          " variates (need n >= p + 1 and p >= 2)");
  }
  return best;
}

}  // namespace sparsema
