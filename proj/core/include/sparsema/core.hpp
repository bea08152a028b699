#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace sparsema {

/// One reported estimate, on the Fisher-z scale.
struct Estimate {
  std::string variate_id;
  double y = 0.0;
  double se = 1.0;
};

struct Study {
  std::string study_id;
  std::vector<Estimate> estimates;
};

/**
 * A validated collection of studies.
 *
 * Variates are ordered lexicographically by id so that indicator matrices
 * and every derived output are reproducible. Each study must report at
 * least one estimate, without repeating a variate, and with a finite
 * positive standard error.
 */
class MetaDataset {
 public:
  explicit MetaDataset(std::vector<Study> studies);

  const std::vector<Study>& studies() const noexcept { return studies_; }
  const std::vector<std::string>& variates() const noexcept { return variates_; }

  std::size_t num_studies() const noexcept { return studies_.size(); }
  std::size_t num_variates() const noexcept { return variates_.size(); }
  std::size_t num_estimates() const noexcept { return num_estimates_; }

  /// Column of each estimate of study `i`, in reporting order.
  const std::vector<int>& columns(std::size_t i) const { return columns_.at(i); }

  /// Number of studies reporting each variate.
  std::vector<int> studies_per_variate() const;

  /// Position of `variate_id` in the ordering; throws ConsistencyError if absent.
  int variate_index(std::string_view variate_id) const;

 private:
  std::vector<Study> studies_;
  std::vector<std::string> variates_;
  std::vector<std::vector<int>> columns_;
  std::size_t num_estimates_ = 0;
};

/// Sparse t_i x p 0/1 matrix with exactly one unit entry per row.
struct IndicatorMatrix {
  int cols = 0;
  std::vector<int> column_of_row;

  int rows() const noexcept { return static_cast<int>(column_of_row.size()); }
  Eigen::MatrixXd dense() const;
  /// X * v without forming X.
  Eigen::VectorXd select(const Eigen::VectorXd& v) const;
};

IndicatorMatrix indicator_matrix(const Study& study, const std::vector<std::string>& variates);

double fisher_z(double r);
double inv_fisher_z(double z);
/// Large-sample standard error of a Fisher-z transformed sample correlation.
double fisher_z_se(long long n_units);

enum class ModelKind { riley, lin_chu, lowdim };

/// Free parameters of each model family. The low-dimensional count uses
/// the q(q+1)/2 free elements of a symmetric q x q matrix.
long long param_count(ModelKind model, long long p, std::optional<long long> q = std::nullopt);

/// Sparse when there are fewer estimates than a full multivariate model needs.
bool is_sparse(long long n, long long p);

inline constexpr int kDefaultQMax = 10;

/// Largest q <= min(q_max, p - 1) whose low-dimensional model has no more
/// parameters than there are estimates. Throws InfeasibleError otherwise.
int select_q(long long n, long long p, int q_max = kDefaultQMax);

}  // namespace sparsema
