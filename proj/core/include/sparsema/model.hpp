#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "sparsema/core.hpp"
#include "sparsema/projection.hpp"

namespace sparsema {

/// Prior hyperparameters: mu_k ~ N(0, mu_prior_variance) and
/// Sigma ~ InvWishart(I_q, q + 1).
inline constexpr double kMuPriorVariance = 1e3;

/**
 * Model parameters in natural coordinates.
 *
 * `chol` is the lower-triangular Cholesky factor of Sigma with a positive
 * diagonal. The unconstrained encoding is [mu (p), lower triangle of chol
 * (row-major, q(q+1)/2)] with diagonal entries stored as logarithms, so
 * every real vector maps to a valid state.
 */
struct ModelState {
  Eigen::VectorXd mu;
  Eigen::MatrixXd chol;

  int p() const noexcept { return static_cast<int>(mu.size()); }
  int q() const noexcept { return static_cast<int>(chol.rows()); }
  Eigen::MatrixXd sigma() const { return chol * chol.transpose(); }

  Eigen::VectorXd unconstrained() const;
  static ModelState from_unconstrained(const Eigen::VectorXd& theta, int p, int q);
};

inline constexpr int unconstrained_size(int p, int q) noexcept { return p + q * (q + 1) / 2; }

/// Position of chol(i, j), j <= i, within the unconstrained vector.
inline constexpr int chol_offset(int p, int i, int j) noexcept { return p + i * (i + 1) / 2 + j; }

struct FittedStudyBlock {
  std::string study_id;
  IndicatorMatrix x;
  Eigen::VectorXd y;
  Eigen::VectorXd d;  ///< sampling variances
};

std::vector<FittedStudyBlock> make_blocks(const MetaDataset& data);

/// D_i + X_i R^T Sigma R X_i^T. Sigma may be any symmetric q x q matrix.
Eigen::MatrixXd phi(const FittedStudyBlock& block, const ProjectionMatrix& projection,
                    const Eigen::MatrixXd& sigma);

/**
 * Log-posterior of the low-dimensional random-effects model in
 * unconstrained coordinates, with its gradient.
 *
 * Holds per-study blocks and the fixed projection. All evaluation methods
 * are const and allocate their own scratch, so one instance can serve
 * concurrent chains.
 */
class LowDimModel {
 public:
  LowDimModel(const MetaDataset& data, ProjectionMatrix projection);

  int p() const noexcept { return p_; }
  int q() const noexcept { return q_; }
  int dim() const noexcept { return unconstrained_size(p_, q_); }
  const ProjectionMatrix& projection() const noexcept { return projection_; }
  const std::vector<FittedStudyBlock>& blocks() const noexcept { return blocks_; }

  double log_likelihood(const ModelState& state) const;
  double log_prior(const ModelState& state) const;
  double log_posterior(const Eigen::VectorXd& theta) const;

  /// Returns the log-posterior and writes its gradient into `grad`.
  double log_posterior_gradient(const Eigen::VectorXd& theta, Eigen::VectorXd& grad) const;

  /// Gradient of the likelihood alone with respect to mu.
  Eigen::VectorXd likelihood_mu_gradient(const ModelState& state) const;

 private:
  void check_state(const ModelState& state) const;

  int p_;
  int q_;
  ProjectionMatrix projection_;
  std::vector<FittedStudyBlock> blocks_;
  /// Per block: X_i R^T (t_i x q).
  std::vector<Eigen::MatrixXd> loadings_;
};

double log_likelihood(const MetaDataset& data, const ModelState& state,
                      const ProjectionMatrix& projection);

/// Normal prior on mu, inverse-Wishart on Sigma, plus the log-Jacobian of
/// the log-Cholesky change of variables.
double log_prior(const ModelState& state);

double log_posterior(const MetaDataset& data, const ModelState& state,
                     const ProjectionMatrix& projection);

Eigen::VectorXd grad_log_posterior(const MetaDataset& data, const ModelState& state,
                                   const ProjectionMatrix& projection);

/// Prior pieces, exposed for checking against closed forms.
double log_normal_prior(const Eigen::VectorXd& mu);
double log_inverse_wishart_identity(const Eigen::MatrixXd& sigma);
/// Same density evaluated from a lower Cholesky factor of Sigma.
double log_inverse_wishart_identity_chol(const Eigen::MatrixXd& chol);
double log_cholesky_jacobian(const ModelState& state);

}  // namespace sparsema
