#include "sparsema/model.hpp"

#include <cmath>
#include <numbers>

#include <Eigen/Cholesky>

#include "sparsema/errors.hpp"

namespace sparsema {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

/// log multivariate gamma function Gamma_q(a).
double log_multigamma(int q, double a) {
  double out = 0.25 * q * (q - 1) * std::log(std::numbers::pi);
  for (int j = 1; j <= q; ++j) {
    out += std::lgamma(a + 0.5 * (1 - j));
  }
  return out;
}

}  // namespace

Eigen::VectorXd ModelState::unconstrained() const {
  const int np = p();
  const int nq = q();
  Eigen::VectorXd theta(unconstrained_size(np, nq));
  theta.head(np) = mu;
  for (int i = 0; i < nq; ++i) {
    for (int j = 0; j < i; ++j) {
      theta(chol_offset(np, i, j)) = chol(i, j);
    }
    theta(chol_offset(np, i, i)) = std::log(chol(i, i));
  }
  return theta;
}

ModelState ModelState::from_unconstrained(const Eigen::VectorXd& theta, int p, int q) {
  if (theta.size() != unconstrained_size(p, q)) {
    throw ConsistencyError("unconstrained vector has length " + std::to_string(theta.size()) +
                           ", expected " + std::to_string(unconstrained_size(p, q)));
  }
  ModelState state;
  state.mu = theta.head(p);
  state.chol = Eigen::MatrixXd::Zero(q, q);
  for (int i = 0; i < q; ++i) {
    for (int j = 0; j < i; ++j) {
      state.chol(i, j) = theta(chol_offset(p, i, j));
    }
    state.chol(i, i) = std::exp(theta(chol_offset(p, i, i)));
  }
  return state;
}

std::vector<FittedStudyBlock> make_blocks(const MetaDataset& data) {
  std::vector<FittedStudyBlock> blocks;
  blocks.reserve(data.num_studies());
  for (std::size_t i = 0; i < data.num_studies(); ++i) {
    const Study& study = data.studies()[i];
    FittedStudyBlock block;
    block.study_id = study.study_id;
    block.x.cols = static_cast<int>(data.num_variates());
    block.x.column_of_row = data.columns(i);
    const auto t = static_cast<Eigen::Index>(study.estimates.size());
    block.y.resize(t);
    block.d.resize(t);
    for (Eigen::Index j = 0; j < t; ++j) {
      block.y(j) = study.estimates[j].y;
      block.d(j) = study.estimates[j].se * study.estimates[j].se;
    }
    blocks.push_back(std::move(block));
  }
  return blocks;
}

Eigen::MatrixXd phi(const FittedStudyBlock& block, const ProjectionMatrix& projection,
                    const Eigen::MatrixXd& sigma) {
  const int t = block.x.rows();
  if (block.y.size() != t || block.d.size() != t) {
    throw ConsistencyError("study '" + block.study_id + "': block dimensions disagree");
  }
  if (block.x.cols != projection.p()) {
    throw ConsistencyError("study '" + block.study_id + "': indicator has " +
                           std::to_string(block.x.cols) + " columns, projection has " +
                           std::to_string(projection.p()));
  }
  if (sigma.rows() != projection.q() || sigma.cols() != projection.q()) {
    throw ConsistencyError("Sigma must be q x q with q = " + std::to_string(projection.q()));
  }
  Eigen::MatrixXd loading(t, projection.q());
  for (int j = 0; j < t; ++j) {
    loading.row(j) = projection.entries.col(block.x.column_of_row[j]).transpose();
  }
  Eigen::MatrixXd out = loading * sigma * loading.transpose();
  out.diagonal() += block.d;
  return out;
}

LowDimModel::LowDimModel(const MetaDataset& data, ProjectionMatrix projection)
    : p_(static_cast<int>(data.num_variates())),
      q_(projection.q()),
      projection_(std::move(projection)),
      blocks_(make_blocks(data)) {
  if (projection_.p() != p_) {
    throw ConsistencyError("projection has " + std::to_string(projection_.p()) +
                           " columns but dataset has " + std::to_string(p_) + " variates");
  }
  loadings_.reserve(blocks_.size());
  for (const auto& block : blocks_) {
    Eigen::MatrixXd loading(block.x.rows(), q_);
    for (int j = 0; j < block.x.rows(); ++j) {
      loading.row(j) = projection_.entries.col(block.x.column_of_row[j]).transpose();
    }
    loadings_.push_back(std::move(loading));
  }
}

void LowDimModel::check_state(const ModelState& state) const {
  if (state.p() != p_ || state.q() != q_ || state.chol.cols() != q_) {
    throw ConsistencyError("state dimensions (p=" + std::to_string(state.p()) +
                           ", q=" + std::to_string(state.q()) + ") do not match model (p=" +
                           std::to_string(p_) + ", q=" + std::to_string(q_) + ")");
  }
}

double LowDimModel::log_likelihood(const ModelState& state) const {
  check_state(state);
  double total = 0.0;
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const auto& block = blocks_[b];
    const Eigen::MatrixXd half = loadings_[b] * state.chol;
    Eigen::MatrixXd cov = half * half.transpose();
    cov.diagonal() += block.d;
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) {
      throw NumericalError("Cholesky of Phi failed for study '" + block.study_id + "'");
    }
    const Eigen::VectorXd resid = block.y - block.x.select(state.mu);
    const Eigen::VectorXd white = llt.matrixL().solve(resid);
    const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    total += -0.5 * (static_cast<double>(resid.size()) * kLog2Pi + logdet + white.squaredNorm());
  }
  return total;
}

double LowDimModel::log_prior(const ModelState& state) const {
  check_state(state);
  return sparsema::log_prior(state);
}

double LowDimModel::log_posterior(const Eigen::VectorXd& theta) const {
  const ModelState state = ModelState::from_unconstrained(theta, p_, q_);
  return log_likelihood(state) + sparsema::log_prior(state);
}

double LowDimModel::log_posterior_gradient(const Eigen::VectorXd& theta,
                                           Eigen::VectorXd& grad) const {
  const ModelState state = ModelState::from_unconstrained(theta, p_, q_);
  const Eigen::MatrixXd& chol = state.chol;
  grad.setZero(dim());
  // d logpost / d Sigma, accumulated as a symmetric matrix.
  Eigen::MatrixXd dsigma = Eigen::MatrixXd::Zero(q_, q_);
  double total = 0.0;

  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const auto& block = blocks_[b];
    const Eigen::MatrixXd& loading = loadings_[b];
    const Eigen::MatrixXd half = loading * chol;
    Eigen::MatrixXd cov = half * half.transpose();
    cov.diagonal() += block.d;
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) {
      throw NumericalError("Cholesky of Phi failed for study '" + block.study_id + "'");
    }
    const Eigen::VectorXd resid = block.y - block.x.select(state.mu);
    const Eigen::VectorXd alpha = llt.solve(resid);
    const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    total += -0.5 * (static_cast<double>(resid.size()) * kLog2Pi + logdet + resid.dot(alpha));

    for (int j = 0; j < block.x.rows(); ++j) {
      grad(block.x.column_of_row[j]) += alpha(j);
    }
    // d/dPhi = (alpha alpha^T - Phi^-1) / 2, pulled back through X R^T.
    const Eigen::VectorXd projected = loading.transpose() * alpha;
    const Eigen::MatrixXd info = loading.transpose() * llt.solve(loading);
    dsigma.noalias() += 0.5 * (projected * projected.transpose() - info);
  }

  total += log_normal_prior(state.mu);
  grad.head(p_) -= state.mu / kMuPriorVariance;

  const Eigen::MatrixXd chol_inv =
      chol.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(q_, q_));
  const Eigen::MatrixXd sigma_inv = chol_inv.transpose() * chol_inv;
  const double iw_power = q_ + 1.0;  // (nu + q + 1) / 2 with nu = q + 1
  total += log_inverse_wishart_identity_chol(chol);
  dsigma += -iw_power * sigma_inv + 0.5 * sigma_inv * sigma_inv;

  const Eigen::MatrixXd dchol = 2.0 * dsigma * chol;
  for (int i = 0; i < q_; ++i) {
    for (int j = 0; j < i; ++j) {
      grad(chol_offset(p_, i, j)) = dchol(i, j);
    }
    grad(chol_offset(p_, i, i)) = dchol(i, i) * chol(i, i) + (q_ - i + 1);
  }
  total += log_cholesky_jacobian(state);
  return total;
}

Eigen::VectorXd LowDimModel::likelihood_mu_gradient(const ModelState& state) const {
  check_state(state);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(p_);
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const auto& block = blocks_[b];
    const Eigen::MatrixXd half = loadings_[b] * state.chol;
    Eigen::MatrixXd cov = half * half.transpose();
    cov.diagonal() += block.d;
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) {
      throw NumericalError("Cholesky of Phi failed for study '" + block.study_id + "'");
    }
    const Eigen::VectorXd alpha = llt.solve(block.y - block.x.select(state.mu));
    for (int j = 0; j < block.x.rows(); ++j) {
      grad(block.x.column_of_row[j]) += alpha(j);
    }
  }
  return grad;
}

double log_normal_prior(const Eigen::VectorXd& mu) {
  const double n = static_cast<double>(mu.size());
  return -0.5 * n * (kLog2Pi + std::log(kMuPriorVariance)) -
         0.5 * mu.squaredNorm() / kMuPriorVariance;
}

double log_inverse_wishart_identity(const Eigen::MatrixXd& sigma) {
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) {
    throw DomainError("inverse-Wishart density: Sigma is not positive definite");
  }
  return log_inverse_wishart_identity_chol(llt.matrixL());
}

double log_inverse_wishart_identity_chol(const Eigen::MatrixXd& chol) {
  const int q = static_cast<int>(chol.rows());
  const double nu = q + 1.0;
  const double logdet = 2.0 * chol.diagonal().array().log().sum();
  const Eigen::MatrixXd chol_inv =
      chol.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(q, q));
  return -0.5 * nu * q * std::numbers::ln2 - log_multigamma(q, 0.5 * nu) -
         0.5 * (nu + q + 1.0) * logdet - 0.5 * chol_inv.squaredNorm();
}

double log_cholesky_jacobian(const ModelState& state) {
  const int q = state.q();
  // Sigma = L L^T contributes 2^q prod L_ii^(q - i) (0-based i); the
  // exp map on the diagonal contributes one more power of each L_ii.
  double out = q * std::numbers::ln2;
  for (int i = 0; i < q; ++i) {
    out += (q - i + 1) * std::log(state.chol(i, i));
  }
  return out;
}

double log_prior(const ModelState& state) {
  return log_normal_prior(state.mu) + log_inverse_wishart_identity_chol(state.chol) +
         log_cholesky_jacobian(state);
}

double log_likelihood(const MetaDataset& data, const ModelState& state,
                      const ProjectionMatrix& projection) {
  return LowDimModel(data, projection).log_likelihood(state);
}

double log_posterior(const MetaDataset& data, const ModelState& state,
                     const ProjectionMatrix& projection) {
  return LowDimModel(data, projection).log_posterior(state.unconstrained());
}

Eigen::VectorXd grad_log_posterior(const MetaDataset& data, const ModelState& state,
                                   const ProjectionMatrix& projection) {
  Eigen::VectorXd grad;
  LowDimModel(data, projection).log_posterior_gradient(state.unconstrained(), grad);
  return grad;
}

}  // namespace sparsema
