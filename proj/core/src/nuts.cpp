#include "sparsema/nuts.hpp"

#include <cmath>
#include <limits>

#include "sparsema/errors.hpp"

namespace sparsema {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double log_sum_exp(double a, double b) {
  if (a == -kInf) return b;
  if (b == -kInf) return a;
  const double hi = std::max(a, b);
  return hi + std::log(std::exp(a - hi) + std::exp(b - hi));
}

bool no_u_turn(const Eigen::VectorXd& p_sharp_minus, const Eigen::VectorXd& p_sharp_plus,
               const Eigen::VectorXd& rho) {
  return p_sharp_plus.dot(rho) > 0 && p_sharp_minus.dot(rho) > 0;
}

}  // namespace

NutsSampler::NutsSampler(LogDensityFn density, int dim, Philox rng, int max_tree_depth)
    : density_(std::move(density)), dim_(dim), rng_(rng), max_tree_depth_(max_tree_depth) {
  if (dim < 1) {
    throw DomainError("NUTS: dimension must be at least 1");
  }
  current_.q = Eigen::VectorXd::Zero(dim);
  current_.p = Eigen::VectorXd::Zero(dim);
  current_.grad = Eigen::VectorXd::Zero(dim);
}

void NutsSampler::evaluate(PhasePoint& z) const {
  try {
    z.logp = density_(z.q, z.grad);
  } catch (const NumericalError&) {
    z.logp = -kInf;
  }
  if (!std::isfinite(z.logp) || !z.grad.allFinite()) {
    z.logp = -kInf;
  }
}

double NutsSampler::hamiltonian(const PhasePoint& z) const {
  return -z.logp + 0.5 * z.p.squaredNorm();
}

void NutsSampler::leapfrog(PhasePoint& z, double epsilon) const {
  z.p += 0.5 * epsilon * z.grad;
  z.q += epsilon * z.p;
  evaluate(z);
  if (z.logp == -kInf) {
    return;
  }
  z.p += 0.5 * epsilon * z.grad;
}

void NutsSampler::sample_momentum(PhasePoint& z) {
  for (int i = 0; i < dim_; ++i) {
    z.p(i) = rng_.normal();
  }
}

void NutsSampler::set_position(const Eigen::VectorXd& position) {
  if (position.size() != dim_) {
    throw ConsistencyError("NUTS: position has wrong dimension");
  }
  PhasePoint z;
  z.q = position;
  z.p = Eigen::VectorXd::Zero(dim_);
  z.grad = Eigen::VectorXd::Zero(dim_);
  evaluate(z);
  if (z.logp == -kInf) {
    throw SamplerError("log density or gradient is not finite at the initial point", position);
  }
  current_ = std::move(z);
}

void NutsSampler::initialize_uniform(double radius, int attempts) {
  Eigen::VectorXd trial(dim_);
  for (int attempt = 0; attempt < attempts; ++attempt) {
    for (int i = 0; i < dim_; ++i) {
      trial(i) = rng_.uniform(-radius, radius);
    }
    PhasePoint z;
    z.q = trial;
    z.p = Eigen::VectorXd::Zero(dim_);
    z.grad = Eigen::VectorXd::Zero(dim_);
    evaluate(z);
    if (z.logp != -kInf) {
      current_ = std::move(z);
      return;
    }
  }
  throw SamplerError("no finite initial point after " + std::to_string(attempts) + " attempts",
                     trial);
}

void NutsSampler::find_reasonable_step_size() {
  const PhasePoint start = current_;
  const double log_target = std::log(0.8);

  PhasePoint z = start;
  sample_momentum(z);
  double h0 = hamiltonian(z);
  leapfrog(z, step_size_);
  double h = z.logp == -kInf ? kInf : hamiltonian(z);
  double delta = h0 - h;
  const int direction = delta > log_target ? 1 : -1;

  for (;;) {
    z = start;
    sample_momentum(z);
    h0 = hamiltonian(z);
    leapfrog(z, step_size_);
    h = z.logp == -kInf ? kInf : hamiltonian(z);
    delta = h0 - h;
    if (direction == 1 && !(delta > log_target)) break;
    if (direction == -1 && !(delta < log_target)) break;
    step_size_ = direction == 1 ? 2 * step_size_ : 0.5 * step_size_;
    if (step_size_ > 1e7) {
      throw SamplerError("step size diverged to infinity; posterior may be improper", start.q);
    }
    if (step_size_ == 0) {
      throw SamplerError("step size collapsed to zero", start.q);
    }
  }
  current_ = start;
}

TransitionStats NutsSampler::transition() {
  TransitionStats stats;
  saw_nonfinite_ = false;
  PhasePoint z = current_;
  sample_momentum(z);

  PhasePoint z_fwd = z;
  PhasePoint z_bck = z;
  PhasePoint z_sample = z;
  PhasePoint z_propose = z;

  Eigen::VectorXd p_fwd_fwd = z.p;
  Eigen::VectorXd p_sharp_fwd_fwd = z.p;
  Eigen::VectorXd p_fwd_bck = z.p;
  Eigen::VectorXd p_sharp_fwd_bck = z.p;
  Eigen::VectorXd p_bck_fwd = z.p;
  Eigen::VectorXd p_sharp_bck_fwd = z.p;
  Eigen::VectorXd p_bck_bck = z.p;
  Eigen::VectorXd p_sharp_bck_bck = z.p;
  Eigen::VectorXd rho = z.p;

  double log_sum_weight = 0.0;
  const double H0 = hamiltonian(z);
  stats.energy = H0;
  int n_leapfrog = 0;
  double sum_metro_prob = 0.0;
  int depth = 0;

  Eigen::VectorXd rho_fwd(dim_);
  Eigen::VectorXd rho_bck(dim_);
  while (depth < max_tree_depth_) {
    rho_fwd.setZero();
    rho_bck.setZero();
    bool valid_subtree = false;
    double log_sum_weight_subtree = -kInf;

    if (rng_.uniform() > 0.5) {
      rho_bck = rho;
      p_bck_fwd = p_fwd_bck;
      p_sharp_bck_fwd = p_sharp_fwd_bck;
      PhasePoint& z_end = z_fwd;
      valid_subtree = build_tree(depth, z_end, z_propose, p_sharp_fwd_bck, p_sharp_fwd_fwd,
                                 rho_fwd, p_fwd_bck, p_fwd_fwd, H0, 1.0, n_leapfrog,
                                 log_sum_weight_subtree, sum_metro_prob, stats);
    } else {
      rho_fwd = rho;
      p_fwd_bck = p_bck_fwd;
      p_sharp_fwd_bck = p_sharp_bck_fwd;
      PhasePoint& z_end = z_bck;
      valid_subtree = build_tree(depth, z_end, z_propose, p_sharp_bck_fwd, p_sharp_bck_bck,
                                 rho_bck, p_bck_fwd, p_bck_bck, H0, -1.0, n_leapfrog,
                                 log_sum_weight_subtree, sum_metro_prob, stats);
    }
    if (!valid_subtree) break;
    ++depth;

    if (log_sum_weight_subtree > log_sum_weight) {
      z_sample = z_propose;
    } else if (rng_.uniform() < std::exp(log_sum_weight_subtree - log_sum_weight)) {
      z_sample = z_propose;
    }
    log_sum_weight = log_sum_exp(log_sum_weight, log_sum_weight_subtree);

    rho = rho_bck + rho_fwd;
    bool persist = no_u_turn(p_sharp_bck_bck, p_sharp_fwd_fwd, rho);
    Eigen::VectorXd rho_extended = rho_bck + p_fwd_bck;
    persist = persist && no_u_turn(p_sharp_bck_bck, p_sharp_fwd_bck, rho_extended);
    rho_extended = rho_fwd + p_bck_fwd;
    persist = persist && no_u_turn(p_sharp_bck_fwd, p_sharp_fwd_fwd, rho_extended);
    if (!persist) break;
  }

  stats.tree_depth = depth;
  stats.n_leapfrog = n_leapfrog;
  stats.accept_stat = n_leapfrog > 0 ? sum_metro_prob / n_leapfrog : 0.0;
  current_ = std::move(z_sample);

  if (saw_nonfinite_) {
    if (++consecutive_nonfinite_ >= kMaxConsecutiveNonFinite) {
      throw SamplerError("non-finite log density or gradient in " +
                             std::to_string(kMaxConsecutiveNonFinite) +
                             " consecutive transitions",
                         current_.q);
    }
  } else {
    consecutive_nonfinite_ = 0;
  }
  return stats;
}

bool NutsSampler::build_tree(int depth, PhasePoint& z, PhasePoint& z_propose,
                             Eigen::VectorXd& p_sharp_beg, Eigen::VectorXd& p_sharp_end,
                             Eigen::VectorXd& rho, Eigen::VectorXd& p_beg, Eigen::VectorXd& p_end,
                             double H0, double sign, int& n_leapfrog, double& log_sum_weight,
                             double& sum_metro_prob, TransitionStats& stats) {
  if (depth == 0) {
    leapfrog(z, sign * step_size_);
    ++n_leapfrog;
    double h = kInf;
    if (z.logp == -kInf) {
      saw_nonfinite_ = true;
    } else {
      h = hamiltonian(z);
      if (std::isnan(h)) h = kInf;
    }
    stats.max_energy_error = std::max(stats.max_energy_error, std::abs(h - H0));
    if (h - H0 > kMaxDeltaH) {
      stats.divergent = true;
    }
    log_sum_weight = log_sum_exp(log_sum_weight, H0 - h);
    sum_metro_prob += H0 - h > 0 ? 1.0 : std::exp(H0 - h);
    z_propose = z;
    p_sharp_beg = z.p;
    p_sharp_end = p_sharp_beg;
    rho += z.p;
    p_beg = z.p;
    p_end = p_beg;
    return !stats.divergent;
  }

  // Initial subtree.
  Eigen::VectorXd p_sharp_init_end(dim_);
  Eigen::VectorXd p_init_end(dim_);
  Eigen::VectorXd rho_init = Eigen::VectorXd::Zero(dim_);
  double log_sum_weight_init = -kInf;
  const bool valid_init =
      build_tree(depth - 1, z, z_propose, p_sharp_beg, p_sharp_init_end, rho_init, p_beg,
                 p_init_end, H0, sign, n_leapfrog, log_sum_weight_init, sum_metro_prob, stats);
  if (!valid_init) return false;

  // Final subtree.
  PhasePoint z_propose_final = z;
  Eigen::VectorXd p_sharp_final_beg(dim_);
  Eigen::VectorXd p_final_beg(dim_);
  Eigen::VectorXd rho_final = Eigen::VectorXd::Zero(dim_);
  double log_sum_weight_final = -kInf;
  const bool valid_final =
      build_tree(depth - 1, z, z_propose_final, p_sharp_final_beg, p_sharp_end, rho_final,
                 p_final_beg, p_end, H0, sign, n_leapfrog, log_sum_weight_final, sum_metro_prob,
                 stats);
  if (!valid_final) return false;

  // Multinomial sample from the right subtree.
  const double log_sum_weight_subtree = log_sum_exp(log_sum_weight_init, log_sum_weight_final);
  log_sum_weight = log_sum_exp(log_sum_weight, log_sum_weight_subtree);
  if (log_sum_weight_final > log_sum_weight_subtree) {
    z_propose = z_propose_final;
  } else if (rng_.uniform() < std::exp(log_sum_weight_final - log_sum_weight_subtree)) {
    z_propose = z_propose_final;
  }

  const Eigen::VectorXd rho_subtree = rho_init + rho_final;
  rho += rho_subtree;

  bool persist = no_u_turn(p_sharp_beg, p_sharp_end, rho_subtree);
  Eigen::VectorXd rho_extended = rho_init + p_final_beg;
  persist = persist && no_u_turn(p_sharp_beg, p_sharp_final_beg, rho_extended);
  rho_extended = rho_final + p_init_end;
  persist = persist && no_u_turn(p_sharp_init_end, p_sharp_end, rho_extended);
  return persist;
}

}  // namespace sparsema
