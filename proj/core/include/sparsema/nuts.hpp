#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

#include "sparsema/rng.hpp"

namespace sparsema {

/// Log density and gradient at a point. Returns the log density and
/// writes the gradient. May return -inf or throw NumericalError outside
/// the numerically usable region; both count as a divergence.
using LogDensityFn = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>;

/// The sampler could not start or repeatedly hit non-finite values.
class SamplerError : public std::runtime_error {
 public:
  SamplerError(const std::string& what, Eigen::VectorXd state)
      : std::runtime_error(what), state_(std::move(state)) {}
  const Eigen::VectorXd& state() const noexcept { return state_; }

 private:
  Eigen::VectorXd state_;
};

/**
 * Dual-averaging step-size adaptation (Nesterov 2009, as used in
 * Hoffman & Gelman 2014) with Stan's defaults t0 = 10, gamma = 0.05,
 * kappa = 0.75.
 */
class DualAveraging {
 public:
  explicit DualAveraging(double target, double t0 = 10, double gamma = 0.05, double kappa = 0.75)
      : target_(target), t0_(t0), gamma_(gamma), kappa_(kappa) {}

  /// Restart around a new initial step size; the iterate is shrunk towards 10x it.
  void restart(double step_size) {
    counter_ = 0;
    s_bar_ = 0;
    x_bar_ = 0;
    mu_ = std::log(10 * step_size);
  }

  /// Feed one acceptance statistic; returns the next step size to use.
  double update(double accept_stat) {
    ++counter_;
    accept_stat = std::min(1.0, accept_stat);
    const double eta = 1.0 / (counter_ + t0_);
    s_bar_ = (1.0 - eta) * s_bar_ + eta * (target_ - accept_stat);
    const double x = mu_ - s_bar_ * std::sqrt(counter_) / gamma_;
    const double x_eta = std::pow(counter_, -kappa_);
    x_bar_ = (1.0 - x_eta) * x_bar_ + x_eta * x;
    return std::exp(x);
  }

  /// Averaged step size, used after warmup.
  double final_step_size() const { return std::exp(x_bar_); }

 private:
  double target_;
  double t0_;
  double gamma_;
  double kappa_;
  double counter_ = 0;
  double s_bar_ = 0;
  double x_bar_ = 0;
  double mu_ = 0;
};

struct TransitionStats {
  double accept_stat = 0.0;
  int tree_depth = 0;
  int n_leapfrog = 0;
  bool divergent = false;
  /// Hamiltonian at the start of the transition.
  double energy = 0.0;
  /// Largest |H - H0| seen along the trajectory.
  double max_energy_error = 0.0;
};

/**
 * No-U-Turn sampler with unit diagonal metric, multinomial sampling
 * within the trajectory and the generalized U-turn criterion, including
 * the checks across merged subtrees. Follows the structure of Stan's
 * base_nuts (Betancourt 2017, "A Conceptual Introduction to HMC").
 */
class NutsSampler {
 public:
  NutsSampler(LogDensityFn density, int dim, Philox rng, int max_tree_depth = 10);

  /// Set the current position; throws SamplerError if the density or
  /// gradient is not finite there.
  void set_position(const Eigen::VectorXd& position);

  /// Draw random initial points uniformly in (-radius, radius) until one
  /// evaluates finitely (at most `attempts` tries).
  void initialize_uniform(double radius = 2.0, int attempts = 100);

  const Eigen::VectorXd& position() const noexcept { return current_.q; }
  double log_density() const noexcept { return current_.logp; }

  double step_size() const noexcept { return step_size_; }
  void set_step_size(double step_size) { step_size_ = step_size; }

  /// Doubling/halving heuristic for a step size whose single leapfrog
  /// acceptance crosses 0.8.
  void find_reasonable_step_size();

  TransitionStats transition();

  Philox& rng() noexcept { return rng_; }
  int dim() const noexcept { return dim_; }

 private:
  struct PhasePoint {
    Eigen::VectorXd q;
    Eigen::VectorXd p;
    Eigen::VectorXd grad;
    double logp = 0.0;
  };

  double hamiltonian(const PhasePoint& z) const;
  void evaluate(PhasePoint& z) const;
  void leapfrog(PhasePoint& z, double epsilon) const;
  void sample_momentum(PhasePoint& z);
  bool build_tree(int depth, PhasePoint& z, PhasePoint& z_propose, Eigen::VectorXd& p_sharp_beg,
                  Eigen::VectorXd& p_sharp_end, Eigen::VectorXd& rho, Eigen::VectorXd& p_beg,
                  Eigen::VectorXd& p_end, double H0, double sign, int& n_leapfrog,
                  double& log_sum_weight, double& sum_metro_prob, TransitionStats& stats);

  LogDensityFn density_;
  int dim_;
  Philox rng_;
  int max_tree_depth_;
  double step_size_ = 1.0;
  PhasePoint current_;
  int consecutive_nonfinite_ = 0;
  bool saw_nonfinite_ = false;
};

inline constexpr double kMaxDeltaH = 1000.0;
inline constexpr int kMaxConsecutiveNonFinite = 100;

}  // namespace sparsema
