#include <doctest.h>

#include <cmath>
#include <limits>

#include "sparsema/errors.hpp"
#include "sparsema/nuts.hpp"

using namespace sparsema;

namespace {

double std_normal(const Eigen::VectorXd& x, Eigen::VectorXd& grad) {
  grad = -x;
  return -0.5 * x.squaredNorm();
}

}  // namespace

TEST_CASE("leapfrog conserves energy at a tiny step size") {
  NutsSampler sampler(std_normal, 10, Philox(1, 1), 6);
  sampler.initialize_uniform(2.0);
  sampler.set_step_size(1e-4);
  for (int i = 0; i < 20; ++i) {
    const TransitionStats stats = sampler.transition();
    CHECK(stats.max_energy_error < 1e-6);
    CHECK_FALSE(stats.divergent);
    CHECK(stats.n_leapfrog >= 1);
  }
}

TEST_CASE("tree depth is capped") {
  NutsSampler sampler(std_normal, 3, Philox(2, 1), 4);
  sampler.initialize_uniform(1.0);
  sampler.set_step_size(1e-3);
  const TransitionStats stats = sampler.transition();
  CHECK(stats.tree_depth == 4);
  CHECK(stats.n_leapfrog == 15);
}

TEST_CASE("initialization failures raise SamplerError with the state") {
  LogDensityFn never = [](const Eigen::VectorXd&, Eigen::VectorXd& grad) {
    grad.setZero();
    return -std::numeric_limits<double>::infinity();
  };
  NutsSampler sampler(never, 2, Philox(3), 5);
  CHECK_THROWS_AS(sampler.initialize_uniform(2.0, 10), SamplerError);
  try {
    sampler.set_position(Eigen::Vector2d(0.5, -0.5));
  } catch (const SamplerError& e) {
    CHECK(e.state() == Eigen::Vector2d(0.5, -0.5));
  }
}

TEST_CASE("persistent non-finite density aborts the chain") {
  int calls = 0;
  LogDensityFn cliff = [&calls](const Eigen::VectorXd& x, Eigen::VectorXd& grad) {
    ++calls;
    grad = -x;
    if (calls > 1) throw NumericalError("boom");
    return -0.5 * x.squaredNorm();
  };
  NutsSampler sampler(cliff, 2, Philox(4), 5);
  sampler.set_position(Eigen::Vector2d(0.1, 0.1));
  sampler.set_step_size(0.1);
  bool aborted = false;
  for (int i = 0; i < 2 * kMaxConsecutiveNonFinite && !aborted; ++i) {
    try {
      const TransitionStats stats = sampler.transition();
      CHECK(stats.divergent);
    } catch (const SamplerError&) {
      aborted = true;
    }
  }
  CHECK(aborted);
}

TEST_CASE("find_reasonable_step_size moves towards acceptance 0.8") {
  NutsSampler sampler(std_normal, 5, Philox(5), 10);
  sampler.initialize_uniform(2.0);
  sampler.set_step_size(1e-6);
  sampler.find_reasonable_step_size();
  CHECK(sampler.step_size() > 0.1);
  sampler.set_step_size(1e3);
  sampler.find_reasonable_step_size();
  CHECK(sampler.step_size() < 10.0);
}

TEST_CASE("dual averaging settles where acceptance matches the target") {
  // Synthetic response: acceptance falls as the step size grows.
  DualAveraging adapt(0.8);
  double step = 1.0;
  adapt.restart(step);
  for (int i = 0; i < 2000; ++i) {
    step = adapt.update(std::exp(-step));
  }
  CHECK(adapt.final_step_size() == doctest::Approx(-std::log(0.8)).epsilon(0.05));
}
