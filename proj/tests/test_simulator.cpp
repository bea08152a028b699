#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include <Eigen/Cholesky>

#include "sparsema/errors.hpp"
#include "sparsema/simulator.hpp"
#include "sparsema/univariate.hpp"

using namespace sparsema;

TEST_CASE("random_correlation_matrix") {
  Philox rng(1);
  for (int dim = 2; dim < 12; ++dim) {
    const Eigen::MatrixXd c = random_correlation_matrix(dim, rng);
    CHECK((c.diagonal().array() == 1.0).all());
    CHECK(c == c.transpose());
    CHECK(Eigen::LLT<Eigen::MatrixXd>(c).info() == Eigen::Success);
    if (dim == 2) {
      CHECK(std::abs(c(0, 1)) < 1.0);
    }
  }
  CHECK_THROWS_AS(random_correlation_matrix(1, rng), DomainError);

  double sum = 0.0;
  double sq = 0.0;
  int count = 0;
  for (int draw = 0; draw < 1000; ++draw) {
    const Eigen::MatrixXd c = random_correlation_matrix(5, rng);
    for (int i = 0; i < 5; ++i)
      for (int j = i + 1; j < 5; ++j) {
        sum += c(i, j);
        sq += c(i, j) * c(i, j);
        ++count;
      }
  }
  const double mean = sum / count;
  CHECK(std::sqrt(sq / count - mean * mean) > 0.1);
}

TEST_CASE("large studies without heterogeneity estimate the truth") {
  SimConfig config;
  config.seed = 3;
  config.variates = {3, 4};
  config.studies = {4, 4};
  config.units = {1000000, 1000000};
  config.het_sd = 0.0;
  config.density = 1.0;
  const SimReplicate rep = simulate_meta(config, 0);
  for (std::size_t i = 0; i < rep.data.num_studies(); ++i) {
    const auto& study = rep.data.studies()[i];
    for (std::size_t j = 0; j < study.estimates.size(); ++j) {
      const int col = rep.data.columns(i)[j];
      CHECK(std::abs(study.estimates[j].y - rep.truth.mu_true(col)) < 0.01);
    }
  }
}

TEST_CASE("full density keeps every cell") {
  SimConfig config;
  config.seed = 4;
  config.density = 1.0;
  config.units = {50, 200};
  for (int index = 0; index < 5; ++index) {
    const SimReplicate rep = simulate_meta(config, index);
    CHECK(rep.data.num_estimates() ==
          static_cast<std::size_t>(rep.truth.m) * static_cast<std::size_t>(rep.truth.p));
    CHECK(rep.truth.realized_density == 1.0);
  }
}

namespace {

// Expected density of a mask conditioned on full row and column coverage.
double conditional_density_oracle(double density, int draws) {
  std::mt19937_64 gen(17);
  std::uniform_int_distribution<int> studies(4, 15);
  std::uniform_int_distribution<int> variates(5, 25);
  std::bernoulli_distribution cell(density);
  double total = 0.0;
  for (int d = 0; d < draws; ++d) {
    const int m = studies(gen);
    const int p = variates(gen);
    std::vector<int> rows(m);
    std::vector<int> cols(p);
    int kept = 0;
    bool covered = false;
    while (!covered) {
      std::fill(rows.begin(), rows.end(), 0);
      std::fill(cols.begin(), cols.end(), 0);
      kept = 0;
      for (int i = 0; i < m; ++i) {
        for (int j = 0; j < p; ++j) {
          if (cell(gen)) {
            ++rows[i];
            ++cols[j];
            ++kept;
          }
        }
      }
      covered = std::count(rows.begin(), rows.end(), 0) == 0 && std::count(cols.begin(), cols.end(), 0) == 0;
    }
    total += static_cast<double>(kept) / (m * p);
  }
  return total / draws;
}

}  // namespace

TEST_CASE("realized density tracks the configured density") {
  SimConfig config;
  config.seed = 5;
  config.units = {50, 100};
  const int replicates = 1000;
  double total = 0.0;
  double total_sq = 0.0;
  for (int index = 0; index < replicates; ++index) {
    const double d = simulate_meta(config, index).truth.realized_density;
    total += d;
    total_sq += d * d;
  }
  const double mean = total / replicates;
  const double se = std::sqrt((total_sq / replicates - mean * mean) / replicates);
  CHECK(std::abs(mean - config.density) < 0.05);
  // Coverage conditioning lifts the mean above the configured density.
  const double oracle = conditional_density_oracle(config.density, 40000);
  CHECK(mean > config.density);
  CHECK(std::abs(mean - oracle) < 4.0 * se + 0.002);
}

TEST_CASE("generated replicates satisfy the dataset invariants") {
  SimConfig config;
  config.seed = 6;
  config.units = {50, 400};
  for (int index = 0; index < 30; ++index) {
    const SimReplicate rep = simulate_meta(config, index);
    const auto& truth = rep.truth;
    CHECK(rep.data.num_variates() == static_cast<std::size_t>(truth.p));
    CHECK(rep.data.num_studies() == static_cast<std::size_t>(truth.m));
    CHECK(truth.p >= 5);
    CHECK(truth.p <= 25);
    CHECK(truth.m >= 4);
    CHECK(truth.m <= 15);
    CHECK(rep.data.num_estimates() >= static_cast<std::size_t>(truth.p) + 1);
    for (int c : rep.data.studies_per_variate()) CHECK(c >= 1);
    for (int j = 0; j < truth.p; ++j) {
      CHECK(std::abs(std::tanh(truth.mu_true(j)) - truth.correlation(0, j + 1)) < 1e-12);
    }
    for (std::size_t i = 0; i < rep.data.num_studies(); ++i) {
      CHECK(truth.units[i] >= 50);
      CHECK(truth.units[i] <= 400);
      for (const auto& est : rep.data.studies()[i].estimates) {
        CHECK(est.se == 1.0 / std::sqrt(static_cast<double>(truth.units[i] - 3)));
      }
    }
  }
}

TEST_CASE("replicates are bit-reproducible from (seed, index)") {
  SimConfig config;
  config.seed = 7;
  config.units = {50, 300};
  const SimReplicate a = simulate_meta(config, 12);
  const SimReplicate b = simulate_meta(config, 12);
  const SimReplicate c = simulate_meta(config, 13);
  CHECK(a.truth.mu_true == b.truth.mu_true);
  REQUIRE(a.data.num_studies() == b.data.num_studies());
  for (std::size_t i = 0; i < a.data.num_studies(); ++i) {
    const auto& ea = a.data.studies()[i].estimates;
    const auto& eb = b.data.studies()[i].estimates;
    REQUIRE(ea.size() == eb.size());
    for (std::size_t j = 0; j < ea.size(); ++j) {
      CHECK(ea[j].y == eb[j].y);
      CHECK(ea[j].se == eb[j].se);
      CHECK(ea[j].variate_id == eb[j].variate_id);
    }
  }
  const bool differs = a.truth.mu_true.size() != c.truth.mu_true.size() || a.truth.mu_true != c.truth.mu_true;
  CHECK(differs);
}

TEST_CASE("SimConfig validation") {
  SimConfig config;
  config.density = 0.0;
  CHECK_THROWS_AS(config.validate(), DomainError);
  config = SimConfig{};
  config.studies = {5, 4};
  CHECK_THROWS_AS(config.validate(), DomainError);
  config = SimConfig{};
  config.units = {3, 10};
  CHECK_THROWS_AS(config.validate(), DomainError);
}

TEST_CASE("calibrate_het_sd") {
  SimConfig probe;
  probe.seed = 8;
  CHECK_THROWS_AS(calibrate_het_sd(0.0, probe), DomainError);
  CHECK_THROWS_AS(calibrate_het_sd(1.0, probe), DomainError);

  const CalibrationResult mid = calibrate_het_sd(0.5, probe, 30);
  CHECK(std::abs(mid.median_i2 - 0.5) <= 0.05);
  SimConfig fresh = probe;
  fresh.seed = 9;
  const double check = median_i_squared(fresh, mid.het_sd, 30);
  CHECK(check >= 0.45);
  CHECK(check <= 0.55);

  const double low = calibrate_het_sd(0.3, probe, 30).het_sd;
  const double high = calibrate_het_sd(0.7, probe, 30).het_sd;
  CHECK(high > low);
}
