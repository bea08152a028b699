#include <doctest.h>

#include <cmath>
#include <numeric>

#include "sparsema/errors.hpp"
#include "sparsema/metrics.hpp"
#include "sparsema/rng.hpp"

using namespace sparsema;

namespace {

ComparisonRow row_with(double truth, Interval m, Interval u) {
  ComparisonRow row;
  row.mu_true = truth;
  row.ci_m = m;
  row.ci_u = u;
  row.est_m = 0.5 * (m.low + m.high);
  row.est_u = 0.5 * (u.low + u.high);
  return row;
}

/// Rows for `clusters` replicates whose log relative length follows
/// intercept + slope_e * n_estimates + slope_v * n_variates + noise.
std::vector<ComparisonRow> planted_rows(Philox& rng, int clusters, double slope_e,
                                        double slope_v, double noise) {
  std::vector<ComparisonRow> rows;
  for (int c = 0; c < clusters; ++c) {
    const int n_variates = static_cast<int>(rng.uniform_int(5, 25));
    const int n_estimates = n_variates + static_cast<int>(rng.uniform_int(1, 60));
    const double cluster_effect = 0.05 * rng.normal();
    const int k = static_cast<int>(rng.uniform_int(2, 6));
    for (int j = 0; j < k; ++j) {
      const double log_ratio = -0.1 + slope_e * n_estimates + slope_v * n_variates +
                               cluster_effect + noise * rng.normal();
      ComparisonRow row = row_with(0.0, {-std::exp(log_ratio), std::exp(log_ratio)}, {-1.0, 1.0});
      row.meta_id = c;
      row.variate_id = "v" + std::to_string(j);
      row.n_estimates = n_estimates;
      row.n_variates = n_variates;
      row.est_m = 0.1 + 0.01 * rng.uniform();
      row.est_u = 0.1 + 0.01 * rng.uniform();
      rows.push_back(row);
    }
  }
  return rows;
}

}  // namespace

TEST_CASE("coverage counts intervals containing the truth") {
  std::vector<ComparisonRow> rows{row_with(0.0, {-1, 1}, {-1, 1}), row_with(0.0, {-1, 1}, {0.5, 1}),
                                  row_with(0.0, {-1, 1}, {-1, -0.5}), row_with(0.0, {0.1, 1}, {-1, 1})};
  const Proportion m = coverage(rows, Method::multivariate);
  CHECK(m.estimate == 0.75);
  CHECK(m.successes == 3);
  CHECK(m.trials == 4);
  CHECK(m.low < 0.75);
  CHECK(m.high > 0.75);
  CHECK(coverage(rows, Method::univariate).estimate == 0.5);

  std::vector<ComparisonRow> all(5, row_with(0.0, {-1, 1}, {-1, 1}));
  CHECK(coverage(all, Method::multivariate).estimate == 1.0);
  CHECK(coverage(all, Method::multivariate).high == 1.0);
  std::vector<ComparisonRow> none(5, row_with(3.0, {-1, 1}, {-1, 1}));
  CHECK(coverage(none, Method::univariate).estimate == 0.0);
  CHECK(coverage(none, Method::univariate).low == 0.0);
  CHECK_THROWS_AS(coverage({}, Method::univariate), DomainError);
}

TEST_CASE("Wilson interval matches a hand computation") {
  // 94 of 100: centre (0.94 + z^2/200) / (1 + z^2/100).
  const double z = 1.959964;
  const double denom = 1 + z * z / 100;
  const double centre = (0.94 + z * z / 200) / denom;
  const double half = z * std::sqrt(0.94 * 0.06 / 100 + z * z / 40000) / denom;
  const Proportion p = wilson(94, 100);
  CHECK(p.low == doctest::Approx(centre - half).epsilon(1e-14));
  CHECK(p.high == doctest::Approx(centre + half).epsilon(1e-14));
}

TEST_CASE("coverage is invariant under a joint monotone transform") {
  Philox rng(1);
  std::vector<ComparisonRow> rows;
  std::vector<ComparisonRow> mapped;
  for (int i = 0; i < 200; ++i) {
    const double truth = 0.5 * rng.normal();
    const double c = truth + 0.3 * rng.normal();
    ComparisonRow row = row_with(truth, {c - 0.4, c + 0.4}, {c - 0.2, c + 0.3});
    rows.push_back(row);
    auto t = [](double x) { return std::tanh(x); };
    mapped.push_back(row_with(t(truth), {t(row.ci_m.low), t(row.ci_m.high)},
                              {t(row.ci_u.low), t(row.ci_u.high)}));
  }
  for (Method side : {Method::multivariate, Method::univariate}) {
    CHECK(coverage(rows, side).successes == coverage(mapped, side).successes);
  }
}

TEST_CASE("log_rel_abs_bias") {
  ComparisonRow row;
  row.mu_true = 0.5;
  row.est_m = 0.7;
  row.est_u = 0.3;
  CHECK(log_rel_abs_bias(row).value() == doctest::Approx(0.0));
  row.est_m = 0.9;
  CHECK(log_rel_abs_bias(row).value() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(log_rel_abs_bias(row).value() == doctest::Approx(0.6931).epsilon(1e-4));
  row.est_u = 0.5;
  CHECK_FALSE(log_rel_abs_bias(row).has_value());
}

TEST_CASE("log_rel_length") {
  CHECK(log_rel_length(row_with(0, {-1, 1}, {0, 2})).value() == 0.0);
  const auto r = log_rel_length(row_with(0, {-0.84, 0.84}, {-1, 1}));
  CHECK(r.value() == doctest::Approx(std::log(0.84)).epsilon(1e-12));
  CHECK(r.value() == doctest::Approx(-0.1744).epsilon(1e-3));
  CHECK_FALSE(log_rel_length(row_with(0, {-1, 1}, {0.5, 0.5})).has_value());

  Philox rng(2);
  for (int i = 0; i < 50; ++i) {
    ComparisonRow row = row_with(0, {-rng.uniform(), rng.uniform()}, {-rng.uniform(), rng.uniform()});
    ComparisonRow swapped = row;
    std::swap(swapped.ci_m, swapped.ci_u);
    CHECK(log_rel_length(row).value() == -log_rel_length(swapped).value());
  }
}

TEST_CASE("regress_metric recovers a planted slope") {
  Philox rng(3);
  const auto rows = planted_rows(rng, 200, -0.014, 0.0, 0.05);
  const RegressionResult fit = regress_metric(rows, Response::length, 17);
  REQUIRE(fit.coefficients.size() == 3);
  const Coefficient& slope = fit.coefficients[1];
  CHECK(slope.name == "n_estimates");
  CHECK(slope.ci_low <= -0.014);
  CHECK(slope.ci_high >= -0.014);
  CHECK(slope.ci_high < 0.0);
  CHECK(slope.exp_estimate == doctest::Approx(std::exp(slope.estimate)));
  CHECK(fit.clusters == 200);
  CHECK(fit.rows_used == rows.size());
}

TEST_CASE("regress_metric under the null keeps zero inside its intervals") {
  // Each 95% interval is checked on its own; two intervals jointly would
  // only be expected to cover about 90% of the time. 1000 trials keep the
  // binomial noise well below the 2-point margin.
  Philox rng(4);
  int e_contains = 0;
  int v_contains = 0;
  const int trials = 1000;
  for (int trial = 0; trial < trials; ++trial) {
    const auto rows = planted_rows(rng, 80, 0.0, 0.0, 0.1);
    const RegressionResult fit = regress_metric(rows, Response::length, 100 + trial);
    const auto& e = fit.coefficients[1];
    const auto& v = fit.coefficients[2];
    e_contains += (e.ci_low <= 0 && 0 <= e.ci_high) ? 1 : 0;
    v_contains += (v.ci_low <= 0 && 0 <= v.ci_high) ? 1 : 0;
  }
  MESSAGE("null trials covering 0: n_estimates " << e_contains << ", n_variates " << v_contains);
  CHECK(e_contains >= 0.93 * trials);
  CHECK(v_contains >= 0.93 * trials);
}

TEST_CASE("regress_metric degenerate and invalid inputs") {
  Philox rng(5);
  auto rows = planted_rows(rng, 60, 0.0, 0.0, 0.1);
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i].meta_id = static_cast<int>(i);
  const RegressionResult single = regress_metric(rows, Response::bias, 9, 300);
  for (const auto& c : single.coefficients) {
    CHECK(std::isfinite(c.ci_low));
    CHECK(std::isfinite(c.ci_high));
  }
  CHECK_THROWS_AS(regress_metric(planted_rows(rng, 10, 0, 0, 0.1), Response::length, 1),
                  DomainError);
  auto flat = planted_rows(rng, 40, 0, 0, 0.1);
  for (auto& r : flat) {
    r.n_variates = 10;
    r.n_estimates = 20;
  }
  CHECK_THROWS_AS(regress_metric(flat, Response::length, 1), ConsistencyError);
}

TEST_CASE("mean_ratio") {
  Philox rng(6);
  const auto rows = planted_rows(rng, 100, 0.0, 0.0, 0.05);
  const MeanRatio ratio = mean_ratio(rows, Response::length, 3);
  CHECK(ratio.ratio == doctest::Approx(std::exp(-0.1)).epsilon(0.02));
  CHECK(ratio.ci_low < ratio.ratio);
  CHECK(ratio.ci_high > ratio.ratio);
  CHECK(ratio.ci_high < 1.0);
  CHECK(ratio.rows_used + ratio.rows_excluded == rows.size());
}

TEST_CASE("sucra") {
  Eigen::MatrixXi ranks(3, 3);
  ranks << 1, 2, 3,
           1, 3, 2,
           1, 2, 3;
  const auto s = sucra(ranks);
  CHECK(s[0] == 1.0);
  CHECK(s[1] == doctest::Approx((3 - 7.0 / 3) / 2));
  Eigen::MatrixXi last(2, 4);
  last << 2, 1, 3, 4,
          1, 2, 3, 4;
  CHECK(sucra(last)[3] == 0.0);

  Eigen::MatrixXi bad(1, 3);
  bad << 1, 1, 3;
  CHECK_THROWS_AS(sucra(bad), ConsistencyError);
  CHECK_THROWS_AS(sucra(Eigen::MatrixXi::Ones(2, 1)), DomainError);

  Philox rng(7);
  const int p = 6;
  Eigen::MatrixXi random(20000, p);
  std::vector<int> perm(p);
  for (int s = 0; s < random.rows(); ++s) {
    std::iota(perm.begin(), perm.end(), 1);
    for (int i = p - 1; i > 0; --i) std::swap(perm[i], perm[rng.uniform_int(0, i)]);
    for (int j = 0; j < p; ++j) random(s, j) = perm[j];
  }
  const auto uniform = sucra(random);
  for (double v : uniform) CHECK(std::abs(v - 0.5) < 0.03);
}

TEST_CASE("property: SUCRA values sum to p / 2") {
  Philox rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const int p = static_cast<int>(rng.uniform_int(2, 12));
    const int draws = static_cast<int>(rng.uniform_int(1, 50));
    Eigen::MatrixXi ranks(draws, p);
    std::vector<int> perm(p);
    for (int s = 0; s < draws; ++s) {
      std::iota(perm.begin(), perm.end(), 1);
      for (int i = p - 1; i > 0; --i) std::swap(perm[i], perm[rng.uniform_int(0, i)]);
      for (int j = 0; j < p; ++j) ranks(s, j) = perm[j];
    }
    const auto s = sucra(ranks);
    CHECK(std::accumulate(s.begin(), s.end(), 0.0) == doctest::Approx(p / 2.0).epsilon(1e-12));
  }
}
