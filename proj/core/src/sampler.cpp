#include "sparsema/sampler.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <thread>

#include "sparsema/errors.hpp"
#include "sparsema/metrics.hpp"
#include "sparsema/model.hpp"

namespace sparsema {

void SamplerConfig::validate() const {
  if (chains < 1) throw DomainError("sampler: chains must be at least 1");
  if (warmup < 1 || samples < 1) throw DomainError("sampler: warmup and samples must be >= 1");
  if (!(target_accept > 0.0 && target_accept < 1.0)) {
    throw DomainError("sampler: target_accept must lie in (0, 1)");
  }
  if (max_tree_depth < 1) throw DomainError("sampler: max_tree_depth must be >= 1");
  if (threads < 1) throw DomainError("sampler: threads must be >= 1");
}

namespace {

ChainResult run_chain(const LogDensityFn& density, int dim, const SamplerConfig& config,
                      std::uint64_t stream) {
  NutsSampler sampler(density, dim, Philox(config.seed, stream), config.max_tree_depth);
  sampler.initialize_uniform(2.0);
  sampler.set_step_size(1.0);
  sampler.find_reasonable_step_size();

  DualAveraging adapt(config.target_accept);
  adapt.restart(sampler.step_size());
  for (int i = 0; i < config.warmup; ++i) {
    const TransitionStats stats = sampler.transition();
    sampler.set_step_size(adapt.update(stats.accept_stat));
  }
  sampler.set_step_size(adapt.final_step_size());

  ChainResult out;
  out.seed = config.seed;
  out.stream = stream;
  out.step_size = sampler.step_size();
  out.draws.resize(config.samples, dim);
  out.depth_histogram.assign(config.max_tree_depth + 1, 0);
  double accept_total = 0.0;
  for (int i = 0; i < config.samples; ++i) {
    const TransitionStats stats = sampler.transition();
    out.draws.row(i) = sampler.position().transpose();
    out.divergences += stats.divergent ? 1 : 0;
    out.max_depth_hits += stats.tree_depth >= config.max_tree_depth ? 1 : 0;
    ++out.depth_histogram[stats.tree_depth];
    accept_total += stats.accept_stat;
  }
  out.mean_accept_stat = accept_total / config.samples;
  return out;
}

}  // namespace

std::vector<ChainResult> nuts_sample(const LogDensityFn& density, int dim,
                                     const SamplerConfig& config) {
  config.validate();
  std::vector<ChainResult> results(config.chains);
  if (config.threads <= 1 || config.chains == 1) {
    for (int c = 0; c < config.chains; ++c) {
      results[c] = run_chain(density, dim, config, static_cast<std::uint64_t>(c) + 1);
    }
    return results;
  }
  std::vector<std::exception_ptr> errors(config.chains);
  std::vector<std::thread> workers;
  std::atomic<int> next{0};
  const int n_workers = std::min(config.threads, config.chains);
  for (int w = 0; w < n_workers; ++w) {
    workers.emplace_back([&] {
      for (int c = next++; c < config.chains; c = next++) {
        try {
          results[c] = run_chain(density, dim, config, static_cast<std::uint64_t>(c) + 1);
        } catch (...) {
          errors[c] = std::current_exception();
        }
      }
    });
  }
  for (auto& worker : workers) worker.join();
  for (const auto& error : errors) {
    if (error) std::rethrow_exception(error);
  }
  return results;
}

double split_rhat(const Eigen::MatrixXd& draws_by_chain) {
  const Eigen::Index n = draws_by_chain.rows();
  const Eigen::Index chains = draws_by_chain.cols();
  if (chains < 2 || n < 4) {
    throw DomainError("split_rhat: need at least 2 chains of at least 4 draws");
  }
  const Eigen::Index half = n / 2;
  const Eigen::Index m = 2 * chains;
  Eigen::VectorXd means(m);
  Eigen::VectorXd vars(m);
  for (Eigen::Index c = 0; c < chains; ++c) {
    for (int part = 0; part < 2; ++part) {
      const auto segment = draws_by_chain.col(c).segment(part == 0 ? 0 : n - half, half);
      const double mean = segment.mean();
      const Eigen::Index k = 2 * c + part;
      means(k) = mean;
      vars(k) = (segment.array() - mean).square().sum() / static_cast<double>(half - 1);
    }
  }
  const double within = vars.mean();
  const double grand = means.mean();
  const double between =
      static_cast<double>(half) * (means.array() - grand).square().sum() / static_cast<double>(m - 1);
  if (!(within > 0.0)) {
    return std::numeric_limits<double>::infinity();
  }
  const double var_plus = (static_cast<double>(half - 1) / half) * within + between / half;
  return std::sqrt(var_plus / within);
}

std::vector<double> split_rhat(const std::vector<ChainResult>& chains) {
  if (chains.empty()) {
    throw DomainError("split_rhat: no chains");
  }
  const Eigen::Index n = chains.front().draws.rows();
  const Eigen::Index dim = chains.front().draws.cols();
  std::vector<double> out(dim);
  Eigen::MatrixXd column(n, static_cast<Eigen::Index>(chains.size()));
  for (Eigen::Index d = 0; d < dim; ++d) {
    for (std::size_t c = 0; c < chains.size(); ++c) {
      column.col(static_cast<Eigen::Index>(c)) = chains[c].draws.col(d);
    }
    out[d] = split_rhat(column);
  }
  return out;
}

double quantile_sorted(const std::vector<double>& sorted, double prob) {
  if (sorted.empty()) {
    throw DomainError("quantile of empty sample");
  }
  const double h = (static_cast<double>(sorted.size()) - 1.0) * prob;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

std::vector<MarginalSummary> summarize(const Eigen::MatrixXd& draws, double level,
                                       const std::function<double(double)>& transform) {
  if (!(level > 0.0 && level < 1.0)) {
    throw DomainError("summarize: level must lie in (0, 1)");
  }
  const double alpha = 1.0 - level;
  std::vector<MarginalSummary> out(draws.cols());
  std::vector<double> column(draws.rows());
  for (Eigen::Index j = 0; j < draws.cols(); ++j) {
    for (Eigen::Index i = 0; i < draws.rows(); ++i) {
      column[i] = transform ? transform(draws(i, j)) : draws(i, j);
    }
    const double n = static_cast<double>(column.size());
    const double mean = std::accumulate(column.begin(), column.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : column) ss += (v - mean) * (v - mean);
    std::sort(column.begin(), column.end());
    out[j].mean = mean;
    out[j].sd = column.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    out[j].lower = quantile_sorted(column, 0.5 * alpha);
    out[j].upper = quantile_sorted(column, 1.0 - 0.5 * alpha);
  }
  return out;
}

Eigen::MatrixXd pool_draws(const std::vector<ChainResult>& chains) {
  Eigen::Index rows = 0;
  for (const auto& chain : chains) rows += chain.draws.rows();
  Eigen::MatrixXd out(rows, chains.empty() ? 0 : chains.front().draws.cols());
  Eigen::Index at = 0;
  for (const auto& chain : chains) {
    out.middleRows(at, chain.draws.rows()) = chain.draws;
    at += chain.draws.rows();
  }
  return out;
}

std::uint64_t default_projection_seed(std::uint64_t master_seed) {
  return mix_seed(master_seed, 0x70726f6a);
}

Eigen::MatrixXi rank_by_magnitude(const Eigen::MatrixXd& mu_draws) {
  const Eigen::Index p = mu_draws.cols();
  Eigen::MatrixXi ranks(mu_draws.rows(), p);
  std::vector<int> order(p);
  for (Eigen::Index s = 0; s < mu_draws.rows(); ++s) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return std::abs(std::tanh(mu_draws(s, a))) > std::abs(std::tanh(mu_draws(s, b)));
    });
    for (Eigen::Index r = 0; r < p; ++r) {
      ranks(s, order[r]) = static_cast<int>(r) + 1;
    }
  }
  return ranks;
}

FitResult fit(const MetaDataset& data, const FitOptions& options) {
  options.sampler.validate();
  const auto n = static_cast<long long>(data.num_estimates());
  const auto p = static_cast<long long>(data.num_variates());
  FitResult result;
  const int budget_q = select_q(n, p, options.q_max);
  if (options.q) {
    if (*options.q < 1 || *options.q >= p) {
      throw DomainError("q must satisfy 1 <= q < p = " + std::to_string(p));
    }
    if (param_count(ModelKind::lowdim, p, *options.q) > n) {
      throw InfeasibleError("q=" + std::to_string(*options.q) + " needs " +
                            std::to_string(param_count(ModelKind::lowdim, p, *options.q)) +
                            " parameters but only n=" + std::to_string(n) +
                            " estimates are available for p=" + std::to_string(p) +
                            " variates (largest feasible q is " + std::to_string(budget_q) + ")");
    }
    result.q = *options.q;
  } else {
    result.q = budget_q;
  }

  const std::uint64_t projection_seed =
      options.projection_seed.value_or(default_projection_seed(options.sampler.seed));
  result.projection = make_projection(static_cast<int>(p), result.q, projection_seed);
  const LowDimModel model(data, result.projection);
  const LogDensityFn density = [&model](const Eigen::VectorXd& theta, Eigen::VectorXd& grad) {
    return model.log_posterior_gradient(theta, grad);
  };

  auto& diag = result.diagnostics;
  diag.chains = nuts_sample(density, model.dim(), options.sampler);
  for (const auto& chain : diag.chains) diag.total_divergences += chain.divergences;
  if (diag.chains.size() >= 2 && options.sampler.samples >= 4) {
    diag.rhat_all = split_rhat(diag.chains);
  } else {
    diag.rhat_all.assign(model.dim(), std::numeric_limits<double>::infinity());
  }

  const Eigen::MatrixXd pooled = pool_draws(diag.chains);
  const Eigen::MatrixXd mu_draws = pooled.leftCols(p);

  auto& summary = result.summary;
  summary.variates = data.variates();
  summary.level = options.level;
  summary.z = summarize(mu_draws, options.level);
  summary.correlation = summarize(mu_draws, options.level, [](double z) { return std::tanh(z); });
  summary.rhat.assign(diag.rhat_all.begin(), diag.rhat_all.begin() + p);
  diag.max_rhat_mu = *std::max_element(summary.rhat.begin(), summary.rhat.end());
  summary.converged = std::all_of(summary.rhat.begin(), summary.rhat.end(), [&](double r) {
    return r < options.sampler.rhat_threshold;
  });
  summary.ranks = rank_by_magnitude(mu_draws);
  summary.sucra = p >= 2 ? sucra(summary.ranks) : std::vector<double>(p, 1.0);

  summary.sigma_draws.reserve(pooled.rows());
  summary.lifted_covariance_mean = Eigen::MatrixXd::Zero(p, p);
  for (Eigen::Index s = 0; s < pooled.rows(); ++s) {
    const ModelState state =
        ModelState::from_unconstrained(pooled.row(s).transpose(), static_cast<int>(p), result.q);
    Eigen::MatrixXd sigma = state.sigma();
    const Eigen::MatrixXd half = state.chol.transpose() * result.projection.entries;
    summary.lifted_covariance_mean += half.transpose() * half;
    summary.sigma_draws.push_back(std::move(sigma));
  }
  summary.lifted_covariance_mean /= static_cast<double>(pooled.rows());

  for (auto& chain : diag.chains) chain.draws.resize(0, 0);
  return result;
}

}  // namespace sparsema
