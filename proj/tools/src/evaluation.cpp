#include "sparsema/cli/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "sparsema/dataset_io.hpp"
#include "sparsema/errors.hpp"

namespace sparsema::cli {

namespace {

std::string fmt(double x) { return format_double(x); }

nlohmann::json proportion_json(const Proportion& p) {
  return {{"estimate", p.estimate},
          {"ci_low", p.low},
          {"ci_high", p.high},
          {"successes", p.successes},
          {"trials", p.trials}};
}

nlohmann::json ratio_json(const MeanRatio& r) {
  return {{"mean_log", r.mean_log}, {"ratio", r.ratio},         {"ci_low", r.ci_low},
          {"ci_high", r.ci_high},   {"rows_used", r.rows_used}, {"rows_excluded", r.rows_excluded}};
}

nlohmann::json regression_json(const RegressionResult& r) {
  nlohmann::json coefs = nlohmann::json::array();
  for (const auto& c : r.coefficients) {
    coefs.push_back({{"name", c.name},
                     {"estimate", c.estimate},
                     {"ci_low", c.ci_low},
                     {"ci_high", c.ci_high},
                     {"exp_estimate", c.exp_estimate},
                     {"exp_ci_low", c.exp_ci_low},
                     {"exp_ci_high", c.exp_ci_high}});
  }
  return {{"coefficients", coefs},
          {"rows_used", r.rows_used},
          {"rows_excluded", r.rows_excluded},
          {"clusters", r.clusters},
          {"resamples", r.resamples}};
}

}  // namespace

ReplicateInputs make_inputs(int meta_id, const TruthRecord& truth, std::size_t n_estimates,
                            const PosteriorSummary& posterior,
                            const std::vector<UnivariateResult>& univariate) {
  ReplicateInputs out;
  out.meta_id = meta_id;
  out.name = replicate_dir_name(meta_id);
  out.variates = truth.variates;
  out.mu_true = truth.mu_true;
  out.n_estimates = n_estimates;
  out.converged = posterior.converged;
  out.level = posterior.level;
  for (std::size_t j = 0; j < posterior.variates.size(); ++j) {
    out.posterior.push_back({posterior.variates[j], posterior.z[j], posterior.correlation[j],
                             posterior.rhat[j], posterior.sucra[j]});
  }
  out.univariate = univariate;
  return out;
}

LoadOutcome load_replicate(const fs::path& dir) {
  LoadOutcome outcome;
  for (auto file : {kTruthFile, kDatasetFile, kPosteriorFile, kDiagnosticsFile, kUnivariateFile}) {
    if (!fs::exists(dir / file)) {
      outcome.problem = "missing " + std::string(file);
      return outcome;
    }
  }
  try {
    const TruthRecord truth = read_truth(dir / kTruthFile);
    const DiagnosticsRecord diagnostics = read_diagnostics(dir / kDiagnosticsFile);
    ReplicateInputs in;
    in.meta_id = truth.index;
    in.name = dir.filename().string();
    in.variates = truth.variates;
    in.mu_true = truth.mu_true;
    in.n_estimates = read_dataset(dir / kDatasetFile).num_estimates();
    in.converged = diagnostics.converged;
    in.level = diagnostics.level;
    in.posterior = read_posterior(dir / kPosteriorFile);
    in.univariate = read_univariate(dir / kUnivariateFile);
    outcome.inputs = std::move(in);
  } catch (const std::exception& e) {
    outcome.problem = e.what();
  }
  return outcome;
}

Evaluation evaluate(const std::vector<ReplicateInputs>& replicates,
                    const std::vector<std::string>& missing, std::uint64_t seed, int resamples) {
  Evaluation out;
  Exclusions& ex = out.exclusions;
  ex.replicates_total = replicates.size() + missing.size();
  ex.missing = missing;

  for (const auto& rep : replicates) {
    if (!rep.converged) {
      ex.nonconverged.push_back(rep.name);
      continue;
    }
    if (out.level_m == 0.0) {
      out.level_m = rep.level;
    } else if (rep.level != out.level_m) {
      throw ConsistencyError("replicate " + rep.name + " was fitted at level " +
                             std::to_string(rep.level) + ", others at " +
                             std::to_string(out.level_m));
    }
    ++ex.replicates_analyzed;
    std::map<std::string, const PosteriorRow*> post;
    for (const auto& row : rep.posterior) post[row.variate_id] = &row;
    std::map<std::string, const UnivariateResult*> uni;
    for (const auto& row : rep.univariate) uni[row.variate_id] = &row;

    for (std::size_t j = 0; j < rep.variates.size(); ++j) {
      const std::string& id = rep.variates[j];
      const auto pm = post.find(id);
      const auto pu = uni.find(id);
      if (pm == post.end() || pu == uni.end()) {
        throw ConsistencyError("replicate " + rep.name + ": no result for variate " + id);
      }
      ++ex.pairs_total;
      if (!pu->second->usable()) {
        ++ex.pairs_zero_width_u;
        continue;
      }
      const auto& z = pm->second->z;
      if (!(z.upper - z.lower > 0.0)) {
        ++ex.pairs_zero_width_m;
        continue;
      }
      ComparisonRow row;
      row.meta_id = rep.meta_id;
      row.variate_id = id;
      row.mu_true = rep.mu_true[j];
      row.est_m = z.mean;
      row.ci_m = {z.lower, z.upper};
      row.est_u = pu->second->pooled.estimate;
      row.ci_u = {pu->second->pooled.ci_low, pu->second->pooled.ci_high};
      row.n_estimates = static_cast<int>(rep.n_estimates);
      row.n_variates = static_cast<int>(rep.variates.size());
      out.rows.push_back(std::move(row));
    }
  }
  ex.pairs_used = out.rows.size();
  if (out.rows.empty()) {
    throw DomainError("evaluate: no usable comparison pairs");
  }
  out.coverage_m = coverage(out.rows, Method::multivariate);
  out.coverage_u = coverage(out.rows, Method::univariate);
  out.length = mean_ratio(out.rows, Response::length, seed, resamples);
  out.bias = mean_ratio(out.rows, Response::bias, seed + 1, resamples);
  ex.length_excluded = out.length.rows_excluded;
  ex.bias_excluded = out.bias.rows_excluded;
  try {
    out.length_regression = regress_metric(out.rows, Response::length, seed + 2, resamples);
    out.bias_regression = regress_metric(out.rows, Response::bias, seed + 3, resamples);
  } catch (const std::exception& e) {
    out.length_regression.reset();
    out.bias_regression.reset();
    out.regression_note = e.what();
  }
  return out;
}

nlohmann::json evaluation_to_json(const Evaluation& e) {
  const Exclusions& ex = e.exclusions;
  nlohmann::json j;
  j["level_multivariate"] = e.level_m;
  j["level_univariate"] = 0.95;
  j["coverage"] = {{"multivariate", proportion_json(e.coverage_m)},
                   {"univariate", proportion_json(e.coverage_u)}};
  j["relative_length"] = ratio_json(e.length);
  j["relative_bias"] = ratio_json(e.bias);
  nlohmann::json reg;
  if (e.length_regression) {
    reg["length"] = regression_json(*e.length_regression);
    reg["bias"] = regression_json(*e.bias_regression);
  } else {
    reg["note"] = e.regression_note;
  }
  j["regression"] = reg;
  j["exclusions"] = {{"replicates_total", ex.replicates_total},
                     {"replicates_missing", ex.missing.size()},
                     {"missing", ex.missing},
                     {"replicates_nonconverged", ex.nonconverged.size()},
                     {"nonconverged", ex.nonconverged},
                     {"replicates_analyzed", ex.replicates_analyzed},
                     {"pairs_total", ex.pairs_total},
                     {"pairs_zero_width_univariate", ex.pairs_zero_width_u},
                     {"pairs_zero_width_multivariate", ex.pairs_zero_width_m},
                     {"pairs_used", ex.pairs_used},
                     {"bias_rows_excluded", ex.bias_excluded},
                     {"length_rows_excluded", ex.length_excluded}};
  return j;
}

std::string format_metrics(const std::vector<ComparisonRow>& rows) {
  std::string out(kMetricsHeader);
  out += '\n';
  for (const auto& r : rows) {
    const auto bias = log_rel_abs_bias(r);
    const auto length = log_rel_length(r);
    out += std::to_string(r.meta_id) + ',' + csv_field(r.variate_id) + ',' + fmt(r.mu_true) + ',' +
           fmt(r.est_m) + ',' + fmt(r.ci_m.low) + ',' + fmt(r.ci_m.high) + ',' + fmt(r.est_u) +
           ',' + fmt(r.ci_u.low) + ',' + fmt(r.ci_u.high) + ',' + std::to_string(r.n_estimates) +
           ',' + std::to_string(r.n_variates) + ',' + (r.ci_m.contains(r.mu_true) ? "1" : "0") +
           ',' + (r.ci_u.contains(r.mu_true) ? "1" : "0") + ',' + (bias ? fmt(*bias) : "") + ',' +
           (length ? fmt(*length) : "") + '\n';
  }
  return out;
}

std::string format_forest(const std::vector<ComparisonRow>& rows) {
  std::string out(kForestHeader);
  out += '\n';
  for (const auto& r : rows) {
    const std::string prefix = std::to_string(r.meta_id) + ',' + csv_field(r.variate_id) + ',';
    const std::string truth = fmt(std::tanh(r.mu_true));
    out += prefix + "multivariate," + fmt(std::tanh(r.est_m)) + ',' + fmt(std::tanh(r.ci_m.low)) +
           ',' + fmt(std::tanh(r.ci_m.high)) + ',' + truth + '\n';
    out += prefix + "univariate," + fmt(std::tanh(r.est_u)) + ',' + fmt(std::tanh(r.ci_u.low)) +
           ',' + fmt(std::tanh(r.ci_u.high)) + ',' + truth + '\n';
  }
  return out;
}

std::string format_curves(const Evaluation& evaluation) {
  std::string out(kCurveHeader);
  out += '\n';
  double mean_e = 0.0;
  double mean_v = 0.0;
  int min_e = evaluation.rows.front().n_estimates;
  int max_e = min_e;
  int min_v = evaluation.rows.front().n_variates;
  int max_v = min_v;
  for (const auto& r : evaluation.rows) {
    mean_e += r.n_estimates;
    mean_v += r.n_variates;
    min_e = std::min(min_e, r.n_estimates);
    max_e = std::max(max_e, r.n_estimates);
    min_v = std::min(min_v, r.n_variates);
    max_v = std::max(max_v, r.n_variates);
  }
  mean_e /= static_cast<double>(evaluation.rows.size());
  mean_v /= static_cast<double>(evaluation.rows.size());

  auto emit = [&](const char* response, const RegressionResult& reg) {
    Eigen::Vector3d beta;
    for (int c = 0; c < 3; ++c) beta(c) = reg.coefficients[c].estimate;
    for (int which = 1; which <= 2; ++which) {
      const int lo = which == 1 ? min_e : min_v;
      const int hi = which == 1 ? max_e : max_v;
      for (int value = lo; value <= hi; ++value) {
        Eigen::Vector3d x(1.0, mean_e, mean_v);
        x(which) = value;
        std::vector<double> draws(reg.bootstrap.rows());
        for (Eigen::Index b = 0; b < reg.bootstrap.rows(); ++b) {
          draws[b] = std::exp(reg.bootstrap.row(b).dot(x));
        }
        std::sort(draws.begin(), draws.end());
        out += std::string(response) + ',' + reg.coefficients[which].name + ',' +
               std::to_string(value) + ',' + fmt(std::exp(beta.dot(x))) + ',' +
               fmt(quantile_sorted(draws, 0.025)) + ',' + fmt(quantile_sorted(draws, 0.975)) +
               '\n';
      }
    }
  };
  if (evaluation.length_regression) {
    emit("length", *evaluation.length_regression);
    emit("bias", *evaluation.bias_regression);
  }
  return out;
}

}  // namespace sparsema::cli
