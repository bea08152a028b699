#include "sparsema/cli/artifacts.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <openssl/evp.h>

#include "sparsema/dataset_io.hpp"
#include "sparsema/errors.hpp"

namespace sparsema::cli {

namespace {

std::string join_csv(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i > 0) out += ',';
    out += csv_field(fields[i]);
  }
  return out;
}

std::vector<std::string> split_header(std::string_view header) {
  return split_csv_line(header);
}

void require_header(const CsvTable& table, std::string_view expected, const fs::path& path) {
  if (table.header != split_header(expected)) {
    throw ParseError(1, path.string() + ": expected header '" + std::string(expected) + "'");
  }
}

std::string fmt(double x) { return format_double(x); }

}  // namespace

std::string sha256_file(const fs::path& path) {
  const std::string bytes = read_file(path);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 failed for " + path.string());
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < length; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xf];
  }
  return out;
}

void write_file_atomic(const fs::path& path, std::string_view contents) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

std::string replicate_dir_name(int index) {
  std::string digits = std::to_string(index);
  if (digits.size() < 4) digits.insert(0, 4 - digits.size(), '0');
  return std::string(kReplicatePrefix) + digits;
}

std::vector<fs::path> list_replicates(const fs::path& root) {
  std::vector<fs::path> out;
  if (!fs::is_directory(root)) {
    throw std::runtime_error(root.string() + " is not a directory");
  }
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory() && entry.path().filename().string().starts_with(kReplicatePrefix)) {
      out.push_back(entry.path());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

CsvTable read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  CsvTable table;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (table.header.empty()) {
      table.header = std::move(fields);
      continue;
    }
    if (fields.size() != table.header.size()) {
      throw ParseError(number, path.string() + ": expected " + std::to_string(table.header.size()) +
                                   " fields, found " + std::to_string(fields.size()));
    }
    table.rows.push_back(std::move(fields));
  }
  if (table.header.empty()) throw ParseError(1, path.string() + ": empty file");
  return table;
}

double parse_double(const std::string& text, std::size_t line) {
  double value = 0.0;
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    if (text == "inf") return std::numeric_limits<double>::infinity();
    if (text == "nan") return std::numeric_limits<double>::quiet_NaN();
    throw ParseError(line, "not a number: '" + text + "'");
  }
  return value;
}

nlohmann::json truth_to_json(const SimTruth& truth, const std::vector<std::string>& variates) {
  nlohmann::json j;
  j["index"] = truth.index;
  j["seed"] = truth.seed;
  j["p"] = truth.p;
  j["m"] = truth.m;
  j["het_sd"] = truth.het_sd;
  j["realized_density"] = truth.realized_density;
  j["mask_draws"] = truth.mask_draws;
  j["variates"] = variates;
  j["mu_true"] = std::vector<double>(truth.mu_true.data(), truth.mu_true.data() + truth.mu_true.size());
  j["units"] = truth.units;
  j["offsets"] = std::vector<double>(truth.offsets.data(), truth.offsets.data() + truth.offsets.size());
  nlohmann::json corr = nlohmann::json::array();
  for (Eigen::Index r = 0; r < truth.correlation.rows(); ++r) {
    std::vector<double> row(truth.correlation.cols());
    for (Eigen::Index c = 0; c < truth.correlation.cols(); ++c) row[c] = truth.correlation(r, c);
    corr.push_back(row);
  }
  j["correlation"] = corr;
  return j;
}

TruthRecord read_truth(const fs::path& path) {
  const auto j = nlohmann::json::parse(read_file(path));
  TruthRecord out;
  out.index = j.at("index").get<int>();
  out.p = j.at("p").get<int>();
  out.m = j.at("m").get<int>();
  out.variates = j.at("variates").get<std::vector<std::string>>();
  out.mu_true = j.at("mu_true").get<std::vector<double>>();
  out.het_sd = j.at("het_sd").get<double>();
  out.realized_density = j.at("realized_density").get<double>();
  if (out.variates.size() != out.mu_true.size() || static_cast<int>(out.mu_true.size()) != out.p) {
    throw ConsistencyError(path.string() + ": variates, mu_true and p disagree");
  }
  return out;
}

std::string format_posterior(const PosteriorSummary& summary) {
  std::string out(kPosteriorHeader);
  out += '\n';
  for (std::size_t j = 0; j < summary.variates.size(); ++j) {
    const auto& z = summary.z[j];
    const auto& r = summary.correlation[j];
    out += join_csv({summary.variates[j], fmt(z.mean), fmt(z.sd), fmt(z.lower), fmt(z.upper),
                     fmt(r.mean), fmt(r.sd), fmt(r.lower), fmt(r.upper), fmt(summary.rhat[j]),
                     fmt(summary.sucra[j])});
    out += '\n';
  }
  return out;
}

std::vector<PosteriorRow> read_posterior(const fs::path& path) {
  const CsvTable table = read_csv(path);
  require_header(table, kPosteriorHeader, path);
  std::vector<PosteriorRow> out;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& f = table.rows[i];
    const std::size_t line = i + 2;
    PosteriorRow row;
    row.variate_id = f[0];
    row.z = {parse_double(f[1], line), parse_double(f[2], line), parse_double(f[3], line),
             parse_double(f[4], line)};
    row.r = {parse_double(f[5], line), parse_double(f[6], line), parse_double(f[7], line),
             parse_double(f[8], line)};
    row.rhat = parse_double(f[9], line);
    row.sucra = parse_double(f[10], line);
    out.push_back(std::move(row));
  }
  return out;
}

std::string format_covariance(const std::vector<std::string>& variates,
                              const Eigen::MatrixXd& covariance) {
  std::vector<std::string> header{"variate_id"};
  header.insert(header.end(), variates.begin(), variates.end());
  std::string out = join_csv(header) + '\n';
  for (std::size_t r = 0; r < variates.size(); ++r) {
    std::vector<std::string> row{variates[r]};
    for (std::size_t c = 0; c < variates.size(); ++c) {
      row.push_back(fmt(covariance(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c))));
    }
    out += join_csv(row) + '\n';
  }
  return out;
}

Eigen::MatrixXd read_covariance(const fs::path& path, std::vector<std::string>* variates) {
  const CsvTable table = read_csv(path);
  if (table.header.empty() || table.header[0] != "variate_id") {
    throw ParseError(1, path.string() + ": first column must be variate_id");
  }
  const std::size_t p = table.header.size() - 1;
  if (table.rows.size() != p) {
    throw ConsistencyError(path.string() + ": covariance is not square");
  }
  Eigen::MatrixXd out(p, p);
  for (std::size_t r = 0; r < p; ++r) {
    if (table.rows[r][0] != table.header[r + 1]) {
      throw ConsistencyError(path.string() + ": row and column labels disagree");
    }
    for (std::size_t c = 0; c < p; ++c) {
      out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          parse_double(table.rows[r][c + 1], r + 2);
    }
  }
  if (variates) variates->assign(table.header.begin() + 1, table.header.end());
  return out;
}

nlohmann::json diagnostics_to_json(const FitResult& fit, const SamplerConfig& sampler,
                                   std::size_t n_estimates) {
  nlohmann::json j;
  j["converged"] = fit.summary.converged;
  j["level"] = fit.summary.level;
  j["q"] = fit.q;
  j["p"] = fit.projection.p();
  j["n_estimates"] = n_estimates;
  j["max_rhat_mu"] = fit.diagnostics.max_rhat_mu;
  j["rhat_threshold"] = sampler.rhat_threshold;
  j["total_divergences"] = fit.diagnostics.total_divergences;
  j["rhat_all"] = fit.diagnostics.rhat_all;
  j["seeds"] = {{"master", sampler.seed},
                {"projection", fit.projection.seed},
                {"projection_effective", fit.projection.effective_seed},
                {"projection_bumps", fit.projection.seed_bumps}};
  nlohmann::json chains = nlohmann::json::array();
  for (std::size_t c = 0; c < fit.diagnostics.chains.size(); ++c) {
    const auto& chain = fit.diagnostics.chains[c];
    chains.push_back({{"chain", c},
                      {"seed", chain.seed},
                      {"stream", chain.stream},
                      {"step_size", chain.step_size},
                      {"divergences", chain.divergences},
                      {"max_depth_hits", chain.max_depth_hits},
                      {"mean_accept_stat", chain.mean_accept_stat},
                      {"depth_histogram", chain.depth_histogram}});
  }
  j["chains"] = chains;
  j["sampler"] = {{"chains", sampler.chains},
                  {"warmup", sampler.warmup},
                  {"samples", sampler.samples},
                  {"target_accept", sampler.target_accept},
                  {"max_tree_depth", sampler.max_tree_depth}};
  return j;
}

DiagnosticsRecord read_diagnostics(const fs::path& path) {
  const auto j = nlohmann::json::parse(read_file(path));
  DiagnosticsRecord out;
  out.converged = j.at("converged").get<bool>();
  out.level = j.at("level").get<double>();
  out.q = j.at("q").get<int>();
  out.max_rhat_mu = j.at("max_rhat_mu").get<double>();
  out.total_divergences = j.at("total_divergences").get<int>();
  return out;
}

std::string format_univariate(const std::vector<UnivariateResult>& rows) {
  std::string out(kUnivariateHeader);
  out += '\n';
  for (const auto& row : rows) {
    out += join_csv({row.variate_id, std::to_string(row.k), fmt(row.pooled.estimate),
                     fmt(row.pooled.se), fmt(row.pooled.ci_low), fmt(row.pooled.ci_high),
                     fmt(row.tau2), fmt(row.i2), to_string(row.flag)});
    out += '\n';
  }
  return out;
}

std::vector<UnivariateResult> read_univariate(const fs::path& path) {
  const CsvTable table = read_csv(path);
  require_header(table, kUnivariateHeader, path);
  std::vector<UnivariateResult> out;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& f = table.rows[i];
    const std::size_t line = i + 2;
    UnivariateResult row;
    row.variate_id = f[0];
    row.k = static_cast<int>(parse_double(f[1], line));
    row.pooled = {parse_double(f[2], line), parse_double(f[3], line), parse_double(f[4], line),
                  parse_double(f[5], line)};
    row.tau2 = parse_double(f[6], line);
    row.i2 = parse_double(f[7], line);
    if (f[8] == "ok") {
      row.flag = UnivariateFlag::ok;
    } else if (f[8] == "singleton") {
      row.flag = UnivariateFlag::singleton;
    } else if (f[8] == "zero_width") {
      row.flag = UnivariateFlag::zero_width;
    } else {
      throw ParseError(line, "unknown flag '" + f[8] + "'");
    }
    out.push_back(std::move(row));
  }
  return out;
}

}  // namespace sparsema::cli
