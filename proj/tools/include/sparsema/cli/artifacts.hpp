#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "sparsema/sampler.hpp"
#include "sparsema/simulator.hpp"
#include "sparsema/univariate.hpp"

namespace sparsema::cli {

namespace fs = std::filesystem;

inline constexpr std::string_view kDatasetFile = "dataset.csv";
inline constexpr std::string_view kTruthFile = "truth.json";
inline constexpr std::string_view kPosteriorFile = "posterior.csv";
inline constexpr std::string_view kCovarianceFile = "covariance.csv";
inline constexpr std::string_view kDiagnosticsFile = "diagnostics.json";
inline constexpr std::string_view kProjectionFile = "projection.csv";
inline constexpr std::string_view kUnivariateFile = "univariate.csv";
inline constexpr std::string_view kManifestFile = "manifest.json";
inline constexpr std::string_view kReplicatePrefix = "rep-";

inline constexpr std::string_view kPosteriorHeader =
    "variate_id,mean_z,sd_z,lower_z,upper_z,mean_r,sd_r,lower_r,upper_r,rhat,sucra";

/// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const fs::path& path);

/// Write through a sibling temporary and rename, so readers never see a
/// partial file.
void write_file_atomic(const fs::path& path, std::string_view contents);
std::string read_file(const fs::path& path);

/// Replicate directory name for index i: rep-0001, rep-0002, ...
std::string replicate_dir_name(int index);
/// Sorted replicate subdirectories of root.
std::vector<fs::path> list_replicates(const fs::path& root);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

/// Parse a CSV file whose first line is a header; every row must have
/// the header's width.
CsvTable read_csv(const fs::path& path);
double parse_double(const std::string& text, std::size_t line);

// truth.json
nlohmann::json truth_to_json(const SimTruth& truth, const std::vector<std::string>& variates);

struct TruthRecord {
  int index = 0;
  int p = 0;
  int m = 0;
  std::vector<std::string> variates;
  std::vector<double> mu_true;
  double het_sd = 0.0;
  double realized_density = 0.0;
};
TruthRecord read_truth(const fs::path& path);

// posterior.csv
struct PosteriorRow {
  std::string variate_id;
  MarginalSummary z;
  MarginalSummary r;
  double rhat = 0.0;
  double sucra = 0.0;
};
std::string format_posterior(const PosteriorSummary& summary);
std::vector<PosteriorRow> read_posterior(const fs::path& path);

// covariance.csv
std::string format_covariance(const std::vector<std::string>& variates,
                              const Eigen::MatrixXd& covariance);
Eigen::MatrixXd read_covariance(const fs::path& path, std::vector<std::string>* variates = nullptr);

// diagnostics.json
nlohmann::json diagnostics_to_json(const FitResult& fit, const SamplerConfig& sampler,
                                   std::size_t n_estimates);
struct DiagnosticsRecord {
  bool converged = false;
  double level = 0.0;
  int q = 0;
  double max_rhat_mu = 0.0;
  int total_divergences = 0;
};
DiagnosticsRecord read_diagnostics(const fs::path& path);

// univariate.csv
std::string format_univariate(const std::vector<UnivariateResult>& rows);
std::vector<UnivariateResult> read_univariate(const fs::path& path);

}  // namespace sparsema::cli
