#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>

#include <Eigen/Core>

namespace sparsema {

/**
 * Random q x p map between the variate space and the low-dimensional
 * space in which the combined covariance is modelled.
 *
 * Entries are iid N(0, 1/q) drawn from Philox keyed by the seed, in
 * row-major order, so (p, q, seed) reproduce the matrix bit-exactly.
 * `effective_seed` differs from `seed` only when a draw contained a
 * near-zero row and had to be regenerated.
 */
struct ProjectionMatrix {
  Eigen::MatrixXd entries;
  std::uint64_t seed = 0;
  std::uint64_t effective_seed = 0;
  int seed_bumps = 0;

  int q() const noexcept { return static_cast<int>(entries.rows()); }
  int p() const noexcept { return static_cast<int>(entries.cols()); }
};

/// Rows with norm below this are rejected and the matrix redrawn with seed + 1.
inline constexpr double kMinRowNorm = 1e-8;

ProjectionMatrix make_projection(int p, int q, std::uint64_t seed);

/// Wrap a caller-supplied matrix (q <= p allowed). Used to inject fixed maps.
ProjectionMatrix projection_from_entries(Eigen::MatrixXd entries, std::uint64_t seed = 0);

/// R^T Sigma R. Sigma must be symmetric (to 1e-10) and positive definite.
Eigen::MatrixXd lift_covariance(const ProjectionMatrix& projection, const Eigen::MatrixXd& sigma);

/// CSV with a `# projection p=<p> q=<q> seed=<seed>` header line then q rows.
void write_projection(std::ostream& out, const ProjectionMatrix& projection);
void write_projection(const std::filesystem::path& path, const ProjectionMatrix& projection);
ProjectionMatrix read_projection(std::istream& in);

}  // namespace sparsema
