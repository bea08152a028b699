#include "sparsema/projection.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include <Eigen/Cholesky>

#include "sparsema/dataset_io.hpp"
#include "sparsema/errors.hpp"
#include "sparsema/rng.hpp"

namespace sparsema {

namespace {

Eigen::MatrixXd draw_gaussian(int q, int p, std::uint64_t seed) {
  Philox rng(seed);
  const double sd = 1.0 / std::sqrt(static_cast<double>(q));
  Eigen::MatrixXd r(q, p);
  for (int i = 0; i < q; ++i) {
    for (int j = 0; j < p; ++j) {
      r(i, j) = sd * rng.normal();
    }
  }
  return r;
}

}  // namespace

ProjectionMatrix make_projection(int p, int q, std::uint64_t seed) {
  if (q < 1 || q >= p) {
    throw DomainError("make_projection: need 1 <= q < p, got q=" + std::to_string(q) +
                      ", p=" + std::to_string(p));
  }
  ProjectionMatrix out;
  out.seed = seed;
  out.effective_seed = seed;
  for (;;) {
    out.entries = draw_gaussian(q, p, out.effective_seed);
    if (out.entries.rowwise().norm().minCoeff() >= kMinRowNorm) {
      return out;
    }
    ++out.effective_seed;
    ++out.seed_bumps;
  }
}

ProjectionMatrix projection_from_entries(Eigen::MatrixXd entries, std::uint64_t seed) {
  if (entries.rows() < 1 || entries.rows() > entries.cols()) {
    throw DomainError("projection_from_entries: need 1 <= q <= p");
  }
  if (!entries.allFinite()) {
    throw DomainError("projection_from_entries: entries must be finite");
  }
  ProjectionMatrix out;
  out.entries = std::move(entries);
  out.seed = seed;
  out.effective_seed = seed;
  return out;
}

Eigen::MatrixXd lift_covariance(const ProjectionMatrix& projection, const Eigen::MatrixXd& sigma) {
  const int q = projection.q();
  if (sigma.rows() != q || sigma.cols() != q) {
    throw ConsistencyError("lift_covariance: Sigma must be " + std::to_string(q) + "x" +
                           std::to_string(q));
  }
  if ((sigma - sigma.transpose()).cwiseAbs().maxCoeff() > 1e-10) {
    throw DomainError("lift_covariance: Sigma is not symmetric");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) {
    throw DomainError("lift_covariance: Sigma is not positive definite");
  }
  // (L^T R)^T (L^T R) is symmetric by construction.
  const Eigen::MatrixXd half = llt.matrixU() * projection.entries;
  return half.transpose() * half;
}

void write_projection(std::ostream& out, const ProjectionMatrix& projection) {
  out << "# projection p=" << projection.p() << " q=" << projection.q()
      << " seed=" << projection.seed << '\n';
  for (int i = 0; i < projection.q(); ++i) {
    for (int j = 0; j < projection.p(); ++j) {
      if (j) out << ',';
      out << format_double(projection.entries(i, j));
    }
    out << '\n';
  }
}

void write_projection(const std::filesystem::path& path, const ProjectionMatrix& projection) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write projection '" + path.string() + "'");
  }
  write_projection(out, projection);
}

ProjectionMatrix read_projection(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) {
    throw ParseError(1, "empty projection file");
  }
  int p = 0;
  int q = 0;
  unsigned long long seed = 0;
  if (std::sscanf(line.c_str(), "# projection p=%d q=%d seed=%llu", &p, &q, &seed) != 3) {
    throw ParseError(1, "expected '# projection p=<p> q=<q> seed=<seed>'");
  }
  if (q < 1 || q > p) {
    throw ParseError(1, "invalid projection dimensions");
  }
  Eigen::MatrixXd entries(q, p);
  for (int i = 0; i < q; ++i) {
    if (!std::getline(in, line)) {
      throw ParseError(i + 2, "missing projection row");
    }
    auto fields = split_csv_line(line);
    if (static_cast<int>(fields.size()) != p) {
      throw ParseError(i + 2, "expected " + std::to_string(p) + " columns");
    }
    for (int j = 0; j < p; ++j) {
      try {
        std::size_t used = 0;
        entries(i, j) = std::stod(fields[j], &used);
      } catch (const std::exception&) {
        throw ParseError(i + 2, "bad number '" + fields[j] + "'");
      }
    }
  }
  ProjectionMatrix out = projection_from_entries(std::move(entries), seed);
  return out;
}

}  // namespace sparsema
