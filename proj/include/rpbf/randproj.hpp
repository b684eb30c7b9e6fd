#pragma once

// Column-orthonormal random projections: dense Gaussian and sparse +-1 seeds,
// orthonormalized by Householder QR.

#include <Eigen/Core>
#include <Eigen/QR>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "rpbf/error.hpp"
#include "rpbf/rng.hpp"

namespace rpbf {

enum class ProjectionKind { dense, sparse };

inline constexpr double kDefaultSparseDensity = 1.0 / 3.0;

inline const char* to_string(ProjectionKind k) { return k == ProjectionKind::dense ? "dense" : "sparse"; }

inline ProjectionKind parse_projection_kind(const std::string& s) {
  if (s == "dense") return ProjectionKind::dense;
  if (s == "sparse") return ProjectionKind::sparse;
  throw DomainError("unknown projection kind '" + s + "' (expected dense or sparse)");
}

struct Provenance {
  std::uint64_t seed = 0;
  std::uint64_t stream_id = 0;
};

/// p x m matrix with orthonormal columns.
class ProjectionMatrix {
 public:
  ProjectionMatrix(Eigen::MatrixXd columns, ProjectionKind kind, Provenance provenance)
      : columns_(std::move(columns)), kind_(kind), provenance_(provenance) {}

  Eigen::Index p() const noexcept { return columns_.rows(); }
  Eigen::Index m() const noexcept { return columns_.cols(); }
  const Eigen::MatrixXd& columns() const noexcept { return columns_; }
  ProjectionKind kind() const noexcept { return kind_; }
  Provenance provenance() const noexcept { return provenance_; }

  /// max |Phi' Phi - I|.
  double orthonormality_error() const {
    return (columns_.transpose() * columns_ - Eigen::MatrixXd::Identity(m(), m())).cwiseAbs().maxCoeff();
  }

 private:
  Eigen::MatrixXd columns_;
  ProjectionKind kind_;
  Provenance provenance_;
};

namespace detail {

inline void require_dims(Eigen::Index p, Eigen::Index m) {
  if (m < 1 || m >= p)
    throw DomainError("projection requires 1 <= m < p (got p=" + std::to_string(p) + ", m=" + std::to_string(m) + ")");
}

inline Eigen::MatrixXd dense_seed(Eigen::Index p, Eigen::Index m, RngStream& rng) {
  Eigen::MatrixXd seed(p, m);
  for (Eigen::Index j = 0; j < m; ++j)
    for (Eigen::Index i = 0; i < p; ++i) seed(i, j) = rng.normal();
  return seed;
}

inline Eigen::MatrixXd sparse_seed(Eigen::Index p, Eigen::Index m, double density, RngStream& rng) {
  if (!(density > 0.0 && density <= 1.0)) throw DomainError("sparse projection density must lie in (0, 1]");
  Eigen::MatrixXd seed(p, m);
  const double half = 0.5 * density;
  for (Eigen::Index j = 0; j < m; ++j) {
    for (int attempt = 0;; ++attempt) {
      if (attempt == 100)
        throw NumericError("sparse projection: column " + std::to_string(j) +
                           " stayed all-zero after 100 draws; density too low");
      bool nonzero = false;
      for (Eigen::Index i = 0; i < p; ++i) {
        const double u = rng.uniform();
        const double v = u < half ? 1.0 : (u < density ? -1.0 : 0.0);
        seed(i, j) = v;
        nonzero = nonzero || v != 0.0;
      }
      if (nonzero) break;
    }
  }
  return seed;
}

}  // namespace detail

/// Raw projection seed: iid N(0,1) entries (dense) or +-1 with probability
/// density/2 each and 0 otherwise, no all-zero columns (sparse).
///
/// The projected F statistics depend on Phi only through its column span, so
/// the seed can stand in for its orthonormalized Q factor when only those
/// statistics are needed.
inline Eigen::MatrixXd draw_projection_seed(ProjectionKind kind, Eigen::Index p, Eigen::Index m, RngStream& rng,
                                            double density = kDefaultSparseDensity) {
  detail::require_dims(p, m);
  return kind == ProjectionKind::dense ? detail::dense_seed(p, m, rng) : detail::sparse_seed(p, m, density, rng);
}

/// Q factor of the thin QR factorization of `seed`, with each column's
/// largest-magnitude entry made positive.
inline ProjectionMatrix orthonormalize(const Eigen::MatrixXd& seed, ProjectionKind kind = ProjectionKind::dense,
                                       Provenance provenance = {}) {
  const Eigen::Index p = seed.rows();
  const Eigen::Index m = seed.cols();
  if (m < 1 || m > p) throw DomainError("orthonormalize requires 1 <= m <= p");
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(seed);
  const Eigen::VectorXd rdiag = qr.matrixQR().diagonal().cwiseAbs();
  const double scale = seed.colwise().norm().maxCoeff();
  if (!(rdiag.minCoeff() > 1e-10 * scale)) throw NumericError("orthonormalize: seed is rank deficient");
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(p, m);
  for (Eigen::Index j = 0; j < m; ++j) {
    Eigen::Index arg = 0;
    q.col(j).cwiseAbs().maxCoeff(&arg);
    if (q(arg, j) < 0.0) q.col(j) = -q.col(j);
  }
  return ProjectionMatrix(std::move(q), kind, provenance);
}

/// Dense projection: Gaussian seed, orthonormalized.
inline ProjectionMatrix generate_dense(Eigen::Index p, Eigen::Index m, RngStream& rng) {
  detail::require_dims(p, m);
  const Provenance prov{rng.seed(), rng.stream_id()};
  for (int attempt = 0;; ++attempt) {
    try {
      return orthonormalize(detail::dense_seed(p, m, rng), ProjectionKind::dense, prov);
    } catch (const NumericError&) {
      if (attempt == 1) throw;
    }
  }
}

/// Sparse projection: +-1 seed with the given density, orthonormalized.
inline ProjectionMatrix generate_sparse(Eigen::Index p, Eigen::Index m, double density, RngStream& rng) {
  detail::require_dims(p, m);
  const Provenance prov{rng.seed(), rng.stream_id()};
  for (int attempt = 0;; ++attempt) {
    try {
      return orthonormalize(detail::sparse_seed(p, m, density, rng), ProjectionKind::sparse, prov);
    } catch (const NumericError&) {
      if (attempt == 99) throw;
    }
  }
}

inline ProjectionMatrix generate_projection(ProjectionKind kind, Eigen::Index p, Eigen::Index m, RngStream& rng,
                                            double density = kDefaultSparseDensity) {
  return kind == ProjectionKind::dense ? generate_dense(p, m, rng) : generate_sparse(p, m, density, rng);
}

namespace detail {

template <typename T>
void write_le(std::ostream& out, T v) {
  static_assert(sizeof(T) == 8);
  std::uint64_t bits = 0;
  std::memcpy(&bits, &v, 8);
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
  out.write(reinterpret_cast<const char*>(&bits), 8);
}

template <typename T>
T read_le(std::istream& in) {
  std::uint64_t bits = 0;
  in.read(reinterpret_cast<char*>(&bits), 8);
  if (!in) throw DataError(DataError::Code::parse, "truncated projection dump");
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
  T v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace detail

/// Binary dump: 16-byte header (p, m as little-endian uint64) followed by the
/// p x m entries row-major as little-endian float64.
inline void write_projection_binary(const ProjectionMatrix& phi, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(DataError::Code::missing_file, "cannot write file: " + path);
  detail::write_le<std::uint64_t>(out, static_cast<std::uint64_t>(phi.p()));
  detail::write_le<std::uint64_t>(out, static_cast<std::uint64_t>(phi.m()));
  for (Eigen::Index i = 0; i < phi.p(); ++i)
    for (Eigen::Index j = 0; j < phi.m(); ++j) detail::write_le<double>(out, phi.columns()(i, j));
}

inline Eigen::MatrixXd read_projection_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(DataError::Code::missing_file, "cannot open file: " + path);
  const auto p = static_cast<Eigen::Index>(detail::read_le<std::uint64_t>(in));
  const auto m = static_cast<Eigen::Index>(detail::read_le<std::uint64_t>(in));
  Eigen::MatrixXd out(p, m);
  for (Eigen::Index i = 0; i < p; ++i)
    for (Eigen::Index j = 0; j < m; ++j) out(i, j) = detail::read_le<double>(in);
  return out;
}

}  // namespace rpbf
