#pragma once

// Pairwise projected F statistics, their maximum, and the pooled (BF^P) and
// pairwise (BF^I) Bayes factors.

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "rpbf/dataset.hpp"
#include "rpbf/error.hpp"
#include "rpbf/linalg.hpp"
#include "rpbf/randproj.hpp"
#include "rpbf/rng.hpp"

namespace rpbf {

/// Covariance pooling behind the statistic: all groups (BF^P) or the two
/// groups of each pair (BF^I).
enum class CovarianceMode { pooled, pairwise };

inline const char* to_string(CovarianceMode m) { return m == CovarianceMode::pooled ? "pooled" : "pairwise"; }

inline CovarianceMode parse_covariance_mode(const std::string& s) {
  if (s == "pooled") return CovarianceMode::pooled;
  if (s == "pairwise") return CovarianceMode::pairwise;
  throw DomainError("unknown mode '" + s + "' (expected pooled or pairwise)");
}

/// Degree-of-freedom bookkeeping for one pair under one mode.
struct PairDof {
  double cov_dof;   // N - G (pooled) or N_ij - 2 (pairwise)
  double dof2;      // N - m - (G - 1) or N_ij - m - 1
  double exponent;  // N - 1 or N_ij - 1
  double n0;        // (1/n_i + 1/n_j)^{-1}
};

inline PairDof pair_dof(const std::vector<int>& sizes, GroupPair pair, int m, CovarianceMode mode) {
  const double n_i = sizes.at(static_cast<std::size_t>(pair.i));
  const double n_j = sizes.at(static_cast<std::size_t>(pair.j));
  const double n0 = harmonic_weight(n_i, n_j);
  if (mode == CovarianceMode::pooled) {
    const double total = std::accumulate(sizes.begin(), sizes.end(), 0.0);
    const double groups = static_cast<double>(sizes.size());
    return {total - groups, total - m - (groups - 1.0), total - 1.0, n0};
  }
  const double nij = n_i + n_j;
  return {nij - 2.0, nij - m - 1.0, nij - 1.0, n0};
}

/// Largest m for which every pair has a positive second F degree of freedom.
inline int max_feasible_m(const std::vector<int>& sizes, CovarianceMode mode) {
  const int total = std::accumulate(sizes.begin(), sizes.end(), 0);
  const int groups = static_cast<int>(sizes.size());
  if (mode == CovarianceMode::pooled) return total - groups;
  int best = total;
  for (const auto& pr : all_pairs(groups))
    best = std::min(best, sizes[static_cast<std::size_t>(pr.i)] + sizes[static_cast<std::size_t>(pr.j)] - 2);
  return best;
}

struct PairStat {
  GroupPair pair;
  double f = 0.0;
  double n0 = 0.0;
  double dof2 = 0.0;
};

struct FMax {
  double value = 0.0;
  GroupPair argpair;
  std::vector<PairStat> all;
};

struct BayesFactorValue {
  double log_bf = 0.0;
  CovarianceMode mode = CovarianceMode::pooled;
  double eta = 0.0;
  int m = 0;
  double exponent = 0.0;  // N - 1 or N_ij - 1
  int num_groups = 0;
};

/// Pooled within-group covariance: sum_g (n_g - 1) S_g / (N - G).
inline Eigen::MatrixXd pooled_covariance(const GroupedDataset& ds) {
  const Eigen::Index p = ds.p();
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(p, p);
  for (const auto& g : ds.groups()) {
    const Eigen::MatrixXd centered = g.data.rowwise() - g.data.colwise().mean();
    s.noalias() += centered.transpose() * centered;
  }
  return s / static_cast<double>(ds.total() - ds.num_groups());
}

/// Two-group pooled covariance ((n_i - 1) S_i + (n_j - 1) S_j) / (n_i + n_j - 2).
inline Eigen::MatrixXd pairwise_covariance(const GroupedDataset& ds, int i, int j) {
  if (i == j) throw DomainError("pairwise_covariance requires two distinct groups");
  const Eigen::Index p = ds.p();
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(p, p);
  for (int g : {i, j}) {
    const Eigen::MatrixXd& x = ds.group(g).data;
    const Eigen::MatrixXd centered = x.rowwise() - x.colwise().mean();
    s.noalias() += centered.transpose() * centered;
  }
  return s / static_cast<double>(ds.group(i).data.rows() + ds.group(j).data.rows() - 2);
}

/// Group means and within-group residuals, computed after subtracting the
/// dataset's first observation from every row. A common shift of all
/// observations therefore leaves every downstream quantity unchanged
/// whenever the shifted values are exactly representable.
class GroupSummary {
 public:
  explicit GroupSummary(const GroupedDataset& ds) : sizes_(ds.sizes()) {
    const Eigen::Index p = ds.p();
    const Eigen::RowVectorXd ref = ds.group(0).data.row(0);
    residuals_.resize(ds.total(), p);
    means_.resize(ds.num_groups(), p);
    Eigen::Index row = 0;
    for (int g = 0; g < ds.num_groups(); ++g) {
      const Eigen::MatrixXd shifted = ds.group(g).data.rowwise() - ref;
      means_.row(g) = shifted.colwise().mean();
      residuals_.middleRows(row, shifted.rows()) = shifted.rowwise() - means_.row(g);
      offsets_.push_back(row);
      row += shifted.rows();
    }
  }

  const std::vector<int>& sizes() const noexcept { return sizes_; }
  Eigen::Index p() const noexcept { return means_.cols(); }
  const Eigen::MatrixXd& residuals() const noexcept { return residuals_; }
  const Eigen::MatrixXd& means() const noexcept { return means_; }
  Eigen::Index offset(int g) const { return offsets_.at(static_cast<std::size_t>(g)); }

 private:
  std::vector<int> sizes_;
  std::vector<Eigen::Index> offsets_;
  Eigen::MatrixXd residuals_;  // N x p
  Eigen::MatrixXd means_;      // G x p
};

/// Sufficient statistics of the projected data: group means (G x m) and
/// within-group scatter matrices sum (y - ybar)(y - ybar)' (lower triangle).
struct ProjectedGroups {
  std::vector<int> sizes;
  Eigen::MatrixXd means;
  std::vector<Eigen::MatrixXd> scatter;

  int m() const noexcept { return static_cast<int>(means.cols()); }
};

/// Projects onto the span of `basis` (p x m). Only the span matters for the
/// F statistics, so `basis` may be a raw seed or its orthonormal Q factor.
inline ProjectedGroups project(const GroupSummary& summary, const Eigen::MatrixXd& basis) {
  if (basis.rows() != summary.p()) throw DomainError("projection has wrong ambient dimension");
  const Eigen::Index m = basis.cols();
  ProjectedGroups out;
  out.sizes = summary.sizes();
  out.means.noalias() = summary.means() * basis;
  const Eigen::MatrixXd y = summary.residuals() * basis;
  for (std::size_t g = 0; g < out.sizes.size(); ++g) {
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(m, m);
    w.selfadjointView<Eigen::Lower>().rankUpdate(
        y.middleRows(summary.offset(static_cast<int>(g)), out.sizes[g]).transpose());
    out.scatter.push_back(std::move(w));
  }
  return out;
}

/// Projected data for a null replicate drawn directly in m dimensions: each
/// group holds n_g iid N(0, I_m) observations.
inline ProjectedGroups simulate_projected_null(const std::vector<int>& sizes, int m, RngStream& rng) {
  ProjectedGroups out;
  out.sizes = sizes;
  out.means.resize(static_cast<Eigen::Index>(sizes.size()), m);
  for (std::size_t g = 0; g < sizes.size(); ++g) {
    Eigen::MatrixXd y = standard_normal_matrix(sizes[g], m, rng);
    const Eigen::RowVectorXd mean = y.colwise().mean();
    out.means.row(static_cast<Eigen::Index>(g)) = mean;
    y.rowwise() -= mean;
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(m, m);
    w.selfadjointView<Eigen::Lower>().rankUpdate(y.transpose());
    out.scatter.push_back(std::move(w));
  }
  return out;
}

namespace detail {

inline void require_feasible(const std::vector<int>& sizes, int m, CovarianceMode mode) {
  if (m < 1) throw DomainError("projection dimension must be at least 1");
  if (m > max_feasible_m(sizes, mode))
    throw DomainError("projection dimension m=" + std::to_string(m) + " is infeasible for " + to_string(mode) +
                      " mode (maximum " + std::to_string(max_feasible_m(sizes, mode)) + ")");
}

inline std::string pair_name(GroupPair pr) {
  return "(" + std::to_string(pr.i + 1) + "," + std::to_string(pr.j + 1) + ")";
}

// f = dof2 / (cov_dof m) * n0 * d' S^{-1} d with S = W / cov_dof, i.e.
// dof2 / m * n0 * d' W^{-1} d.
inline double f_from_factor(const Eigen::LLT<Eigen::MatrixXd>& llt, const Eigen::VectorXd& d, const PairDof& dof,
                            int m) {
  const Eigen::VectorXd z = llt.matrixL().solve(d);
  return dof.dof2 / m * dof.n0 * z.squaredNorm();
}

}  // namespace detail

/// All pairwise statistics for one projection, in lexicographic pair order.
inline std::vector<PairStat> pair_statistics(const ProjectedGroups& pg, CovarianceMode mode) {
  const int m = pg.m();
  detail::require_feasible(pg.sizes, m, mode);
  const auto pairs = all_pairs(static_cast<int>(pg.sizes.size()));
  std::vector<PairStat> out;
  out.reserve(pairs.size());
  if (mode == CovarianceMode::pooled) {
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(m, m);
    for (const auto& s : pg.scatter) w += s;
    const auto llt = detail::checked_llt(w, "singular projected Gram matrix (pooled mode)");
    for (const auto& pr : pairs) {
      const PairDof dof = pair_dof(pg.sizes, pr, m, mode);
      const Eigen::VectorXd d = (pg.means.row(pr.i) - pg.means.row(pr.j)).transpose();
      out.push_back({pr, detail::f_from_factor(llt, d, dof, m), dof.n0, dof.dof2});
    }
    return out;
  }
  for (const auto& pr : pairs) {
    const PairDof dof = pair_dof(pg.sizes, pr, m, mode);
    const Eigen::MatrixXd w =
        pg.scatter[static_cast<std::size_t>(pr.i)] + pg.scatter[static_cast<std::size_t>(pr.j)];
    const auto llt =
        detail::checked_llt(w, "singular projected Gram matrix for pair " + detail::pair_name(pr) + " (pairwise mode)");
    const Eigen::VectorXd d = (pg.means.row(pr.i) - pg.means.row(pr.j)).transpose();
    out.push_back({pr, detail::f_from_factor(llt, d, dof, m), dof.n0, dof.dof2});
  }
  return out;
}

/// Maximum over pairs; exact ties go to the lexicographically smallest pair.
inline FMax fmax_of(std::vector<PairStat> stats) {
  if (stats.empty()) throw DomainError("fmax_of requires at least one pair");
  FMax out;
  out.value = stats.front().f;
  out.argpair = stats.front().pair;
  for (const auto& s : stats) {
    if (s.f > out.value) {
      out.value = s.f;
      out.argpair = s.pair;
    }
  }
  out.all = std::move(stats);
  return out;
}

/// Projected F statistic for one pair of groups.
inline PairStat f_pair(const GroupedDataset& ds, const ProjectionMatrix& phi, int i, int j, CovarianceMode mode) {
  if (i < 0 || j >= ds.num_groups() || i >= j) throw DomainError("f_pair requires 0 <= i < j < G");
  const ProjectedGroups pg = project(GroupSummary(ds), phi.columns());
  for (const auto& s : pair_statistics(pg, mode))
    if (s.pair == GroupPair{i, j}) return s;
  throw DomainError("pair not found");
}

/// All pairwise statistics under one projection and their maximum.
inline FMax f_max(const GroupedDataset& ds, const ProjectionMatrix& phi, CovarianceMode mode) {
  return fmax_of(pair_statistics(project(GroupSummary(ds), phi.columns()), mode));
}

/// log BF = -(m/2) log(1 + eta) - (E/2) log(1 - (eta/(1+eta)) U), where
/// U = m f / (m f + dof2) and E is the exponent base (N - 1 or N_ij - 1).
inline double log_bf(double f, double m, double dof2, double exponent, double eta) {
  if (!(f >= 0.0)) throw DomainError("Bayes factor requires f >= 0");
  if (!(eta > 0.0)) throw DomainError("Bayes factor requires eta > 0");
  const double u = m * f / (m * f + dof2);
  return -0.5 * m * std::log1p(eta) - 0.5 * exponent * std::log1p(-eta / (1.0 + eta) * u);
}

/// Bayes factor of the f^max statistic, using the argmax pair's degrees of freedom.
inline BayesFactorValue log_bayes_factor(const FMax& fmax, int m, const std::vector<int>& sizes, double eta,
                                         CovarianceMode mode) {
  const PairDof dof = pair_dof(sizes, fmax.argpair, m, mode);
  BayesFactorValue out;
  out.log_bf = log_bf(fmax.value, m, dof.dof2, dof.exponent, eta);
  out.mode = mode;
  out.eta = eta;
  out.m = m;
  out.exponent = dof.exponent;
  out.num_groups = static_cast<int>(sizes.size());
  return out;
}

}  // namespace rpbf
