#pragma once

// Automatic choice of the projection dimension, Monte Carlo null of f^max,
// prior scale tau0, and evidence threshold gamma.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rpbf/dataset.hpp"
#include "rpbf/distributions.hpp"
#include "rpbf/error.hpp"
#include "rpbf/parallel.hpp"
#include "rpbf/randproj.hpp"
#include "rpbf/rng.hpp"
#include "rpbf/teststat.hpp"

namespace rpbf {

/// How select_m turns group sizes into a projection dimension.
///
/// - pooled: argmin_m of the upper-alpha quantile of F(m, N - m - (G - 1)).
/// - pairwise_smallest_group: argmin_m of the quantile of F(m, 2 n_min - m - 1),
///   the pairwise form evaluated at the most constrained pair size.
/// - pairwise_min_over_pairs: the smallest of the per-pair argmins of
///   F(m, N_ij - m - 1).
enum class MRule { pooled, pairwise_smallest_group, pairwise_min_over_pairs };

inline const char* to_string(MRule r) {
  switch (r) {
    case MRule::pooled: return "pooled";
    case MRule::pairwise_smallest_group: return "pairwise_smallest_group";
    case MRule::pairwise_min_over_pairs: return "pairwise_min_over_pairs";
  }
  return "?";
}

inline MRule parse_m_rule(const std::string& s) {
  if (s == "pooled") return MRule::pooled;
  if (s == "pairwise_smallest_group" || s == "pairwise") return MRule::pairwise_smallest_group;
  if (s == "pairwise_min_over_pairs") return MRule::pairwise_min_over_pairs;
  throw DomainError("unknown m rule '" + s + "'");
}

namespace detail {

// argmin over m in [1, max_m] of f_upper_quantile(alpha, m, dof2(m)); ties to the smallest m.
template <typename Dof2>
int argmin_quantile(double alpha, int max_m, Dof2&& dof2) {
  if (max_m < 1) throw DomainError("select_m: empty feasible range for the projection dimension");
  int best_m = 1;
  double best = std::numeric_limits<double>::infinity();
  for (int m = 1; m <= max_m; ++m) {
    const double q = f_upper_quantile(alpha, m, dof2(m));
    if (q < best) {
      best = q;
      best_m = m;
    }
  }
  return best_m;
}

inline void require_sizes(const std::vector<int>& sizes) {
  if (sizes.size() < 2) throw DomainError("at least two groups are required");
  for (int n : sizes)
    if (n < 2) throw DomainError("every group needs at least 2 observations");
}

}  // namespace detail

/// Projection dimension minimizing the upper-alpha F quantile; independent of p.
inline int select_m(const std::vector<int>& sizes, double alpha, MRule rule) {
  detail::require_sizes(sizes);
  if (!(alpha > 0.0 && alpha < 0.5)) throw DomainError("select_m requires alpha in (0, 0.5)");
  const int groups = static_cast<int>(sizes.size());
  const int total = std::accumulate(sizes.begin(), sizes.end(), 0);
  switch (rule) {
    case MRule::pooled:
      return detail::argmin_quantile(alpha, total - groups - 1,
                                     [&](int m) { return static_cast<double>(total - m - (groups - 1)); });
    case MRule::pairwise_smallest_group: {
      const int nij = 2 * *std::min_element(sizes.begin(), sizes.end());
      return detail::argmin_quantile(alpha, nij - 3, [&](int m) { return static_cast<double>(nij - m - 1); });
    }
    case MRule::pairwise_min_over_pairs: {
      int best = std::numeric_limits<int>::max();
      for (const auto& pr : all_pairs(groups)) {
        const int nij = sizes[static_cast<std::size_t>(pr.i)] + sizes[static_cast<std::size_t>(pr.j)];
        best = std::min(best, detail::argmin_quantile(alpha, nij - 3,
                                                      [&](int m) { return static_cast<double>(nij - m - 1); }));
      }
      return best;
    }
  }
  throw DomainError("unknown m rule");
}

/// Mode-keyed convenience: pooled mode uses the pooled rule, pairwise mode the
/// smallest-group pairwise rule.
inline int select_m(const std::vector<int>& sizes, double alpha, CovarianceMode mode) {
  return select_m(sizes, alpha, mode == CovarianceMode::pooled ? MRule::pooled : MRule::pairwise_smallest_group);
}

enum class NullStatistic { fmax, psi };

inline const char* to_string(NullStatistic k) { return k == NullStatistic::fmax ? "fmax" : "psi"; }

/// Sorted Monte Carlo sample of a null statistic.
class EmpiricalNull {
 public:
  EmpiricalNull(std::vector<double> values, NullStatistic kind) : values_(std::move(values)), kind_(kind) {
    if (values_.empty()) throw DomainError("EmpiricalNull requires at least one replicate");
    std::sort(values_.begin(), values_.end());
  }

  const std::vector<double>& sorted_values() const noexcept { return values_; }
  std::size_t reps() const noexcept { return values_.size(); }
  NullStatistic kind() const noexcept { return kind_; }

  /// Upper-alpha quantile as the order statistic of rank ceil((1 - alpha) reps).
  double upper_quantile(double alpha) const {
    if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("upper_quantile requires alpha in (0, 1)");
    const double r = static_cast<double>(values_.size());
    auto rank = static_cast<std::size_t>(std::ceil((1.0 - alpha) * r - 1e-9));
    rank = std::clamp<std::size_t>(rank, 1, values_.size());
    return values_[rank - 1];
  }

  /// Number of replicates with value >= x.
  std::size_t count_at_least(double x) const {
    return static_cast<std::size_t>(values_.end() - std::lower_bound(values_.begin(), values_.end(), x));
  }

  /// Add-one Monte Carlo p-value (#{null >= x} + 1) / (reps + 1).
  double p_value(double x) const {
    return (static_cast<double>(count_at_least(x)) + 1.0) / (static_cast<double>(values_.size()) + 1.0);
  }

 private:
  std::vector<double> values_;
  NullStatistic kind_;
};

/// Null sample of f^max, simulated directly in the projected dimension.
///
/// Under H0 with a common covariance and any fixed projection, the projected
/// observations are Gaussian with a common covariance, and the f statistics
/// are invariant to affine maps of the projected space, so iid N(0, I_m)
/// groups give the exact joint law of {f_ij}.
inline EmpiricalNull null_fmax(const std::vector<int>& sizes, int m, CovarianceMode mode, std::size_t reps,
                               const RngStream& rng, unsigned threads = 0) {
  detail::require_sizes(sizes);
  detail::require_feasible(sizes, m, mode);
  if (reps < 1) throw DomainError("null_fmax requires at least one replicate");
  std::vector<double> values(reps);
  parallel_for(reps, threads, [&](std::size_t r) {
    RngStream local = rng.derive(static_cast<std::uint64_t>(r));
    values[r] = fmax_of(pair_statistics(simulate_projected_null(sizes, m, local), mode)).value;
  });
  return EmpiricalNull(std::move(values), NullStatistic::fmax);
}

/// Pooled and pairwise f^max nulls from the same replicates. Each sample is
/// identical to the one null_fmax returns for that mode with the same stream.
inline std::pair<EmpiricalNull, EmpiricalNull> null_fmax_both(const std::vector<int>& sizes, int m, std::size_t reps,
                                                              const RngStream& rng, unsigned threads = 0) {
  detail::require_sizes(sizes);
  detail::require_feasible(sizes, m, CovarianceMode::pooled);
  detail::require_feasible(sizes, m, CovarianceMode::pairwise);
  if (reps < 1) throw DomainError("null_fmax requires at least one replicate");
  std::vector<double> pooled(reps), pairwise(reps);
  parallel_for(reps, threads, [&](std::size_t r) {
    RngStream local = rng.derive(static_cast<std::uint64_t>(r));
    const ProjectedGroups pg = simulate_projected_null(sizes, m, local);
    pooled[r] = fmax_of(pair_statistics(pg, CovarianceMode::pooled)).value;
    pairwise[r] = fmax_of(pair_statistics(pg, CovarianceMode::pairwise)).value;
  });
  return {EmpiricalNull(std::move(pooled), NullStatistic::fmax), EmpiricalNull(std::move(pairwise), NullStatistic::fmax)};
}

/// tau0_ij = n0_ij / (fmax0 - 1) for every pair.
inline std::vector<std::pair<GroupPair, double>> tau0_from_null(const std::vector<int>& sizes, double fmax0) {
  detail::require_sizes(sizes);
  if (!(fmax0 > 1.0))
    throw NumericError("tau0 requires the null f^max quantile to exceed 1 (got " + std::to_string(fmax0) + ")");
  std::vector<std::pair<GroupPair, double>> out;
  for (const auto& pr : all_pairs(static_cast<int>(sizes.size()))) {
    const double n0 = harmonic_weight(sizes[static_cast<std::size_t>(pr.i)], sizes[static_cast<std::size_t>(pr.j)]);
    out.emplace_back(pr, n0 / (fmax0 - 1.0));
  }
  return out;
}

struct GammaResult {
  double gamma = 0.0;
  double log_gamma = 0.0;
  double c = 0.0;             // threshold on U = m f / (m f + dof2) that matches f >= fmax0
  double c_closed_form = 0.0;  // C solved from the (1 + eta)/eta-scaled closed form, reported only
};

/// Evidence threshold gamma = (1 + eta)^{-m/2} {1 - eta C / (1 + eta)}^{-E/2}.
///
/// C is the Beta-scale image of fmax0, so BF >= gamma exactly when
/// f >= fmax0. The closed form that carries an extra (1 + eta)/eta factor
/// yields a different C; it is returned for reference and not used.
inline GammaResult gamma_threshold(double eta, int m, double dof2, double exponent, double fmax0) {
  if (!(eta > 0.0)) throw DomainError("gamma_threshold requires eta > 0");
  if (!(fmax0 > 0.0) || !(dof2 > 0.0) || m < 1) throw DomainError("gamma_threshold: invalid inputs");
  GammaResult out;
  out.c = m * fmax0 / (m * fmax0 + dof2);
  const double scaled = fmax0 * eta / (1.0 + eta);
  out.c_closed_form = m * scaled / (m * scaled + dof2);
  if (!(out.c > 0.0 && out.c < 1.0))
    throw NumericError("gamma_threshold: C=" + std::to_string(out.c) + " outside (0,1) for eta=" +
                       std::to_string(eta) + ", m=" + std::to_string(m) + ", dof2=" + std::to_string(dof2) +
                       ", fmax0=" + std::to_string(fmax0));
  out.log_gamma = -0.5 * m * std::log1p(eta) - 0.5 * exponent * std::log1p(-eta / (1.0 + eta) * out.c);
  out.gamma = std::exp(out.log_gamma);
  const double check = log_bf(fmax0, m, dof2, exponent, eta);
  if (!(std::fabs(check - out.log_gamma) <= 1e-9 * std::max(1.0, std::fabs(out.log_gamma))))
    throw NumericError("gamma_threshold: BF(fmax0) does not reproduce gamma");
  return out;
}

struct PairCalibration {
  GroupPair pair;
  double n0 = 0.0;
  double tau0 = 0.0;
  double eta = 0.0;
  double dof2 = 0.0;
  double exponent = 0.0;
  double gamma = 0.0;
  double log_gamma = 0.0;
  double c = 0.0;
  double c_closed_form = 0.0;
};

/// Null quantile of the ensemble statistic and the settings it was computed under.
struct PsiCalibration {
  double psi0 = 0.0;
  std::size_t reps = 0;
  Eigen::Index p = 0;
  int num_projections = 0;
  ProjectionKind proj_kind = ProjectionKind::dense;
  double sparse_density = kDefaultSparseDensity;
  std::vector<double> sorted_values;  // the null sample, for p-values
};

struct CalibratedParams {
  std::vector<int> sizes;
  CovarianceMode mode = CovarianceMode::pairwise;
  MRule m_rule = MRule::pairwise_smallest_group;
  int m = 0;
  double alpha = 0.05;
  double fmax0 = 0.0;
  std::vector<PairCalibration> pairs;
  double gamma = 0.0;  // largest per-pair gamma; all coincide in pooled mode
  std::size_t mc_reps = 0;
  std::uint64_t seed = 0;
  std::optional<PsiCalibration> psi;

  const PairCalibration& pair(GroupPair pr) const {
    for (const auto& pc : pairs)
      if (pc.pair == pr) return pc;
    throw DomainError("no calibration for pair " + detail::pair_name(pr));
  }
};

struct CalibrationOptions {
  double alpha = 0.05;
  CovarianceMode mode = CovarianceMode::pairwise;
  MRule m_rule = MRule::pairwise_smallest_group;
  std::optional<int> m_override;
  std::size_t mc_reps = 10000;
  std::uint64_t seed = 0;
  unsigned threads = 0;
};

/// Per-pair tau0, eta, and gamma for a given f^max null quantile.
inline std::vector<PairCalibration> calibrate_pairs(const std::vector<int>& sizes, int m, CovarianceMode mode,
                                                    double fmax0) {
  std::vector<PairCalibration> out;
  for (const auto& [pr, tau0] : tau0_from_null(sizes, fmax0)) {
    const PairDof dof = pair_dof(sizes, pr, m, mode);
    PairCalibration pc;
    pc.pair = pr;
    pc.n0 = dof.n0;
    pc.tau0 = tau0;
    pc.eta = dof.n0 / tau0;
    pc.dof2 = dof.dof2;
    pc.exponent = dof.exponent;
    const GammaResult g = gamma_threshold(pc.eta, m, dof.dof2, dof.exponent, fmax0);
    pc.gamma = g.gamma;
    pc.log_gamma = g.log_gamma;
    pc.c = g.c;
    pc.c_closed_form = g.c_closed_form;
    out.push_back(pc);
  }
  return out;
}

namespace detail {

inline CalibratedParams params_shell(const std::vector<int>& sizes, const CalibrationOptions& opt,
                                     CovarianceMode mode) {
  require_sizes(sizes);
  if (!(opt.alpha > 0.0 && opt.alpha < 0.5)) throw DomainError("alpha must lie in (0, 0.5)");
  if (opt.mc_reps < 1) throw DomainError("at least one Monte Carlo replicate is required");
  CalibratedParams params;
  params.sizes = sizes;
  params.mode = mode;
  params.m_rule = opt.m_rule;
  params.alpha = opt.alpha;
  params.mc_reps = opt.mc_reps;
  params.seed = opt.seed;
  params.m = opt.m_override ? *opt.m_override : select_m(sizes, opt.alpha, opt.m_rule);
  return params;
}

inline void finish_params(CalibratedParams& params, const EmpiricalNull& null) {
  params.fmax0 = null.upper_quantile(params.alpha);
  params.pairs = calibrate_pairs(params.sizes, params.m, params.mode, params.fmax0);
  params.gamma = 0.0;
  for (const auto& pc : params.pairs) params.gamma = std::max(params.gamma, pc.gamma);
}

}  // namespace detail

/// select_m -> null_fmax -> tau0 -> gamma. The null uses the substream
/// "null-fmax" of the seed.
inline CalibratedParams calibrate(const std::vector<int>& sizes, const CalibrationOptions& opt) {
  CalibratedParams params = detail::params_shell(sizes, opt, opt.mode);
  detail::require_feasible(sizes, params.m, opt.mode);
  const RngStream root(opt.seed);
  detail::finish_params(params,
                        null_fmax(sizes, params.m, opt.mode, opt.mc_reps, root.derive("null-fmax"), opt.threads));
  return params;
}

/// Both modes at once, sharing the null replicates; opt.mode is ignored.
/// Each result equals calibrate() run with that mode.
inline std::pair<CalibratedParams, CalibratedParams> calibrate_both(const std::vector<int>& sizes,
                                                                    const CalibrationOptions& opt) {
  CalibratedParams pooled = detail::params_shell(sizes, opt, CovarianceMode::pooled);
  CalibratedParams pairwise = detail::params_shell(sizes, opt, CovarianceMode::pairwise);
  const RngStream root(opt.seed);
  const auto nulls = null_fmax_both(sizes, pooled.m, opt.mc_reps, root.derive("null-fmax"), opt.threads);
  detail::finish_params(pooled, nulls.first);
  detail::finish_params(pairwise, nulls.second);
  return {std::move(pooled), std::move(pairwise)};
}

}  // namespace rpbf
