#pragma once

// Ensemble statistic over many random projections, its Monte Carlo null,
// the accept/reject rule and per-pair significance proportions.

#include <Eigen/Core>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rpbf/calibration.hpp"
#include "rpbf/dataset.hpp"
#include "rpbf/distributions.hpp"
#include "rpbf/error.hpp"
#include "rpbf/linalg.hpp"
#include "rpbf/parallel.hpp"
#include "rpbf/randproj.hpp"
#include "rpbf/rng.hpp"
#include "rpbf/teststat.hpp"

namespace rpbf {

/// Threshold behind the per-pair significance counts.
enum class PairThreshold { family, marginal };

inline const char* to_string(PairThreshold t) { return t == PairThreshold::family ? "family" : "marginal"; }

inline PairThreshold parse_pair_threshold(const std::string& s) {
  if (s == "family") return PairThreshold::family;
  if (s == "marginal") return PairThreshold::marginal;
  throw DomainError("unknown pair threshold '" + s + "' (expected family or marginal)");
}

/// How null_psi simulates a null replicate.
///
/// direct draws the p-dimensional dataset and projects it. gram uses the fact
/// that, for Gaussian seeds R, the projected data X R given X have iid columns
/// N(0, X X'), and X X' is Wishart(p, I_N) under the null: it draws the
/// Bartlett factor of that Wishart matrix once per replicate and then needs
/// only N x m normals per projection. Exact in law; requires dense
/// projections and p >= N. automatic picks gram whenever it applies.
enum class PsiNullMethod { automatic, direct, gram };

inline const char* to_string(PsiNullMethod m) {
  switch (m) {
    case PsiNullMethod::automatic: return "automatic";
    case PsiNullMethod::direct: return "direct";
    case PsiNullMethod::gram: return "gram";
  }
  return "?";
}

inline PsiNullMethod parse_psi_null_method(const std::string& s) {
  if (s == "automatic" || s == "auto") return PsiNullMethod::automatic;
  if (s == "direct") return PsiNullMethod::direct;
  if (s == "gram") return PsiNullMethod::gram;
  throw DomainError("unknown null method '" + s + "'");
}

struct TestConfig {
  CovarianceMode mode = CovarianceMode::pairwise;
  ProjectionKind proj_kind = ProjectionKind::dense;
  int num_projections = 1000;
  double alpha = 0.05;
  std::size_t mc_reps_fmax = 10000;
  std::size_t mc_reps_psi = 999;
  std::uint64_t seed = 0;
  std::optional<int> m_override;
  double sparse_density = kDefaultSparseDensity;
  MRule m_rule = MRule::pairwise_smallest_group;
  PairThreshold pair_threshold = PairThreshold::family;
  PsiNullMethod psi_null_method = PsiNullMethod::automatic;
  unsigned threads = 0;

  void validate() const {
    if (num_projections < 1) throw DomainError("the number of projections must be at least 1");
    if (!(alpha > 0.0 && alpha < 0.5)) throw DomainError("alpha must lie in (0, 0.5)");
    if (mc_reps_fmax < 1 || mc_reps_psi < 1) throw DomainError("Monte Carlo replicate counts must be positive");
    if (!(sparse_density > 0.0 && sparse_density <= 1.0)) throw DomainError("sparse density must lie in (0, 1]");
  }

  CalibrationOptions calibration_options() const {
    CalibrationOptions opt;
    opt.alpha = alpha;
    opt.mode = mode;
    opt.m_rule = m_rule;
    opt.m_override = m_override;
    opt.mc_reps = mc_reps_fmax;
    opt.seed = seed;
    opt.threads = threads;
    return opt;
  }
};

struct EnsembleDiagnostics {
  int projections = 0;
  int resampled = 0;
  double log_bf_min = 0.0;
  double log_bf_median = 0.0;
  double log_bf_mean = 0.0;
  double log_bf_max = 0.0;
};

using PairCounts = std::vector<std::pair<GroupPair, int>>;

struct EnsembleResult {
  double psi = 0.0;
  int hits = 0;
  int num_projections = 0;
  PairCounts pair_hits;            // under params.mode
  PairCounts companion_pair_hits;  // under the companion's mode, when one was given
  EnsembleDiagnostics diagnostics;
};

namespace detail {

inline std::vector<double> pair_thresholds(const CalibratedParams& params, PairThreshold rule) {
  std::vector<double> out;
  for (const auto& pr : all_pairs(static_cast<int>(params.sizes.size()))) {
    if (rule == PairThreshold::family) {
      out.push_back(params.fmax0);
    } else {
      out.push_back(f_upper_quantile(params.alpha, params.m, pair_dof(params.sizes, pr, params.m, params.mode).dof2));
    }
  }
  return out;
}

struct ProjectionOutcome {
  double log_bf = 0.0;
  bool hit = false;
  std::vector<char> pair_hit;
  std::vector<char> companion_pair_hit;
};

inline ProjectionOutcome evaluate(const ProjectedGroups& pg, const CalibratedParams& params,
                                  const std::vector<double>& thresholds, const CalibratedParams* companion,
                                  const std::vector<double>& companion_thresholds) {
  ProjectionOutcome out;
  const FMax fm = fmax_of(pair_statistics(pg, params.mode));
  const PairCalibration& pc = params.pair(fm.argpair);
  out.log_bf = log_bayes_factor(fm, params.m, params.sizes, pc.eta, params.mode).log_bf;
  out.hit = out.log_bf >= pc.log_gamma;
  for (std::size_t k = 0; k < fm.all.size(); ++k) out.pair_hit.push_back(fm.all[k].f > thresholds[k] ? 1 : 0);
  if (companion != nullptr) {
    const auto stats = pair_statistics(pg, companion->mode);
    for (std::size_t k = 0; k < stats.size(); ++k)
      out.companion_pair_hit.push_back(stats[k].f > companion_thresholds[k] ? 1 : 0);
  }
  return out;
}

inline EnsembleDiagnostics summarize(std::vector<double> log_bfs, int resampled) {
  EnsembleDiagnostics d;
  d.projections = static_cast<int>(log_bfs.size());
  d.resampled = resampled;
  std::sort(log_bfs.begin(), log_bfs.end());
  const std::size_t n = log_bfs.size();
  d.log_bf_min = log_bfs.front();
  d.log_bf_max = log_bfs.back();
  d.log_bf_median = n % 2 == 1 ? log_bfs[n / 2] : 0.5 * (log_bfs[n / 2 - 1] + log_bfs[n / 2]);
  d.log_bf_mean = std::accumulate(log_bfs.begin(), log_bfs.end(), 0.0) / static_cast<double>(n);
  return d;
}

inline void check_companion(const CalibratedParams& params, const CalibratedParams* companion) {
  if (companion == nullptr) return;
  if (companion->m != params.m || companion->sizes != params.sizes)
    throw DomainError("companion calibration must share m and group sizes");
}

// Core loop. make_groups(k, stream) returns the projected data for projection
// k drawn from `stream`; a singular Gram triggers one redraw from a sibling
// stream, a second failure aborts.
template <typename MakeGroups>
EnsembleResult run_ensemble(const CalibratedParams& params, int num_projections, PairThreshold rule,
                            const RngStream& rng, const CalibratedParams* companion, unsigned threads,
                            MakeGroups&& make_groups) {
  check_companion(params, companion);
  const std::vector<double> thresholds = pair_thresholds(params, rule);
  const std::vector<double> companion_thresholds =
      companion ? pair_thresholds(*companion, rule) : std::vector<double>{};
  const auto n = static_cast<std::size_t>(num_projections);
  std::vector<ProjectionOutcome> outcomes(n);
  std::vector<char> resampled(n, 0);
  parallel_for(n, threads, [&](std::size_t k) {
    const RngStream base = rng.derive(static_cast<std::uint64_t>(k));
    try {
      RngStream s = base;
      outcomes[k] = evaluate(make_groups(s), params, thresholds, companion, companion_thresholds);
      return;
    } catch (const NumericError&) {
      resampled[k] = 1;
    }
    try {
      RngStream s = base.derive("resample");
      outcomes[k] = evaluate(make_groups(s), params, thresholds, companion, companion_thresholds);
    } catch (const NumericError& e) {
      throw NumericError("projection " + std::to_string(k) + " failed twice: " + e.what());
    }
  });

  EnsembleResult out;
  out.num_projections = num_projections;
  const auto pairs = all_pairs(static_cast<int>(params.sizes.size()));
  std::vector<int> counts(pairs.size(), 0), companion_counts(pairs.size(), 0);
  std::vector<double> log_bfs;
  log_bfs.reserve(n);
  for (const auto& o : outcomes) {
    out.hits += o.hit ? 1 : 0;
    log_bfs.push_back(o.log_bf);
    for (std::size_t q = 0; q < pairs.size(); ++q) {
      counts[q] += o.pair_hit[q];
      if (companion) companion_counts[q] += o.companion_pair_hit[q];
    }
  }
  out.psi = static_cast<double>(out.hits) / static_cast<double>(num_projections);
  for (std::size_t q = 0; q < pairs.size(); ++q) {
    out.pair_hits.emplace_back(pairs[q], counts[q]);
    if (companion) out.companion_pair_hits.emplace_back(pairs[q], companion_counts[q]);
  }
  out.diagnostics = summarize(std::move(log_bfs), std::accumulate(resampled.begin(), resampled.end(), 0));
  return out;
}

// Group means and scatter of row-stacked projected observations.
inline ProjectedGroups groups_from_rows(const std::vector<int>& sizes, const Eigen::MatrixXd& y) {
  ProjectedGroups out;
  out.sizes = sizes;
  const Eigen::Index m = y.cols();
  out.means.resize(static_cast<Eigen::Index>(sizes.size()), m);
  Eigen::Index row = 0;
  for (std::size_t g = 0; g < sizes.size(); ++g) {
    const auto block = y.middleRows(row, sizes[g]);
    const Eigen::RowVectorXd mean = block.colwise().mean();
    out.means.row(static_cast<Eigen::Index>(g)) = mean;
    const Eigen::MatrixXd centered = block.rowwise() - mean;
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(m, m);
    w.selfadjointView<Eigen::Lower>().rankUpdate(centered.transpose());
    out.scatter.push_back(std::move(w));
    row += sizes[g];
  }
  return out;
}

// Lower-triangular Bartlett factor A with A A' ~ Wishart(dof, I_n); dof >= n.
inline Eigen::MatrixXd bartlett_factor(Eigen::Index n, double dof, RngStream& rng) {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    a(i, i) = std::sqrt(rng.chi_square(dof - static_cast<double>(i)));
    for (Eigen::Index j = 0; j < i; ++j) a(i, j) = rng.normal();
  }
  return a;
}

}  // namespace detail

/// psi = fraction of projections whose Bayes factor reaches gamma.
///
/// Projection k uses substream rng.derive(k). When `companion` is given (the
/// other covariance mode, same m), its per-pair hit counts are computed on
/// the same projections. threads = 0 uses all cores.
inline EnsembleResult ensemble_statistic(const GroupedDataset& ds, const CalibratedParams& params,
                                         const TestConfig& config, const RngStream& rng,
                                         const CalibratedParams* companion = nullptr,
                                         std::optional<unsigned> threads = std::nullopt) {
  config.validate();
  if (ds.sizes() != params.sizes) throw DomainError("calibration group sizes differ from the dataset's");
  detail::require_feasible(params.sizes, params.m, params.mode);
  detail::require_dims(ds.p(), params.m);
  const GroupSummary summary(ds);
  return detail::run_ensemble(params, config.num_projections, config.pair_threshold, rng, companion,
                              threads.value_or(config.threads), [&](RngStream& s) {
                                return project(summary, draw_projection_seed(config.proj_kind, ds.p(), params.m, s,
                                                                             config.sparse_density));
                              });
}

enum class Decision { accept, reject };

inline const char* to_string(Decision d) { return d == Decision::reject ? "Reject" : "Accept"; }

/// Reject iff psi > psi0 (strict).
inline Decision decide(double psi, double psi0) {
  if (!(psi >= 0.0 && psi <= 1.0) || !(psi0 >= 0.0 && psi0 <= 1.0))
    throw DomainError("decide: psi and psi0 must lie in [0, 1]");
  return psi > psi0 ? Decision::reject : Decision::accept;
}

inline std::vector<std::pair<GroupPair, double>> pairwise_proportions(const PairCounts& counts, int n) {
  if (n < 1) throw DomainError("pairwise_proportions requires n >= 1");
  std::vector<std::pair<GroupPair, double>> out;
  for (const auto& [pr, c] : counts) {
    if (c < 0 || c > n) throw DomainError("pair count exceeds the number of projections");
    out.emplace_back(pr, static_cast<double>(c) / n);
  }
  return out;
}

inline PsiNullMethod resolve_psi_null_method(PsiNullMethod requested, ProjectionKind kind, Eigen::Index p,
                                             Eigen::Index total) {
  const bool gram_ok = kind == ProjectionKind::dense && p >= total;
  if (requested == PsiNullMethod::gram && !gram_ok)
    throw DomainError("the gram null method needs dense projections and p >= N");
  if (requested == PsiNullMethod::automatic) return gram_ok ? PsiNullMethod::gram : PsiNullMethod::direct;
  return requested;
}

/// Null sample of psi: each replicate is a p-dimensional dataset with zero
/// means and identity covariance, tested with the full ensemble. Replicate r
/// uses rng.derive(r). Replicates run in parallel; each is single-threaded.
inline EmpiricalNull null_psi(const CalibratedParams& params, const TestConfig& config, Eigen::Index p,
                              std::size_t reps, const RngStream& rng) {
  config.validate();
  if (reps < 1) throw DomainError("null_psi requires at least one replicate");
  detail::require_feasible(params.sizes, params.m, params.mode);
  detail::require_dims(p, params.m);
  const Eigen::Index total = std::accumulate(params.sizes.begin(), params.sizes.end(), Eigen::Index{0});
  const PsiNullMethod method = resolve_psi_null_method(config.psi_null_method, config.proj_kind, p, total);
  std::vector<double> values(reps);
  parallel_for(reps, config.threads, [&](std::size_t r) {
    const RngStream local = rng.derive(static_cast<std::uint64_t>(r));
    if (method == PsiNullMethod::gram) {
      RngStream ws = local.derive("wishart");
      const Eigen::MatrixXd a = detail::bartlett_factor(total, static_cast<double>(p), ws);
      values[r] = detail::run_ensemble(params, config.num_projections, config.pair_threshold,
                                       local.derive("projections"), nullptr, 1, [&](RngStream& s) {
                                         const Eigen::MatrixXd z = standard_normal_matrix(total, params.m, s);
                                         const Eigen::MatrixXd y = a.triangularView<Eigen::Lower>() * z;
                                         return detail::groups_from_rows(params.sizes, y);
                                       })
                      .psi;
      return;
    }
    RngStream ds_stream = local.derive("data");
    std::vector<Group> groups;
    for (std::size_t g = 0; g < params.sizes.size(); ++g)
      groups.push_back({"g" + std::to_string(g + 1), standard_normal_matrix(params.sizes[g], p, ds_stream)});
    const GroupedDataset ds(std::move(groups));
    values[r] = ensemble_statistic(ds, params, config, local.derive("projections"), nullptr, 1U).psi;
  });
  return EmpiricalNull(std::move(values), NullStatistic::psi);
}

/// Stores psi0 = upper-alpha quantile of null_psi in params.
inline EmpiricalNull calibrate_psi(CalibratedParams& params, const TestConfig& config, Eigen::Index p,
                                         std::size_t reps, const RngStream& rng) {
  EmpiricalNull null = null_psi(params, config, p, reps, rng);
  PsiCalibration pc;
  pc.psi0 = null.upper_quantile(params.alpha);
  pc.reps = reps;
  pc.p = p;
  pc.num_projections = config.num_projections;
  pc.proj_kind = config.proj_kind;
  pc.sparse_density = config.sparse_density;
  pc.sorted_values = null.sorted_values();
  params.psi = std::move(pc);
  return null;
}

inline bool psi_matches(const std::optional<PsiCalibration>& psi, const TestConfig& config, Eigen::Index p) {
  return psi && psi->p == p && psi->num_projections == config.num_projections &&
         psi->proj_kind == config.proj_kind && psi->reps == config.mc_reps_psi &&
         (config.proj_kind == ProjectionKind::dense || psi->sparse_density == config.sparse_density);
}

struct PairProportion {
  GroupPair pair;
  std::string label_i;
  std::string label_j;
  std::optional<double> prop_pooled;
  std::optional<double> prop_pairwise;
};

struct TestReport {
  double psi = 0.0;
  double psi0_alpha = 0.0;
  Decision decision = Decision::accept;
  double p_value = 1.0;
  std::vector<PairProportion> pairs;
  CalibratedParams params;
  std::optional<CalibratedParams> companion;
  EnsembleDiagnostics diagnostics;
  TestConfig config;
  double runtime_ms = 0.0;
};

/// Full test: calibration (unless supplied), psi null, observed ensemble.
///
/// Substreams of config.seed: "null-fmax" (inside calibrate), "null-psi",
/// "projections". With `preset`, its m, alpha and f^max null are reused, and
/// its psi null as well when it was computed for the same p and ensemble
/// settings. With `both_modes`, pair proportions are reported for the other
/// covariance mode too.
inline TestReport run_test(const GroupedDataset& ds, const TestConfig& config,
                           std::optional<CalibratedParams> preset = std::nullopt, bool both_modes = true) {
  const auto start = std::chrono::steady_clock::now();
  config.validate();
  TestReport report;
  report.config = config;
  const RngStream root(config.seed);
  const std::vector<int> sizes = ds.sizes();

  if (preset) {
    if (preset->sizes != sizes) throw DomainError("calibration group sizes differ from the dataset's");
    report.params = *preset;
    if (both_modes) {
      CalibrationOptions opt;
      opt.alpha = preset->alpha;
      opt.mode = preset->mode == CovarianceMode::pooled ? CovarianceMode::pairwise : CovarianceMode::pooled;
      opt.m_rule = preset->m_rule;
      opt.m_override = preset->m;
      opt.mc_reps = preset->mc_reps;
      opt.seed = preset->seed;
      opt.threads = config.threads;
      report.companion = calibrate(sizes, opt);
    }
  } else if (both_modes) {
    auto [pooled, pairwise] = calibrate_both(sizes, config.calibration_options());
    const bool primary_pooled = config.mode == CovarianceMode::pooled;
    report.params = primary_pooled ? std::move(pooled) : std::move(pairwise);
    report.companion = primary_pooled ? std::move(pairwise) : std::move(pooled);
  } else {
    report.params = calibrate(sizes, config.calibration_options());
  }

  if (!psi_matches(report.params.psi, config, ds.p()))
    calibrate_psi(report.params, config, ds.p(), config.mc_reps_psi, root.derive("null-psi"));
  report.psi0_alpha = report.params.psi->psi0;
  const EmpiricalNull null(report.params.psi->sorted_values, NullStatistic::psi);

  const CalibratedParams* companion = report.companion ? &*report.companion : nullptr;
  const EnsembleResult res = ensemble_statistic(ds, report.params, config, root.derive("projections"), companion);
  report.psi = res.psi;
  report.decision = decide(res.psi, report.psi0_alpha);
  report.p_value = null.p_value(res.psi);
  report.diagnostics = res.diagnostics;

  const auto primary = pairwise_proportions(res.pair_hits, res.num_projections);
  const auto other = companion ? pairwise_proportions(res.companion_pair_hits, res.num_projections)
                               : std::vector<std::pair<GroupPair, double>>{};
  const bool primary_pooled = report.params.mode == CovarianceMode::pooled;
  for (std::size_t q = 0; q < primary.size(); ++q) {
    PairProportion pp;
    pp.pair = primary[q].first;
    pp.label_i = ds.group(pp.pair.i).label;
    pp.label_j = ds.group(pp.pair.j).label;
    (primary_pooled ? pp.prop_pooled : pp.prop_pairwise) = primary[q].second;
    if (!other.empty()) (primary_pooled ? pp.prop_pairwise : pp.prop_pooled) = other[q].second;
    report.pairs.push_back(std::move(pp));
  }
  report.runtime_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace rpbf
