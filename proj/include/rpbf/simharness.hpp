#pragma once

// Size/power simulation: covariance families, sparse mean alternatives, and
// tables of empirical rejection rates.

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "rpbf/calibration.hpp"
#include "rpbf/dataset.hpp"
#include "rpbf/ensemble.hpp"
#include "rpbf/error.hpp"
#include "rpbf/linalg.hpp"
#include "rpbf/parallel.hpp"
#include "rpbf/rng.hpp"

namespace rpbf {

enum class CovarianceKind { identity, block, spiked_diag, ar1_banded, ar1, scaled_block_kron };

/// Short name S1..S6 in the order of the enumeration.
inline std::string to_string(CovarianceKind k) {
  return "S" + std::to_string(static_cast<int>(k) + 1);
}

inline CovarianceKind parse_covariance_kind(const std::string& s) {
  static const std::map<std::string, CovarianceKind> names{
      {"S1", CovarianceKind::identity},          {"identity", CovarianceKind::identity},
      {"S2", CovarianceKind::block},             {"block", CovarianceKind::block},
      {"S3", CovarianceKind::spiked_diag},       {"spiked_diag", CovarianceKind::spiked_diag},
      {"S4", CovarianceKind::ar1_banded},        {"ar1_banded", CovarianceKind::ar1_banded},
      {"S5", CovarianceKind::ar1},               {"ar1", CovarianceKind::ar1},
      {"S6", CovarianceKind::scaled_block_kron}, {"scaled_block_kron", CovarianceKind::scaled_block_kron}};
  const auto it = names.find(s);
  if (it == names.end()) throw DomainError("unknown covariance '" + s + "' (expected S1..S6)");
  return it->second;
}

struct CovarianceSpec {
  CovarianceKind kind = CovarianceKind::identity;
  Eigen::Index p = 0;
  double rho = 0.0;  // 0.15 off-diagonal (block), 0.4 (banded), 0.6 (ar1), 0.8 (kron)
  double sigma2 = 1.0;
  Eigen::Index block_size = 25;
  double uniform_lo = 1.0;
  double uniform_hi = 3.0;
  std::uint64_t seed = 0;  // random diagonal of the kron family
};

/// Spec with the standard parameters of each family.
inline CovarianceSpec covariance_spec(CovarianceKind kind, Eigen::Index p, std::uint64_t seed = 0) {
  CovarianceSpec s;
  s.kind = kind;
  s.p = p;
  s.seed = seed;
  switch (kind) {
    case CovarianceKind::block: s.rho = 0.15; break;
    case CovarianceKind::ar1_banded: s.rho = 0.4; break;
    case CovarianceKind::ar1: s.rho = 0.6; break;
    case CovarianceKind::scaled_block_kron: s.rho = 0.8; s.block_size = 2; break;
    default: break;
  }
  return s;
}

/// Dense p x p covariance of the family; validated PD.
inline Eigen::MatrixXd make_covariance(const CovarianceSpec& spec) {
  const Eigen::Index p = spec.p;
  if (p < 1) throw DomainError("covariance dimension must be positive");
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(p, p);
  switch (spec.kind) {
    case CovarianceKind::identity:
      s.setIdentity();
      break;
    case CovarianceKind::block: {
      const Eigen::Index b = spec.block_size;
      if (b < 1 || p % b != 0)
        throw DomainError("block covariance needs p divisible by " + std::to_string(b) + " (p=" + std::to_string(p) + ")");
      for (Eigen::Index k = 0; k < p; k += b) {
        s.block(k, k, b, b).setConstant(spec.rho);
        s.block(k, k, b, b).diagonal().setOnes();
      }
      break;
    }
    case CovarianceKind::spiked_diag: {
      const auto spiked = static_cast<Eigen::Index>(std::ceil(0.2 * static_cast<double>(p) - 1e-9));
      for (Eigen::Index j = 0; j < p; ++j)
        s(j, j) = j < spiked ? 0.2 * static_cast<double>(p) / static_cast<double>(j + 1) : 1.0;
      break;
    }
    case CovarianceKind::ar1_banded:
      for (Eigen::Index i = 0; i < p; ++i) {
        s(i, i) = spec.sigma2;
        if (i + 1 < p) s(i, i + 1) = s(i + 1, i) = spec.sigma2 * spec.rho;
      }
      break;
    case CovarianceKind::ar1:
      for (Eigen::Index i = 0; i < p; ++i)
        for (Eigen::Index j = 0; j < p; ++j)
          s(i, j) = spec.sigma2 * std::pow(spec.rho, static_cast<double>(std::abs(i - j)));
      break;
    case CovarianceKind::scaled_block_kron: {
      const Eigen::Index b = spec.block_size;
      if (b < 1 || p % b != 0)
        throw DomainError("kron covariance needs p divisible by " + std::to_string(b) + " (p=" + std::to_string(p) + ")");
      RngStream rng = RngStream(spec.seed).derive("covariance");
      Eigen::VectorXd root(p);
      for (Eigen::Index j = 0; j < p; ++j)
        root(j) = std::sqrt(spec.uniform_lo + (spec.uniform_hi - spec.uniform_lo) * rng.uniform());
      for (Eigen::Index k = 0; k < p; k += b)
        for (Eigen::Index i = k; i < k + b; ++i)
          for (Eigen::Index j = k; j < k + b; ++j)
            s(i, j) = root(i) * root(j) * (i == j ? 1.0 : spec.rho);
      break;
    }
  }
  detail::checked_llt(s, "covariance " + to_string(spec.kind));
  return s;
}

struct ScenarioSpec {
  std::string name;
  int case_id = 1;  // 1: only group G has a nonzero mean; 2: only group G has a zero mean
  int alt = 1;      // 1: ||mu||^2 / sqrt(tr S^2) = 0.1; 2: mu' S^-1 mu = 2
  double p0 = 1.0;  // fraction of exact zeros in each nonzero mean; 1 is the global null
  std::vector<int> sizes;
  Eigen::Index p = 0;
  CovarianceSpec cov_active;    // group G
  CovarianceSpec cov_inactive;  // groups 1..G-1
  std::size_t reps = 500;
  CovarianceMode mode = CovarianceMode::pairwise;
  ProjectionKind proj_kind = ProjectionKind::dense;
  bool fix_means = false;  // draw the means once per scenario instead of per replicate

  int num_groups() const noexcept { return static_cast<int>(sizes.size()); }

  void validate() const {
    if (case_id != 1 && case_id != 2) throw DomainError("scenario case must be 1 or 2");
    if (alt != 1 && alt != 2) throw DomainError("scenario alternative must be 1 or 2");
    if (!(p0 >= 0.0 && p0 <= 1.0)) throw DomainError("p0 must lie in [0, 1]");
    if (sizes.size() < 2) throw DomainError("a scenario needs at least two groups");
    if (reps < 1) throw DomainError("a scenario needs at least one replicate");
    if (cov_active.p != p || cov_inactive.p != p) throw DomainError("scenario covariance dimension differs from p");
  }
};

/// Mean vector of each group. Nonzero means start as N(1, I), get a uniformly
/// random floor(p0 p) coordinates zeroed, and are rescaled to the
/// alternative's signal size under that group's covariance.
inline std::vector<Eigen::VectorXd> make_means(const ScenarioSpec& sc, const Eigen::MatrixXd& cov_active,
                                               const Eigen::MatrixXd& cov_inactive, RngStream& rng) {
  const int groups = sc.num_groups();
  const Eigen::Index p = sc.p;
  std::vector<Eigen::VectorXd> means(static_cast<std::size_t>(groups), Eigen::VectorXd::Zero(p));
  const auto zeros = static_cast<Eigen::Index>(std::floor(sc.p0 * static_cast<double>(p) + 1e-9));
  if (zeros >= p) return means;
  for (int g = 0; g < groups; ++g) {
    const bool last = g == groups - 1;
    if ((sc.case_id == 1) != last) continue;
    const Eigen::MatrixXd& cov = last ? cov_active : cov_inactive;
    Eigen::VectorXd mu(p);
    for (Eigen::Index j = 0; j < p; ++j) mu(j) = 1.0 + rng.normal();
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(p));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    for (Eigen::Index k = 0; k < zeros; ++k) {
      const auto pick = k + static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::uint64_t>(p - k)));
      std::swap(idx[static_cast<std::size_t>(k)], idx[static_cast<std::size_t>(pick)]);
      mu(idx[static_cast<std::size_t>(k)]) = 0.0;
    }
    if (sc.alt == 1) {
      const double target = 0.1 * std::sqrt(cov.squaredNorm());  // tr(S^2) = ||S||_F^2 for symmetric S
      mu *= std::sqrt(target / mu.squaredNorm());
    } else {
      const auto llt = detail::checked_llt(cov, "Alt.2 mean rescaling");
      const double q = llt.matrixL().solve(mu).squaredNorm();
      mu *= std::sqrt(2.0 / q);
    }
    means[static_cast<std::size_t>(g)] = std::move(mu);
  }
  return means;
}

struct PowerCell {
  std::string name;
  int case_id = 1;
  int alt = 1;
  std::string cov;
  std::string cov_inactive;
  CovarianceMode mode = CovarianceMode::pairwise;
  ProjectionKind proj_kind = ProjectionKind::dense;
  Eigen::Index p = 0;
  std::vector<int> sizes;
  double p0 = 1.0;
  std::size_t reps = 0;
  std::size_t rejections = 0;
  double rejection_rate = 0.0;
  double se = 0.0;
  int m = 0;
  double fmax0 = 0.0;
  double gamma = 0.0;
  double psi0 = 0.0;
  double runtime_ms = 0.0;
  std::string error;  // nonempty when the cell failed

  bool ok() const noexcept { return error.empty(); }
};

/// Calibration of one scenario: f^max null, gamma, and the psi null for the
/// scenario's p. The psi null uses identity covariance, so it depends only
/// on sizes, p and the ensemble settings.
inline CalibratedParams calibrate_scenario(const ScenarioSpec& sc, const TestConfig& config) {
  TestConfig cfg = config;
  cfg.mode = sc.mode;
  cfg.proj_kind = sc.proj_kind;
  CalibratedParams params = calibrate(sc.sizes, cfg.calibration_options());
  calibrate_psi(params, cfg, sc.p, cfg.mc_reps_psi, RngStream(cfg.seed).derive("null-psi"));
  return params;
}

/// Rejection rate over sc.reps simulated datasets; replicate r uses rng.derive(r).
inline PowerCell estimate_power(const ScenarioSpec& sc, const TestConfig& config, const RngStream& rng,
                                std::optional<CalibratedParams> params = std::nullopt) {
  const auto start = std::chrono::steady_clock::now();
  sc.validate();
  TestConfig cfg = config;
  cfg.mode = sc.mode;
  cfg.proj_kind = sc.proj_kind;
  cfg.validate();
  if (!params) params = calibrate_scenario(sc, cfg);
  if (params->mode != sc.mode || params->sizes != sc.sizes || !psi_matches(params->psi, cfg, sc.p))
    throw DomainError("supplied calibration does not match the scenario");

  const SymmetricPD cov_active(make_covariance(sc.cov_active));
  const SymmetricPD cov_inactive(make_covariance(sc.cov_inactive));
  std::optional<std::vector<Eigen::VectorXd>> fixed;
  if (sc.fix_means) {
    RngStream ms = rng.derive("means");
    fixed = make_means(sc, cov_active.matrix(), cov_inactive.matrix(), ms);
  }

  std::vector<char> reject(sc.reps, 0);
  parallel_for(sc.reps, cfg.threads, [&](std::size_t r) {
    const RngStream local = rng.derive(static_cast<std::uint64_t>(r));
    std::vector<Eigen::VectorXd> means;
    if (fixed) {
      means = *fixed;
    } else {
      RngStream ms = local.derive("means");
      means = make_means(sc, cov_active.matrix(), cov_inactive.matrix(), ms);
    }
    RngStream ds_stream = local.derive("data");
    std::vector<Group> groups;
    for (int g = 0; g < sc.num_groups(); ++g) {
      const SymmetricPD& cov = g == sc.num_groups() - 1 ? cov_active : cov_inactive;
      groups.push_back({"g" + std::to_string(g + 1),
                        sample_mvn(means[static_cast<std::size_t>(g)], cov, sc.sizes[static_cast<std::size_t>(g)],
                                   ds_stream)});
    }
    const GroupedDataset ds(std::move(groups));
    const EnsembleResult res = ensemble_statistic(ds, *params, cfg, local.derive("projections"), nullptr, 1U);
    reject[r] = decide(res.psi, params->psi->psi0) == Decision::reject ? 1 : 0;
  });

  PowerCell cell;
  cell.name = sc.name;
  cell.case_id = sc.case_id;
  cell.alt = sc.alt;
  cell.cov = to_string(sc.cov_active.kind);
  cell.cov_inactive = to_string(sc.cov_inactive.kind);
  cell.mode = sc.mode;
  cell.proj_kind = sc.proj_kind;
  cell.p = sc.p;
  cell.sizes = sc.sizes;
  cell.p0 = sc.p0;
  cell.reps = sc.reps;
  cell.rejections = static_cast<std::size_t>(std::accumulate(reject.begin(), reject.end(), 0));
  cell.rejection_rate = static_cast<double>(cell.rejections) / static_cast<double>(sc.reps);
  cell.se = std::sqrt(cell.rejection_rate * (1.0 - cell.rejection_rate) / static_cast<double>(sc.reps));
  cell.m = params->m;
  cell.fmax0 = params->fmax0;
  cell.gamma = params->gamma;
  cell.psi0 = params->psi->psi0;
  cell.runtime_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return cell;
}

inline std::string join_sizes(const std::vector<int>& sizes, char sep = ';') {
  std::string out;
  for (std::size_t g = 0; g < sizes.size(); ++g) out += (g ? std::string(1, sep) : "") + std::to_string(sizes[g]);
  return out;
}

/// Key under which a cell's random stream is derived: stable across grid
/// reordering.
inline std::string scenario_key(const ScenarioSpec& sc) {
  std::ostringstream k;
  k << sc.name << '|' << sc.case_id << '|' << sc.alt << '|' << to_string(sc.cov_active.kind) << '|'
    << to_string(sc.cov_inactive.kind) << '|' << to_string(sc.mode) << '|' << to_string(sc.proj_kind) << '|' << sc.p
    << '|' << join_sizes(sc.sizes) << '|' << detail::format_double(sc.p0);
  return k.str();
}

/// Runs every cell; a failing cell records its error and the run continues.
/// Calibrations are shared between cells with equal sizes, p, mode and
/// projection kind.
inline std::vector<PowerCell> run_table(const std::vector<ScenarioSpec>& grid, const TestConfig& config) {
  if (grid.empty()) throw DomainError("simulation grid is empty");
  const RngStream root = RngStream(config.seed).derive("simulation");
  std::map<std::string, CalibratedParams> cache;
  std::vector<PowerCell> out;
  for (const auto& sc : grid) {
    try {
      const std::string ckey = std::string(to_string(sc.mode)) + '|' + to_string(sc.proj_kind) + '|' +
                               std::to_string(sc.p) + '|' + join_sizes(sc.sizes);
      auto it = cache.find(ckey);
      if (it == cache.end()) it = cache.emplace(ckey, calibrate_scenario(sc, config)).first;
      out.push_back(estimate_power(sc, config, root.derive(scenario_key(sc)), it->second));
    } catch (const std::exception& e) {
      PowerCell cell;
      cell.name = sc.name;
      cell.case_id = sc.case_id;
      cell.alt = sc.alt;
      cell.cov = to_string(sc.cov_active.kind);
      cell.cov_inactive = to_string(sc.cov_inactive.kind);
      cell.mode = sc.mode;
      cell.proj_kind = sc.proj_kind;
      cell.p = sc.p;
      cell.sizes = sc.sizes;
      cell.p0 = sc.p0;
      cell.reps = sc.reps;
      cell.error = e.what();
      out.push_back(std::move(cell));
    }
  }
  return out;
}

/// CSV with one row per cell.
inline std::string power_table_csv(const std::vector<PowerCell>& cells) {
  std::ostringstream o;
  o << "name,case,alt,cov,cov_inactive,mode,proj,p,sizes,p0,reps,rejections,rejection_rate,se,m,fmax0,gamma,psi0,"
       "runtime_ms,error\n";
  for (const auto& c : cells) {
    std::string err = c.error;
    std::replace(err.begin(), err.end(), '"', '\'');
    o << c.name << ',' << c.case_id << ',' << c.alt << ',' << c.cov << ',' << c.cov_inactive << ','
      << to_string(c.mode) << ',' << to_string(c.proj_kind) << ',' << c.p << ',' << join_sizes(c.sizes) << ','
      << detail::format_double(c.p0) << ',' << c.reps << ',' << c.rejections << ',' << detail::format_double(c.rejection_rate) << ','
      << detail::format_double(c.se) << ',' << c.m << ',' << detail::format_double(c.fmax0) << ',' << detail::format_double(c.gamma) << ','
      << detail::format_double(c.psi0) << ',' << std::llround(c.runtime_ms) << ',' << (err.empty() ? "" : "\"" + err + "\"")
      << '\n';
  }
  return o.str();
}

}  // namespace rpbf
