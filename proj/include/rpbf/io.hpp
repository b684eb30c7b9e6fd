#pragma once

// JSON forms of calibrations, reports, run manifests and simulation grids.
// Pairs are written 1-based.

#include <nlohmann/json.hpp>

#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "rpbf/calibration.hpp"
#include "rpbf/ensemble.hpp"
#include "rpbf/error.hpp"
#include "rpbf/rng.hpp"
#include "rpbf/simharness.hpp"
#include "rpbf/version.hpp"

namespace rpbf {

using json = nlohmann::ordered_json;

inline constexpr int kReportSchemaVersion = 1;

namespace detail {

[[noreturn]] inline void schema_error(const std::string& key, const std::string& what) {
  throw DataError(DataError::Code::schema, "key '" + key + "': " + what);
}

inline const json& require_key(const json& j, const std::string& key, const std::string& path) {
  if (!j.is_object()) schema_error(path, "expected an object");
  const auto it = j.find(key);
  if (it == j.end()) schema_error(path.empty() ? key : path + "." + key, "missing");
  return *it;
}

template <typename T>
T get_as(const json& j, const std::string& path) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    schema_error(path, "has the wrong type");
  }
}

template <typename T>
T field(const json& j, const std::string& key, const std::string& path) {
  return get_as<T>(require_key(j, key, path), path.empty() ? key : path + "." + key);
}

template <typename T>
T field_or(const json& j, const std::string& key, const std::string& path, T fallback) {
  if (!j.contains(key)) return fallback;
  return get_as<T>(j.at(key), path.empty() ? key : path + "." + key);
}

inline json pair_json(GroupPair pr) { return json::array({pr.i + 1, pr.j + 1}); }

inline GroupPair pair_from_json(const json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 2) schema_error(path, "expected a [i, j] pair");
  const int i = get_as<int>(j[0], path) - 1;
  const int k = get_as<int>(j[1], path) - 1;
  if (i < 0 || k <= i) schema_error(path, "expected 1 <= i < j");
  return {i, k};
}

}  // namespace detail

inline std::string hex64(std::uint64_t v) {
  std::ostringstream o;
  o << std::hex << std::setw(16) << std::setfill('0') << v;
  return o.str();
}

/// FNV-1a 64 digest of a file's bytes.
inline std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(DataError::Code::missing_file, "cannot open file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return "fnv1a64:" + hex64(detail::fnv1a64(buf.str()));
}

inline json to_json(const CalibratedParams& p) {
  json j;
  j["sizes"] = p.sizes;
  j["mode"] = to_string(p.mode);
  j["m_rule"] = to_string(p.m_rule);
  j["m"] = p.m;
  j["alpha"] = p.alpha;
  j["fmax0"] = p.fmax0;
  j["gamma"] = p.gamma;
  j["mc_reps"] = p.mc_reps;
  j["seed"] = p.seed;
  json pairs = json::array();
  for (const auto& pc : p.pairs) {
    pairs.push_back({{"pair", detail::pair_json(pc.pair)},
                     {"n0", pc.n0},
                     {"tau0", pc.tau0},
                     {"eta", pc.eta},
                     {"dof2", pc.dof2},
                     {"exponent", pc.exponent},
                     {"gamma", pc.gamma},
                     {"log_gamma", pc.log_gamma},
                     {"c", pc.c},
                     {"c_closed_form", pc.c_closed_form}});
  }
  j["pairs"] = std::move(pairs);
  if (p.psi) {
    j["psi"] = {{"psi0", p.psi->psi0},
                {"reps", p.psi->reps},
                {"p", p.psi->p},
                {"projections", p.psi->num_projections},
                {"proj", to_string(p.psi->proj_kind)},
                {"sparse_density", p.psi->sparse_density},
                {"null_sample", p.psi->sorted_values}};
  }
  return j;
}

/// Reads a calibration written by to_json; per-pair quantities are recomputed
/// from sizes, m, mode and fmax0 so the file cannot carry inconsistent values.
inline CalibratedParams params_from_json(const json& j) {
  using detail::field;
  CalibratedParams p;
  p.sizes = field<std::vector<int>>(j, "sizes", "");
  try {
    p.mode = parse_covariance_mode(field<std::string>(j, "mode", ""));
    p.m_rule = parse_m_rule(detail::field_or<std::string>(j, "m_rule", "", to_string(MRule::pairwise_smallest_group)));
  } catch (const DomainError& e) {
    detail::schema_error("mode", e.what());
  }
  p.m = field<int>(j, "m", "");
  p.alpha = field<double>(j, "alpha", "");
  p.fmax0 = field<double>(j, "fmax0", "");
  p.mc_reps = field<std::size_t>(j, "mc_reps", "");
  p.seed = field<std::uint64_t>(j, "seed", "");
  detail::require_sizes(p.sizes);
  detail::require_feasible(p.sizes, p.m, p.mode);
  p.pairs = calibrate_pairs(p.sizes, p.m, p.mode, p.fmax0);
  for (const auto& pc : p.pairs) p.gamma = std::max(p.gamma, pc.gamma);
  if (j.contains("psi")) {
    const json& s = j.at("psi");
    PsiCalibration pc;
    pc.psi0 = field<double>(s, "psi0", "psi");
    pc.reps = field<std::size_t>(s, "reps", "psi");
    pc.p = field<Eigen::Index>(s, "p", "psi");
    pc.num_projections = field<int>(s, "projections", "psi");
    try {
      pc.proj_kind = parse_projection_kind(field<std::string>(s, "proj", "psi"));
    } catch (const DomainError& e) {
      detail::schema_error("psi.proj", e.what());
    }
    pc.sparse_density = detail::field_or<double>(s, "sparse_density", "psi", kDefaultSparseDensity);
    pc.sorted_values = field<std::vector<double>>(s, "null_sample", "psi");
    if (pc.sorted_values.size() != pc.reps) detail::schema_error("psi.null_sample", "length differs from reps");
    std::sort(pc.sorted_values.begin(), pc.sorted_values.end());
    p.psi = std::move(pc);
  }
  return p;
}

inline json to_json(const TestConfig& c) {
  json j;
  j["mode"] = to_string(c.mode);
  j["proj"] = to_string(c.proj_kind);
  j["projections"] = c.num_projections;
  j["alpha"] = c.alpha;
  j["mc_reps_fmax"] = c.mc_reps_fmax;
  j["mc_reps_psi"] = c.mc_reps_psi;
  j["seed"] = c.seed;
  j["m"] = c.m_override ? json(*c.m_override) : json(nullptr);
  j["sparse_density"] = c.sparse_density;
  j["m_rule"] = to_string(c.m_rule);
  j["pair_threshold"] = to_string(c.pair_threshold);
  j["psi_null_method"] = to_string(c.psi_null_method);
  return j;
}

inline json to_json(const EnsembleDiagnostics& d) {
  return {{"projections", d.projections},
          {"resampled", d.resampled},
          {"log_bf_min", d.log_bf_min},
          {"log_bf_median", d.log_bf_median},
          {"log_bf_mean", d.log_bf_mean},
          {"log_bf_max", d.log_bf_max}};
}

/// Report without timing fields: equal for equal inputs and seeds.
inline json report_body(const TestReport& r) {
  json j;
  j["psi"] = r.psi;
  j["psi0_alpha"] = r.psi0_alpha;
  j["decision"] = to_string(r.decision);
  j["p_value"] = r.p_value;
  json pairs = json::array();
  for (const auto& pp : r.pairs) {
    pairs.push_back({{"i", pp.pair.i + 1},
                     {"j", pp.pair.j + 1},
                     {"labels", {pp.label_i, pp.label_j}},
                     {"prop_pooled", pp.prop_pooled ? json(*pp.prop_pooled) : json(nullptr)},
                     {"prop_pairwise", pp.prop_pairwise ? json(*pp.prop_pairwise) : json(nullptr)}});
  }
  j["pairs"] = std::move(pairs);
  j["params"] = to_json(r.params);
  if (r.companion) j["companion_params"] = to_json(*r.companion);
  j["diagnostics"] = to_json(r.diagnostics);
  j["config"] = to_json(r.config);
  j["seed"] = r.config.seed;
  return j;
}

inline json to_json(const TestReport& r) {
  json j = report_body(r);
  j["runtime_ms"] = r.runtime_ms;
  return j;
}

struct RunManifest {
  std::string command;
  json config;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> inputs;  // path -> digest
  std::string tool_version = kVersion;
  std::string wall_clock;                     // UTC start time
  double runtime_ms = 0.0;
};

inline std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream o;
  o << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return o.str();
}

inline json to_json(const RunManifest& m) {
  json inputs = json::object();
  for (const auto& [path, digest] : m.inputs) inputs[path] = digest;
  return {{"schema_version", kReportSchemaVersion},
          {"command", m.command},
          {"tool_version", m.tool_version},
          {"seed", m.seed},
          {"config", m.config},
          {"inputs", inputs},
          {"wall_clock", m.wall_clock},
          {"runtime_ms", m.runtime_ms}};
}

inline json to_json(const PowerCell& c) {
  json j;
  j["name"] = c.name;
  j["case"] = c.case_id;
  j["alt"] = c.alt;
  j["cov"] = c.cov;
  j["cov_inactive"] = c.cov_inactive;
  j["mode"] = to_string(c.mode);
  j["proj"] = to_string(c.proj_kind);
  j["p"] = c.p;
  j["sizes"] = c.sizes;
  j["p0"] = c.p0;
  j["reps"] = c.reps;
  j["rejections"] = c.rejections;
  j["rejection_rate"] = c.rejection_rate;
  j["se"] = c.se;
  j["m"] = c.m;
  j["fmax0"] = c.fmax0;
  j["gamma"] = c.gamma;
  j["psi0"] = c.psi0;
  j["runtime_ms"] = c.runtime_ms;
  if (!c.error.empty()) j["error"] = c.error;
  return j;
}

/// Parsed simulation grid: ensemble settings plus the expanded cells.
struct Grid {
  TestConfig config;
  std::vector<ScenarioSpec> cells;
};

namespace detail {

template <typename T>
std::vector<T> one_or_many(const json& j, const std::string& key, const std::string& path, std::vector<T> fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  const std::string full = path + "." + key;
  if (v.is_array()) {
    if (v.empty()) schema_error(full, "must not be empty");
    return get_as<std::vector<T>>(v, full);
  }
  return {get_as<T>(v, full)};
}

}  // namespace detail

/// Grid schema (unknown keys are rejected):
///
///   { "seed": 1, "alpha": 0.05, "projections": 100, "mc_reps_fmax": 10000,
///     "mc_reps_psi": 500, "m": null, "m_rule": "pairwise_smallest_group",
///     "sparse_density": 0.333,
///     "scenarios": [ { "name": "table1", "case": 1, "alt": 1, "p": 200,
///                      "sizes": [50, 50, 50], "cov": "S1", "cov_inactive": "S1",
///                      "p0": [0.99, 1.0], "modes": ["pairwise"],
///                      "proj": ["dense"], "reps": 500, "fix_means": false,
///                      "cov_seed": 0 } ] }
///
/// "p0", "modes", "proj" and "cov" take a value or a list; cells are the
/// product. "cov_inactive" defaults to "cov".
inline Grid grid_from_json(const json& j) {
  using detail::field;
  using detail::field_or;
  static const std::vector<std::string> top_keys{"seed",           "alpha",       "projections", "mc_reps_fmax",
                                                 "mc_reps_psi",    "m",           "m_rule",      "sparse_density",
                                                 "scenarios",      "threads"};
  static const std::vector<std::string> cell_keys{"name",  "case",  "alt",  "p",    "sizes",     "cov",     "cov_inactive",
                                                  "p0",    "modes", "proj", "reps", "fix_means", "cov_seed"};
  if (!j.is_object()) detail::schema_error("<root>", "expected an object");
  for (const auto& [k, v] : j.items())
    if (std::find(top_keys.begin(), top_keys.end(), k) == top_keys.end()) detail::schema_error(k, "unknown key");

  Grid g;
  g.config.seed = field_or<std::uint64_t>(j, "seed", "", 0);
  g.config.alpha = field_or<double>(j, "alpha", "", 0.05);
  g.config.num_projections = field_or<int>(j, "projections", "", 100);
  g.config.mc_reps_fmax = field_or<std::size_t>(j, "mc_reps_fmax", "", 10000);
  g.config.mc_reps_psi = field_or<std::size_t>(j, "mc_reps_psi", "", 500);
  g.config.sparse_density = field_or<double>(j, "sparse_density", "", kDefaultSparseDensity);
  g.config.threads = field_or<unsigned>(j, "threads", "", 0);
  if (j.contains("m") && !j.at("m").is_null()) g.config.m_override = field<int>(j, "m", "");
  try {
    g.config.m_rule = parse_m_rule(field_or<std::string>(j, "m_rule", "", to_string(MRule::pairwise_smallest_group)));
    g.config.validate();
  } catch (const DomainError& e) {
    detail::schema_error("<root>", e.what());
  }

  const json& scenarios = detail::require_key(j, "scenarios", "");
  if (!scenarios.is_array() || scenarios.empty()) detail::schema_error("scenarios", "expected a non-empty list");
  for (std::size_t s = 0; s < scenarios.size(); ++s) {
    const json& sj = scenarios[s];
    const std::string path = "scenarios[" + std::to_string(s) + "]";
    if (!sj.is_object()) detail::schema_error(path, "expected an object");
    for (const auto& [k, v] : sj.items())
      if (std::find(cell_keys.begin(), cell_keys.end(), k) == cell_keys.end())
        detail::schema_error(path + "." + k, "unknown key");
    ScenarioSpec base;
    base.name = field_or<std::string>(sj, "name", path, "scenario" + std::to_string(s + 1));
    base.case_id = field_or<int>(sj, "case", path, 1);
    base.alt = field_or<int>(sj, "alt", path, 1);
    base.p = field<Eigen::Index>(sj, "p", path);
    base.sizes = field<std::vector<int>>(sj, "sizes", path);
    base.reps = field_or<std::size_t>(sj, "reps", path, 500);
    base.fix_means = field_or<bool>(sj, "fix_means", path, false);
    const auto cov_seed = field_or<std::uint64_t>(sj, "cov_seed", path, 0);
    const auto covs = detail::one_or_many<std::string>(sj, "cov", path, {"S1"});
    const auto p0s = detail::one_or_many<double>(sj, "p0", path, {1.0});
    const auto modes = detail::one_or_many<std::string>(sj, "modes", path, {"pairwise"});
    const auto projs = detail::one_or_many<std::string>(sj, "proj", path, {"dense"});
    const auto inactive = field_or<std::string>(sj, "cov_inactive", path, "");
    for (const auto& cov : covs) {
      for (const auto& mode : modes) {
        for (const auto& proj : projs) {
          for (double p0 : p0s) {
            ScenarioSpec sc = base;
            sc.p0 = p0;
            try {
              sc.cov_active = covariance_spec(parse_covariance_kind(cov), base.p, cov_seed);
            } catch (const DomainError& e) {
              detail::schema_error(path + ".cov", e.what());
            }
            try {
              sc.cov_inactive = inactive.empty() ? sc.cov_active
                                                 : covariance_spec(parse_covariance_kind(inactive), base.p, cov_seed);
            } catch (const DomainError& e) {
              detail::schema_error(path + ".cov_inactive", e.what());
            }
            try {
              sc.mode = parse_covariance_mode(mode);
            } catch (const DomainError& e) {
              detail::schema_error(path + ".modes", e.what());
            }
            try {
              sc.proj_kind = parse_projection_kind(proj);
            } catch (const DomainError& e) {
              detail::schema_error(path + ".proj", e.what());
            }
            try {
              sc.validate();
            } catch (const DomainError& e) {
              detail::schema_error(path, e.what());
            }
            g.cells.push_back(std::move(sc));
          }
        }
      }
    }
  }
  return g;
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(DataError::Code::missing_file, "cannot open file: " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw DataError(DataError::Code::parse, path + ": " + e.what());
  }
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw DataError(DataError::Code::missing_file, "cannot write file: " + path);
  out << text;
}

}  // namespace rpbf
