#pragma once

// Command-line front end. run_cli is kept separate from main() so tests can
// drive it in-process.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <iomanip>
#include <iostream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "rpbf/io.hpp"
#include "rpbf/rpbf.hpp"

namespace rpbf::cli {

enum ExitCode : int { ok = 0, usage = 2, data = 3, numeric = 4 };

struct Common {
  std::uint64_t seed = 0;
  unsigned threads = 0;
  std::string output;
  std::string mode = "pairwise";
  std::string proj = "dense";
  double alpha = 0.05;
  int projections = 1000;
  std::size_t mc_reps = 10000;
  std::size_t psi_reps = 999;
  std::optional<int> m;
  std::string m_rule = "pairwise_smallest_group";
  double sparse_density = kDefaultSparseDensity;
};

namespace detail {

inline void add_seed_threads(CLI::App* app, Common& c) {
  app->add_option("--seed", c.seed, "Master seed; every random stream derives from it")->capture_default_str();
  app->add_option("--threads", c.threads, "Worker threads (0 = all cores)")->capture_default_str();
  app->add_option("--output", c.output, "Output file (JSON); standard output when omitted");
}

inline void add_calibration(CLI::App* app, Common& c) {
  app->add_option("--alpha", c.alpha, "Test level in (0, 0.5)")->capture_default_str();
  app->add_option("--mode", c.mode, "Covariance pooling")
      ->check(CLI::IsMember({"pooled", "pairwise"}))
      ->capture_default_str();
  app->add_option("--mc-reps", c.mc_reps, "Replicates of the f^max null")->capture_default_str();
  app->add_option("--m", c.m, "Projection dimension (overrides the automatic choice)");
  app->add_option("--m-rule", c.m_rule, "Rule for the automatic projection dimension")
      ->check(CLI::IsMember({"pooled", "pairwise_smallest_group", "pairwise_min_over_pairs"}))
      ->capture_default_str();
}

inline void add_ensemble(CLI::App* app, Common& c) {
  app->add_option("--proj", c.proj, "Projection family")->check(CLI::IsMember({"dense", "sparse"}))->capture_default_str();
  app->add_option("--projections", c.projections, "Number of random projections")->capture_default_str();
  app->add_option("--psi-reps", c.psi_reps, "Replicates of the ensemble-statistic null")->capture_default_str();
  app->add_option("--sparse-density", c.sparse_density, "Nonzero fraction of sparse projection entries")
      ->capture_default_str();
}

inline TestConfig to_config(const Common& c) {
  TestConfig cfg;
  cfg.mode = parse_covariance_mode(c.mode);
  cfg.proj_kind = parse_projection_kind(c.proj);
  cfg.num_projections = c.projections;
  cfg.alpha = c.alpha;
  cfg.mc_reps_fmax = c.mc_reps;
  cfg.mc_reps_psi = c.psi_reps;
  cfg.seed = c.seed;
  cfg.m_override = c.m;
  cfg.sparse_density = c.sparse_density;
  cfg.m_rule = parse_m_rule(c.m_rule);
  cfg.threads = c.threads;
  cfg.validate();
  return cfg;
}

inline void emit(const json& j, const std::string& path, std::ostream& out) {
  if (path.empty()) {
    out << j.dump(2) << '\n';
  } else {
    write_text_file(path, j.dump(2) + "\n");
  }
}

inline std::string fixed(double v, int digits = 4) {
  std::ostringstream o;
  o << std::fixed << std::setprecision(digits) << v;
  return o.str();
}

inline double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, ',')) out.emplace_back(rpbf::detail::trim(cur));
  return out;
}

}  // namespace detail

inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Random-projection Bayes factor tests for equality of group mean vectors"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  Common c;
  std::vector<int> sizes;
  std::optional<Eigen::Index> psi_p;

  auto* cal = app.add_subcommand("calibrate", "Choose m, run the f^max null, derive tau0 and gamma");
  cal->add_option("--sizes", sizes, "Group sizes, comma separated")->required()->delimiter(',');
  cal->add_option("--psi-p", psi_p, "Also calibrate the ensemble null for this ambient dimension");
  detail::add_seed_threads(cal, c);
  detail::add_calibration(cal, c);
  detail::add_ensemble(cal, c);

  std::string input, label_column = "group", params_path, expression, labels_path, groups_list, dump_projection;
  std::string pair_threshold = "family";
  bool log_transform = false, single_mode = false;
  std::optional<double> filter_threshold;
  auto* test = app.add_subcommand("test", "Run the ensemble test on a dataset");
  test->add_option("--input", input, "Grouped CSV: one label column, remaining columns numeric")
      ->check(CLI::ExistingFile);
  test->add_option("--label-column", label_column, "Name of the label column in --input")->capture_default_str();
  test->add_option("--expression", expression, "Genes-by-cells expression matrix (alternative to --input)")
      ->check(CLI::ExistingFile);
  test->add_option("--labels", labels_path, "cell_id,label file for --expression")->check(CLI::ExistingFile);
  test->add_option("--groups", groups_list, "Labels to compare, comma separated, for --expression");
  test->add_option("--filter-threshold", filter_threshold, "Keep genes with log2(mean+1) above this first");
  test->add_flag("--log-transform", log_transform, "Use log2(x+1) of the expression values");
  test->add_option("--params", params_path, "Calibration file from `calibrate`")->check(CLI::ExistingFile);
  test->add_option("--pair-threshold", pair_threshold, "Threshold for per-pair significance counts")
      ->check(CLI::IsMember({"family", "marginal"}))
      ->capture_default_str();
  test->add_flag("--single-mode", single_mode, "Skip the other covariance mode's pair proportions");
  test->add_option("--dump-projection", dump_projection, "Write projection 0 (orthonormalized) as binary");
  detail::add_seed_threads(test, c);
  detail::add_calibration(test, c);
  detail::add_ensemble(test, c);

  std::string grid_path;
  std::optional<std::uint64_t> sim_seed;
  auto* sim = app.add_subcommand("simulate", "Run a size/power simulation grid");
  sim->add_option("--grid", grid_path, "Grid file (JSON)")->required()->check(CLI::ExistingFile);
  sim->add_option("--seed", sim_seed, "Override the grid's seed");
  sim->add_option("--threads", c.threads, "Worker threads (0 = all cores)")->capture_default_str();
  sim->add_option("--output", c.output, "Output prefix; writes PREFIX.csv and PREFIX.json")->required();

  std::string statistic = "fmax";
  std::optional<Eigen::Index> null_p;
  auto* nul = app.add_subcommand("null", "Sample the null distribution of f^max or of the ensemble statistic");
  nul->add_option("--sizes", sizes, "Group sizes, comma separated")->required()->delimiter(',');
  nul->add_option("--statistic", statistic, "fmax or psi")->check(CLI::IsMember({"fmax", "psi"}))->capture_default_str();
  nul->add_option("--p", null_p, "Ambient dimension (psi only)");
  detail::add_seed_threads(nul, c);
  detail::add_calibration(nul, c);
  detail::add_ensemble(nul, c);

  double threshold = 6.0;
  std::string summary_path;
  auto* fil = app.add_subcommand("filter", "Keep genes whose log2(mean TPM + 1) exceeds a threshold");
  fil->add_option("--expression", expression, "Genes-by-cells matrix")->required()->check(CLI::ExistingFile);
  fil->add_option("--labels", labels_path, "cell_id,label file")->required()->check(CLI::ExistingFile);
  fil->add_option("--threshold", threshold, "Aggregate expression threshold")->capture_default_str();
  fil->add_option("--output", c.output, "Filtered matrix (CSV)")->required();
  fil->add_option("--summary", summary_path, "Summary JSON (standard output when omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? ExitCode::ok : ExitCode::usage;
  }

  const auto start = std::chrono::steady_clock::now();
  RunManifest manifest;
  manifest.wall_clock = utc_now();
  try {
    if (*cal) {
      const TestConfig cfg = detail::to_config(c);
      manifest.command = "calibrate";
      manifest.seed = c.seed;
      manifest.config = to_json(cfg);
      manifest.config["sizes"] = sizes;
      CalibratedParams params = calibrate(sizes, cfg.calibration_options());
      if (psi_p) {
        manifest.config["psi_p"] = *psi_p;
        calibrate_psi(params, cfg, *psi_p, cfg.mc_reps_psi, RngStream(cfg.seed).derive("null-psi"));
      }
      manifest.runtime_ms = detail::elapsed_ms(start);
      json j = to_json(params);
      j["manifest"] = to_json(manifest);
      detail::emit(j, c.output, out);
      if (!c.output.empty()) {
        out << "m = " << params.m << ", fmax0 = " << detail::fixed(params.fmax0) << ", gamma = "
            << detail::fixed(params.gamma, 3) << " (" << to_string(params.mode) << ")\n";
        if (params.psi) out << "psi0 = " << detail::fixed(params.psi->psi0) << "\n";
      }
      return ExitCode::ok;
    }

    if (*test) {
      TestConfig cfg = detail::to_config(c);
      cfg.pair_threshold = parse_pair_threshold(pair_threshold);
      if (input.empty() == expression.empty())
        throw DomainError("give exactly one of --input or --expression");
      std::optional<GroupedDataset> ds;
      if (!input.empty()) {
        manifest.inputs[input] = file_digest(input);
        ds = load_grouped_csv(input, label_column);
      } else {
        if (labels_path.empty() || groups_list.empty())
          throw DomainError("--expression needs --labels and --groups");
        manifest.inputs[expression] = file_digest(expression);
        manifest.inputs[labels_path] = file_digest(labels_path);
        ExpressionMatrix expr = load_expression(expression, labels_path);
        if (filter_threshold) expr = filter_genes(expr, *filter_threshold);
        ds = to_grouped(expr, detail::split_list(groups_list), log_transform);
      }
      std::optional<CalibratedParams> preset;
      if (!params_path.empty()) {
        manifest.inputs[params_path] = file_digest(params_path);
        preset = params_from_json(read_json_file(params_path));
        cfg.mode = preset->mode;
        cfg.alpha = preset->alpha;
      }
      manifest.command = "test";
      manifest.seed = cfg.seed;
      manifest.config = to_json(cfg);
      manifest.config["log_transform"] = log_transform;
      if (filter_threshold) manifest.config["filter_threshold"] = *filter_threshold;
      if (!dump_projection.empty()) {
        const int m = preset ? preset->m : (cfg.m_override ? *cfg.m_override : select_m(ds->sizes(), cfg.alpha, cfg.m_rule));
        RngStream s = RngStream(cfg.seed).derive("projections").derive(std::uint64_t{0});
        const auto seed = draw_projection_seed(cfg.proj_kind, ds->p(), m, s, cfg.sparse_density);
        write_projection_binary(orthonormalize(seed, cfg.proj_kind), dump_projection);
      }
      const TestReport report = run_test(*ds, cfg, preset, !single_mode);
      manifest.runtime_ms = detail::elapsed_ms(start);
      json j = to_json(report);
      j["manifest"] = to_json(manifest);
      if (!c.output.empty()) detail::emit(j, c.output, out);
      out << "decision: " << to_string(report.decision) << " (psi = " << detail::fixed(report.psi)
          << (report.decision == Decision::reject ? " > " : " <= ") << "psi0 = " << detail::fixed(report.psi0_alpha)
          << ", p = " << detail::fixed(report.p_value) << ")\n";
      out << "m = " << report.params.m << ", mode = " << to_string(report.params.mode)
          << ", projections = " << cfg.num_projections << " " << to_string(cfg.proj_kind)
          << ", gamma = " << detail::fixed(report.params.gamma, 3) << "\n";
      out << "pair proportions (pairwise, pooled):\n";
      for (const auto& pp : report.pairs) {
        out << "  " << pp.label_i << " - " << pp.label_j << ": "
            << (pp.prop_pairwise ? detail::fixed(*pp.prop_pairwise, 3) : "-") << ", "
            << (pp.prop_pooled ? detail::fixed(*pp.prop_pooled, 3) : "-") << "\n";
      }
      if (c.output.empty()) out << j.dump(2) << '\n';
      return ExitCode::ok;
    }

    if (*sim) {
      manifest.inputs[grid_path] = file_digest(grid_path);
      Grid grid = grid_from_json(read_json_file(grid_path));
      if (sim_seed) grid.config.seed = *sim_seed;
      if (c.threads != 0) grid.config.threads = c.threads;
      manifest.command = "simulate";
      manifest.seed = grid.config.seed;
      manifest.config = to_json(grid.config);
      const auto cells = run_table(grid.cells, grid.config);
      manifest.runtime_ms = detail::elapsed_ms(start);
      write_text_file(c.output + ".csv", power_table_csv(cells));
      json side;
      side["manifest"] = to_json(manifest);
      side["cells"] = json::array();
      std::size_t failed = 0;
      for (const auto& cell : cells) {
        side["cells"].push_back(to_json(cell));
        failed += cell.ok() ? 0 : 1;
      }
      write_text_file(c.output + ".json", side.dump(2) + "\n");
      out << cells.size() - failed << " of " << cells.size() << " cells completed; table in " << c.output
          << ".csv\n";
      for (const auto& cell : cells)
        if (!cell.ok()) err << "cell " << cell.name << " (p0 = " << cell.p0 << "): " << cell.error << "\n";
      return failed == cells.size() ? ExitCode::numeric : ExitCode::ok;
    }

    if (*nul) {
      TestConfig cfg = detail::to_config(c);
      manifest.command = "null";
      manifest.seed = cfg.seed;
      manifest.config = to_json(cfg);
      manifest.config["sizes"] = sizes;
      manifest.config["statistic"] = statistic;
      const RngStream root(cfg.seed);
      json j;
      if (statistic == "fmax") {
        const int m = cfg.m_override ? *cfg.m_override : select_m(sizes, cfg.alpha, cfg.m_rule);
        const EmpiricalNull null = null_fmax(sizes, m, cfg.mode, cfg.mc_reps_fmax, root.derive("null-fmax"), cfg.threads);
        j["statistic"] = "fmax";
        j["m"] = m;
        j["reps"] = null.reps();
        j["upper_quantile"] = null.upper_quantile(cfg.alpha);
        j["sorted_values"] = null.sorted_values();
      } else {
        if (!null_p) throw DomainError("--statistic psi needs --p");
        manifest.config["p"] = *null_p;
        const CalibratedParams params = calibrate(sizes, cfg.calibration_options());
        const EmpiricalNull null = null_psi(params, cfg, *null_p, cfg.mc_reps_psi, root.derive("null-psi"));
        j["statistic"] = "psi";
        j["m"] = params.m;
        j["reps"] = null.reps();
        j["upper_quantile"] = null.upper_quantile(cfg.alpha);
        j["sorted_values"] = null.sorted_values();
      }
      manifest.runtime_ms = detail::elapsed_ms(start);
      j["manifest"] = to_json(manifest);
      detail::emit(j, c.output, out);
      return ExitCode::ok;
    }

    if (*fil) {
      manifest.command = "filter";
      manifest.inputs[expression] = file_digest(expression);
      manifest.inputs[labels_path] = file_digest(labels_path);
      manifest.config = {{"threshold", threshold}};
      const ExpressionMatrix expr = load_expression(expression, labels_path);
      const ExpressionMatrix kept = filter_genes(expr, threshold);
      save_expression(kept, c.output);
      manifest.runtime_ms = detail::elapsed_ms(start);
      json j{{"genes_before", expr.genes.size()},
             {"genes_after", kept.genes.size()},
             {"cells", expr.cells.size()},
             {"threshold", threshold},
             {"output", c.output}};
      j["manifest"] = to_json(manifest);
      if (summary_path.empty()) {
        out << j.dump(2) << '\n';
      } else {
        write_text_file(summary_path, j.dump(2) + "\n");
        out << "kept " << kept.genes.size() << " of " << expr.genes.size() << " genes\n";
      }
      return ExitCode::ok;
    }
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return ExitCode::data;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return ExitCode::numeric;
  } catch (const DomainError& e) {
    err << "usage error: " << e.what() << '\n';
    return ExitCode::usage;
  }
  return ExitCode::usage;
}

}  // namespace rpbf::cli
