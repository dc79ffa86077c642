#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "spherefd/config.hpp"
#include "spherefd/harness.hpp"

namespace fs = std::filesystem;

namespace {

struct CommonOptions {
  std::string config_path;
  std::optional<std::string> out_dir;
  std::optional<std::string> solver;
  std::optional<double> tol;
  std::optional<int> max_iter;
  std::optional<std::uint64_t> seed;
  bool print_config = false;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("--config", opts.config_path, "configuration file")->required();
  cmd->add_option("--out", opts.out_dir, "output directory (overrides out_dir)");
  cmd->add_option("--solver", opts.solver, "dense-qr or normal-cg");
  cmd->add_option("--tol", opts.tol, "solver relative tolerance");
  cmd->add_option("--max-iter", opts.max_iter, "solver iteration cap (0 = 10 n)");
  cmd->add_option("--seed", opts.seed, "node generator seed (overrides nodes.seed)");
  cmd->add_flag("--print-config", opts.print_config,
                "print the effective configuration and exit");
}

spherefd::ExperimentConfig load_config(const CommonOptions& opts) {
  std::ifstream in(opts.config_path);
  if (!in) {
    throw spherefd::ConfigError("cannot open configuration file '" + opts.config_path + "'",
                                "config");
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  spherefd::ExperimentConfig c = spherefd::parse_config(buf.str());
  if (opts.out_dir) c.out_dir = *opts.out_dir;
  if (opts.solver) {
    if (*opts.solver == "dense-qr") c.solver.method = spherefd::SolveMethod::dense_qr;
    else if (*opts.solver == "normal-cg") c.solver.method = spherefd::SolveMethod::normal_cg;
    else throw spherefd::ConfigError("--solver must be dense-qr or normal-cg", "solver.method");
  }
  if (opts.tol) {
    if (!(*opts.tol > 0.0 && *opts.tol < 1.0)) {
      throw spherefd::ConfigError("--tol must lie in (0, 1)", "solver.tol");
    }
    c.solver.tol = *opts.tol;
  }
  if (opts.max_iter) c.solver.max_iter = *opts.max_iter;
  if (opts.seed) c.nodes.seed = *opts.seed;
  return c;
}

int run_solve_cmd(const CommonOptions& opts) {
  spherefd::ExperimentConfig c = load_config(opts);
  if (opts.print_config) {
    std::cout << spherefd::serialize_config(c);
    return 0;
  }
  spherefd::RunResult result = spherefd::run_solve(c);
  nlohmann::json bundle{{"config", spherefd::to_json(c)},
                        {"run", spherefd::to_json(result, true)}};
  spherefd::write_file_atomic(fs::path(c.out_dir) / "results.json", bundle.dump(2) + "\n");
  std::printf("n=%d  h_A=%.6g  max_err=%.6g  rms_err=%.6g  residual=%.6g  %s\n",
              result.n, result.h_A, result.max_node_error, result.rms_node_error,
              result.solve.residual_norm,
              result.solve.converged ? "converged" : "NOT CONVERGED");
  return result.solve.converged ? 0 : 1;
}

int run_converge_cmd(const CommonOptions& opts) {
  spherefd::ExperimentConfig c = load_config(opts);
  if (opts.print_config) {
    std::cout << spherefd::serialize_config(c);
    return 0;
  }
  std::vector<spherefd::RunResult> runs;
  std::vector<spherefd::ConvergenceRecord> records;
  try {
    records = spherefd::convergence_study(c, c.n_list, &runs);
  } catch (...) {
    // Preserve partial results before the error surfaces.
    if (!runs.empty()) {
      std::vector<spherefd::ConvergenceRecord> partial;
      for (std::size_t i = 0; i < runs.size(); ++i) {
        spherefd::ConvergenceRecord rec;
        rec.n = runs[i].n;
        rec.h_A = runs[i].h_A;
        rec.max_node_error = runs[i].max_node_error;
        rec.rms_node_error = runs[i].rms_node_error;
        rec.residual_norm = runs[i].solve.residual_norm;
        if (i > 0) {
          rec.estimated_order =
              spherefd::estimate_order(partial.back().max_node_error, rec.max_node_error,
                                       partial.back().h_A, rec.h_A);
        }
        partial.push_back(rec);
      }
      spherefd::write_file_atomic(fs::path(c.out_dir) / "convergence.csv",
                                  spherefd::convergence_csv(partial));
    }
    throw;
  }

  const std::string csv = spherefd::convergence_csv(records);
  spherefd::write_file_atomic(fs::path(c.out_dir) / "convergence.csv", csv);
  nlohmann::json run_array = nlohmann::json::array();
  for (const auto& r : runs) run_array.push_back(spherefd::to_json(r, false));
  nlohmann::json bundle{{"config", spherefd::to_json(c)}, {"runs", run_array}};
  spherefd::write_file_atomic(fs::path(c.out_dir) / "results.json", bundle.dump(2) + "\n");
  std::fputs(csv.c_str(), stdout);
  return 0;
}

int run_diagnose_cmd(const CommonOptions& opts) {
  spherefd::ExperimentConfig c = load_config(opts);
  if (opts.print_config) {
    std::cout << spherefd::serialize_config(c);
    return 0;
  }
  const spherefd::NodeSet nodes = [&] {
    if (c.nodes.type == "fibonacci") return spherefd::fibonacci_nodes(c.nodes.n, c.manifold());
    if (c.nodes.type == "random") return spherefd::random_nodes(c.nodes.n, c.manifold(), c.nodes.seed);
    std::ifstream in(c.nodes.path);
    if (!in) throw spherefd::DataError("cannot open node CSV '" + c.nodes.path + "'", -1);
    return spherefd::NodeSet::read_csv(in);
  }();
  spherefd::AtlasParams params;
  params.target_patch_size = c.resolved_nu_star();
  params.overlap_factor = c.atlas.beta;
  params.determining_order = c.atlas.order;
  const spherefd::Atlas atlas = spherefd::build_atlas(nodes, params);
  const spherefd::ZonalProfile psi = [&] {
    const spherefd::RadialProfile phi =
        c.kernel.family == spherefd::KernelFamily::matern
            ? spherefd::matern_profile(c.kernel.param, c.kernel.eps)
            : spherefd::wendland_profile(static_cast<int>(std::lround(c.kernel.param)),
                                         c.kernel.eps);
    return spherefd::zonal_from_radial(phi, 0);
  }();
  const spherefd::AtlasReport report =
      spherefd::atlas_diagnostics(atlas, nodes, c.atlas.order, &psi, c.atlas.lebesgue_samples);

  spherefd::write_file_atomic(fs::path(c.out_dir) / "diagnostics.json",
                              spherefd::to_json(report).dump(2) + "\n");

  std::printf("nodes %d in %d patches   h_A=%.5g  delta=%.5g  q=%.5g  mu=%d  nu_max=%d\n",
              report.n, report.patch_count, report.stats.h_A, report.stats.delta,
              report.stats.quasi_uniformity, report.stats.covering,
              report.stats.max_patch_size);
  std::printf("%6s %8s %10s %10s %12s %12s %10s\n", "patch", "nodes", "radius",
              "determ", "overlaps_ok", "lebesgue", "gram_cond");
  for (const auto& p : report.patches) {
    int overlaps_ok = 0;
    for (const auto& [neighbor, check] : p.overlap_checks) overlaps_ok += check.pass ? 1 : 0;
    std::printf("%6d %8d %10.5g %10s %8d/%-3zu %12.5g %10.3g\n", p.index, p.n_nodes,
                p.radius, p.own_check.pass ? "pass" : "FAIL", overlaps_ok,
                p.overlap_checks.size(), p.lebesgue_bound, p.gram_cond);
  }
  std::printf("assumption checks: %s\n", report.all_checks_pass ? "all pass" : "FAILURES (see diagnostics.json)");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kernel-based least-squares meshless finite differences on S^1 and S^2"};
  app.require_subcommand(1);

  CommonOptions solve_opts, converge_opts, diagnose_opts;
  CLI::App* solve = app.add_subcommand("solve", "run one manufactured-solution experiment");
  add_common(solve, solve_opts);
  CLI::App* converge = app.add_subcommand("converge", "run a convergence sweep over n_list");
  add_common(converge, converge_opts);
  CLI::App* diagnose = app.add_subcommand("diagnose", "build the atlas and report assumption diagnostics");
  add_common(diagnose, diagnose_opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (solve->parsed()) return run_solve_cmd(solve_opts);
    if (converge->parsed()) return run_converge_cmd(converge_opts);
    if (diagnose->parsed()) return run_diagnose_cmd(diagnose_opts);
  } catch (const spherefd::ConfigError& e) {
    std::fprintf(stderr, "configuration error [%s]: %s\n", e.key.c_str(), e.what());
    return 2;
  } catch (const spherefd::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
