#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "spherefd/assembly.hpp"
#include "spherefd/atlas.hpp"
#include "spherefd/config.hpp"
#include "spherefd/errors.hpp"
#include "spherefd/geometry.hpp"
#include "spherefd/kernels.hpp"
#include "spherefd/solver.hpp"

namespace spherefd {

/// r0 exponent correction of the discrete max-norm rate.
inline int discrete_rate_correction(int d, int kappa) {
  return std::max(0, d / 2 - 2 * kappa + 1);
}

/// Predicted discrete max-norm convergence order s - 2 kappa - d - r0 for a
/// kernel of nominal smoothness s.
inline double theoretical_order(double s, int d, int kappa) {
  return s - 2.0 * kappa - d - discrete_rate_correction(d, kappa);
}

/// Exact solution u and right-hand side f = L u built from an eigenfunction
/// expansion: u = sum c Y_l^m gives f = sum c (lambda_l + alpha)^kappa Y_l^m,
/// with no auxiliary discretization.
struct ManufacturedProblem {
  std::function<double(const SpherePoint&)> u;
  std::function<double(const SpherePoint&)> f;
};

inline ManufacturedProblem manufactured_problem(ManifoldDim dim,
                                                const OperatorSpec& op,
                                                std::span<const HarmonicTerm> terms) {
  if (terms.empty()) throw InvalidArgument("manufactured solution needs at least one term");
  if (!(op.alpha > 0.0)) throw InvalidArgument("manufactured problem requires alpha > 0");
  struct Piece {
    Eigenfunction fn;
    double u_coeff;
    double f_coeff;
  };
  auto pieces = std::make_shared<std::vector<Piece>>();
  for (const auto& term : terms) {
    Eigenfunction fn(dim, term.l, term.m);
    const double factor = std::pow(fn.eigenvalue() + op.alpha, op.kappa);
    pieces->push_back({fn, term.coeff, term.coeff * factor});
  }
  ManufacturedProblem out;
  out.u = [pieces](const SpherePoint& x) {
    double acc = 0.0;
    for (const auto& p : *pieces) acc += p.u_coeff * p.fn(x);
    return acc;
  };
  out.f = [pieces](const SpherePoint& x) {
    double acc = 0.0;
    for (const auto& p : *pieces) acc += p.f_coeff * p.fn(x);
    return acc;
  };
  return out;
}

struct RunResult {
  int n = 0;
  double h_A = 0.0;
  double max_node_error = 0.0;
  double rms_node_error = 0.0;
  SolveReport solve;
  AtlasReport diagnostics;
  Eigen::VectorXd exact;  // u|_X
};

namespace detail {

template <typename Fn>
auto run_stage(const char* stage, Fn&& fn) {
  try {
    return fn();
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw Error(std::string(stage) + ": " + e.what());
  }
}

inline NodeSet make_nodes(const ExperimentConfig& c) {
  if (c.nodes.type == "fibonacci") return fibonacci_nodes(c.nodes.n, c.manifold());
  if (c.nodes.type == "random") return random_nodes(c.nodes.n, c.manifold(), c.nodes.seed);
  std::ifstream in(c.nodes.path);
  if (!in) throw DataError("cannot open node CSV '" + c.nodes.path + "'", -1);
  return NodeSet::read_csv(in);
}

}  // namespace detail

/// End-to-end pipeline: nodes -> atlas -> local systems -> global least
/// squares -> node errors against the manufactured solution.  Structured
/// errors from any stage propagate with a stage prefix.
inline RunResult run_solve(const ExperimentConfig& c) {
  const ManifoldDim dim = c.manifold();

  const NodeSet nodes = detail::run_stage("nodes", [&] { return detail::make_nodes(c); });

  AtlasParams aparams;
  aparams.target_patch_size = c.resolved_nu_star();
  aparams.overlap_factor = c.atlas.beta;
  aparams.determining_order = c.atlas.order;
  const Atlas atlas =
      detail::run_stage("atlas", [&] { return build_atlas(nodes, aparams); });

  const int depth = 2 * c.op.kappa;
  const ZonalProfile psi = detail::run_stage("kernel", [&] {
    const RadialProfile phi =
        c.kernel.family == KernelFamily::matern
            ? matern_profile(c.kernel.param, c.kernel.eps)
            : wendland_profile(static_cast<int>(std::lround(c.kernel.param)), c.kernel.eps);
    return zonal_from_radial(phi, depth);
  });

  const EllipticOperator op(c.op.kappa, c.op.alpha, dim);
  const ManufacturedProblem problem = manufactured_problem(dim, c.op, c.solution);

  const GlobalLeastSquares sys = detail::run_stage("assembly", [&] {
    const Eigen::VectorXd f_values = rhs_from_function(problem.f, nodes);
    return assemble_global(atlas, nodes, psi, op, f_values, c.atlas.cond_limit);
  });

  SolveParams sparams;
  sparams.method = c.solver.method;
  sparams.rel_tol = c.solver.tol;
  sparams.max_iter = c.solver.max_iter;
  SolveReport solve =
      detail::run_stage("solve", [&] { return solve_least_squares(sys, sparams); });

  RunResult result;
  result.n = nodes.size();
  result.exact.resize(nodes.size());
  for (int j = 0; j < nodes.size(); ++j) result.exact(j) = problem.u(nodes[j]);
  const Eigen::VectorXd err = (result.exact - solve.solution).cwiseAbs();
  result.max_node_error = err.maxCoeff();
  result.rms_node_error = std::sqrt(err.squaredNorm() / err.size());
  result.diagnostics = atlas_diagnostics(atlas, nodes, c.atlas.order, &psi,
                                         c.atlas.lebesgue_samples);
  result.h_A = result.diagnostics.stats.h_A;
  result.solve = std::move(solve);
  return result;
}

/// One row of a convergence sweep.
struct ConvergenceRecord {
  int n = 0;
  double h_A = 0.0;
  double max_node_error = 0.0;
  double rms_node_error = 0.0;
  double residual_norm = 0.0;
  std::optional<double> estimated_order;  // from the previous row
  double theoretical_order = 0.0;
};

inline std::vector<ConvergenceRecord> convergence_study(
    const ExperimentConfig& base, std::span<const int> n_list,
    std::vector<RunResult>* runs_out = nullptr) {
  if (n_list.size() < 2) throw InvalidArgument("convergence study needs at least two sizes");
  for (std::size_t i = 1; i < n_list.size(); ++i) {
    if (n_list[i] <= n_list[i - 1]) throw InvalidArgument("n_list must be strictly increasing");
  }
  const double s = [&] {
    const RadialProfile phi =
        base.kernel.family == KernelFamily::matern
            ? matern_profile(base.kernel.param, base.kernel.eps)
            : wendland_profile(static_cast<int>(std::lround(base.kernel.param)), base.kernel.eps);
    return phi.native_smoothness(base.manifold());
  }();
  const double theory = theoretical_order(s, base.dim, base.op.kappa);

  std::vector<ConvergenceRecord> records;
  for (int n : n_list) {
    ExperimentConfig c = base;
    c.nodes.n = n;
    const RunResult run = run_solve(c);
    ConvergenceRecord rec;
    rec.n = run.n;
    rec.h_A = run.h_A;
    rec.max_node_error = run.max_node_error;
    rec.rms_node_error = run.rms_node_error;
    rec.residual_norm = run.solve.residual_norm;
    rec.theoretical_order = theory;
    if (!records.empty()) {
      const auto& prev = records.back();
      rec.estimated_order = std::log(prev.max_node_error / rec.max_node_error) /
                            std::log(prev.h_A / rec.h_A);
    }
    records.push_back(rec);
    if (runs_out != nullptr) runs_out->push_back(run);
  }
  return records;
}

/// Order estimate log(e_prev/e_next) / log(h_prev/h_next).
inline double estimate_order(double e_prev, double e_next, double h_prev, double h_next) {
  return std::log(e_prev / e_next) / std::log(h_prev / h_next);
}

namespace detail {

inline std::string csv_number(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", x);
  return buf;
}

}  // namespace detail

inline std::string convergence_csv(std::span<const ConvergenceRecord> records) {
  std::string out = "n,h_A,max_err,rms_err,residual,est_order,theory_order\n";
  for (const auto& r : records) {
    out += std::to_string(r.n);
    out += ',';
    out += detail::csv_number(r.h_A);
    out += ',';
    out += detail::csv_number(r.max_node_error);
    out += ',';
    out += detail::csv_number(r.rms_node_error);
    out += ',';
    out += detail::csv_number(r.residual_norm);
    out += ',';
    if (r.estimated_order) out += detail::csv_number(*r.estimated_order);
    out += ',';
    out += detail::csv_number(r.theoretical_order);
    out += '\n';
  }
  return out;
}

/// Atomic file write: temp file in the target directory, then rename.
inline void write_file_atomic(const std::filesystem::path& path,
                              const std::string& content) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open '" + tmp.string() + "' for writing");
    out << content;
    if (!out) throw Error("short write to '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

inline nlohmann::json to_json(const DeterminingCheck& c) {
  return {{"pass", c.pass},
          {"rank", c.rank},
          {"required_rank", c.required_rank},
          {"cond", std::isfinite(c.cond) ? nlohmann::json(c.cond) : nlohmann::json(nullptr)}};
}

inline nlohmann::json to_json(const AtlasReport& report) {
  nlohmann::json global{
      {"n", report.n},
      {"patches", report.patch_count},
      {"determining_order", report.determining_order},
      {"h_A", report.stats.h_A},
      {"delta", report.stats.delta},
      {"q", std::isfinite(report.stats.quasi_uniformity)
                ? nlohmann::json(report.stats.quasi_uniformity)
                : nlohmann::json(nullptr)},
      {"mu", report.stats.covering},
      {"nu_max", report.stats.max_patch_size},
      {"duplicate_nodes", report.stats.duplicate_nodes},
      {"coverage_complete", report.coverage_complete},
      {"all_checks_pass", report.all_checks_pass},
      {"max_lebesgue_bound", report.max_lebesgue_bound}};
  nlohmann::json patches = nlohmann::json::array();
  for (const auto& p : report.patches) {
    nlohmann::json overlaps = nlohmann::json::array();
    for (const auto& [neighbor, check] : p.overlap_checks) {
      overlaps.push_back({{"neighbor", neighbor}, {"check", to_json(check)}});
    }
    patches.push_back({{"index", p.index},
                       {"n_nodes", p.n_nodes},
                       {"radius", p.radius},
                       {"h", p.chart_diameter},
                       {"determining", to_json(p.own_check)},
                       {"overlaps", overlaps},
                       {"lebesgue_bound", p.lebesgue_bound},
                       {"gram_cond", (p.gram_cond >= 0 && std::isfinite(p.gram_cond))
                                         ? nlohmann::json(p.gram_cond)
                                         : nlohmann::json(nullptr)}});
  }
  return {{"global", global}, {"patches", patches}};
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json solution = nlohmann::json::array();
  for (const auto& t : c.solution) {
    solution.push_back({{"l", t.l}, {"m", t.m}, {"coeff", t.coeff}});
  }
  return {
      {"dim", c.dim},
      {"operator", {{"kappa", c.op.kappa}, {"alpha", c.op.alpha}}},
      {"kernel",
       {{"family", c.kernel.family == KernelFamily::matern ? "matern" : "wendland"},
        {"param", c.kernel.param},
        {"eps", c.kernel.eps}}},
      {"nodes",
       {{"type", c.nodes.type}, {"n", c.nodes.n}, {"seed", c.nodes.seed}, {"path", c.nodes.path}}},
      {"atlas",
       {{"nu_star", c.resolved_nu_star()},
        {"beta", c.atlas.beta},
        {"order", c.atlas.order},
        {"lebesgue_samples", c.atlas.lebesgue_samples},
        {"cond_limit", c.atlas.cond_limit}}},
      {"solution", solution},
      {"solver",
       {{"method", to_string(c.solver.method)},
        {"tol", c.solver.tol},
        {"max_iter", c.solver.max_iter}}},
      {"out_dir", c.out_dir},
      {"n_list", c.n_list}};
}

inline nlohmann::json to_json(const RunResult& r, bool include_solution) {
  nlohmann::json j{{"n", r.n},
                   {"h_A", r.h_A},
                   {"max_node_error", r.max_node_error},
                   {"rms_node_error", r.rms_node_error},
                   {"solve",
                    {{"method", to_string(r.solve.method)},
                     {"residual_norm", r.solve.residual_norm},
                     {"iterations", r.solve.iterations},
                     {"converged", r.solve.converged}}},
                   {"atlas", to_json(r.diagnostics)["global"]}};
  if (include_solution) {
    j["solution"] = std::vector<double>(r.solve.solution.data(),
                                        r.solve.solution.data() + r.solve.solution.size());
    j["exact"] =
        std::vector<double>(r.exact.data(), r.exact.data() + r.exact.size());
  }
  return j;
}

}  // namespace spherefd
