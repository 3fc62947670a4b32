#include "equiflux/adapt.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "equiflux/errors.hpp"

namespace equiflux {

std::vector<int> dorfler_mark(const std::vector<double>& indicators, double theta) {
  if (!(theta >= 0.0 && theta <= 1.0)) throw Error("dorfler_mark: theta must be in [0,1]");
  std::vector<int> order(indicators.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (indicators[a] != indicators[b]) return indicators[a] > indicators[b];
    return a < b;
  });
  // total accumulated in the marking order so the theta = 1 case is exact
  double total = 0.0;
  for (int k : order) total += indicators[k] * indicators[k];
  if (theta == 0.0 || total == 0.0) return {};
  const double threshold = theta * total;
  std::vector<int> marked;
  double acc = 0.0;
  for (int k : order) {
    if (indicators[k] == 0.0) break;
    marked.push_back(k);
    acc += indicators[k] * indicators[k];
    if (acc >= threshold) break;
  }
  return marked;
}

AdaptResult adapt_solve(const ProblemSpec& problem, const AdaptOptions& options) {
  if (!(options.tol >= 0.0)) throw Error("adapt_solve: tol must be >= 0");
  AdaptResult res;
  res.mesh = problem.initial_mesh();

  ErrorMeasure measure = options.measure;
  if (measure == ErrorMeasure::automatic)
    measure = problem.exact ? ErrorMeasure::exact : ErrorMeasure::none;

  const auto t0 = std::chrono::steady_clock::now();
  for (int step = 0; step < options.max_steps; ++step) {
    const SparseSystem system = assemble(res.mesh, problem);
    res.u_h = solve_cg(res.mesh, system, options.solver_tol);
    const ProblemData data = build_problem_data(res.mesh, problem);
    const FluxResult flux = reconstruct_flux(res.mesh, res.u_h, problem, data,
                                             options.mode);
    res.report = estimate(res.mesh, res.u_h, problem, data, flux.tau, options.mode);

    HistoryRow row;
    row.step = step;
    row.ndof = system.dofs.n_free();
    row.elements = res.mesh.n_elements();
    row.eta = res.report.total;
    row.osc = res.report.osc_total;
    if (measure == ErrorMeasure::exact) {
      row.error = exact_error(res.mesh, res.u_h, problem, options.error_quad_tol);
    } else if (measure == ErrorMeasure::reference) {
      row.error = reference_error(res.mesh, res.u_h, problem, options.solver_tol);
    }
    if (row.error && *row.error > 0.0) row.ieff = res.report.total / *row.error;
    row.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    res.report.error = row.error;
    res.report.ieff = row.ieff;
    res.history.rows.push_back(row);

    if (res.report.total <= options.tol) {
      res.stop = StopReason::tolerance;
      return res;
    }
    if (step == options.max_steps - 1) break;

    std::vector<double> eta(res.mesh.n_elements());
    for (int k = 0; k < res.mesh.n_elements(); ++k)
      eta[k] = res.report.elements[k].eta;
    const std::vector<int> marked = dorfler_mark(eta, options.theta);
    if (marked.empty()) {
      res.stop = StopReason::tolerance;
      return res;
    }
    res.mesh = bisect(res.mesh, marked, problem.kappa, 64, problem.boundary_midpoint);
  }
  res.stop = StopReason::step_limit;
  return res;
}

}  // namespace equiflux
