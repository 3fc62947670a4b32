#pragma once

#include <optional>
#include <vector>

#include "equiflux/estimator.hpp"
#include "equiflux/flux.hpp"
#include "equiflux/problems.hpp"

namespace equiflux {

/// Minimal-cardinality bulk marking: the returned set M (sorted by indicator
/// descending, ties by index ascending) is the smallest with
/// sum_{K in M} eta_K^2 >= theta * sum_K eta_K^2.
std::vector<int> dorfler_mark(const std::vector<double>& indicators, double theta);

struct HistoryRow {
  int step = 0;
  int ndof = 0;
  int elements = 0;
  double eta = 0.0;
  double osc = 0.0;
  std::optional<double> error;
  std::optional<double> ieff;
  double seconds = 0.0;
};

struct ConvergenceHistory {
  std::vector<HistoryRow> rows;
};

enum class StopReason { tolerance, step_limit };
enum class ErrorMeasure { automatic, exact, reference, none };

struct AdaptOptions {
  double tol = 0.0;
  double theta = 0.5;
  int max_steps = 30;
  FluxMode mode = FluxMode::constrained;
  ErrorMeasure measure = ErrorMeasure::automatic;
  double solver_tol = 1e-12;
  double error_quad_tol = 1e-10;
};

struct AdaptResult {
  ConvergenceHistory history;
  Mesh mesh;
  P1Solution u_h;
  EstimateReport report;
  StopReason stop = StopReason::tolerance;
};

/// SOLVE - ESTIMATE - STOP - MARK - REFINE. Marking uses the indicators alone;
/// the stopping total includes the oscillation terms.
AdaptResult adapt_solve(const ProblemSpec& problem, const AdaptOptions& options);

}  // namespace equiflux
