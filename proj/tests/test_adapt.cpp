#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "equiflux/adapt.hpp"
#include "equiflux/errors.hpp"

using namespace equiflux;

TEST_CASE("dorfler marking on a hand-checked vector") {
  const std::vector<double> eta{4.0, 3.0, 2.0, 1.0};
  // total of squares 30, threshold 15: the single largest element suffices
  const auto marked = dorfler_mark(eta, 0.5);
  REQUIRE(marked.size() == 1);
  CHECK(marked[0] == 0);
}

TEST_CASE("dorfler corner cases") {
  const std::vector<double> eta{1.0, 0.0, 2.0, 0.0};
  CHECK(dorfler_mark(eta, 0.0).empty());
  CHECK(dorfler_mark(std::vector<double>(5, 0.0), 0.7).empty());
  const auto all = dorfler_mark(eta, 1.0);
  CHECK(all.size() == 2);  // only the positive indicators
  CHECK_THROWS_AS(dorfler_mark(eta, 1.5), Error);
}

TEST_CASE("dorfler minimality on random vectors") {
  std::mt19937 rng(77);
  std::uniform_real_distribution<double> value(0.0, 1.0);
  std::uniform_int_distribution<int> size(1, 60);
  std::uniform_real_distribution<double> theta_d(0.05, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> eta(size(rng));
    for (double& e : eta) e = value(rng) < 0.1 ? 0.0 : value(rng);
    const double theta = theta_d(rng);
    const auto marked = dorfler_mark(eta, theta);
    double total = 0.0;
    for (double e : eta) total += e * e;
    double acc = 0.0;
    for (int k : marked) acc += eta[k] * eta[k];
    if (total == 0.0) {
      CHECK(marked.empty());
      continue;
    }
    CHECK(acc >= theta * total - 1e-14 * total);
    if (!marked.empty()) {
      // dropping the last marked element must break the bulk criterion
      const double without = acc - eta[marked.back()] * eta[marked.back()];
      CHECK(without < theta * total);
    }
  }
}

TEST_CASE("adapt stops immediately for a generous tolerance") {
  const ProblemSpec spec = layer_problem_spec(5.0, 4);
  AdaptOptions opt;
  opt.tol = 1e9;
  opt.max_steps = 10;
  const AdaptResult res = adapt_solve(spec, opt);
  CHECK(res.history.rows.size() == 1);
  CHECK(res.stop == StopReason::tolerance);
  CHECK(res.history.rows[0].error.has_value());
  CHECK(*res.history.rows[0].ieff >= 1.0 - 1e-6);
}

TEST_CASE("adaptive refinement drives the estimator down") {
  const ProblemSpec spec = layer_problem_spec(50.0, 4);
  AdaptOptions opt;
  opt.tol = 0.0;
  opt.theta = 0.5;
  opt.max_steps = 8;
  const AdaptResult res = adapt_solve(spec, opt);
  CHECK(res.stop == StopReason::step_limit);
  REQUIRE(res.history.rows.size() == 8);
  const auto& rows = res.history.rows;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    CHECK(rows[i].ndof > rows[i - 1].ndof);  // strictly increasing
    CHECK(std::isfinite(rows[i].eta));
  }
  CHECK(rows.back().eta < rows.front().eta);
  // constrained-mode effectivity stays above one on every step
  for (const auto& r : rows) {
    REQUIRE(r.ieff.has_value());
    CHECK(*r.ieff >= 1.0 - 1e-6);
  }
}

TEST_CASE("deterministic histories") {
  const ProblemSpec spec = layer_problem_spec(10.0, 4);
  AdaptOptions opt;
  opt.tol = 0.0;
  opt.max_steps = 4;
  const AdaptResult a = adapt_solve(spec, opt);
  const AdaptResult b = adapt_solve(spec, opt);
  REQUIRE(a.history.rows.size() == b.history.rows.size());
  for (std::size_t i = 0; i < a.history.rows.size(); ++i) {
    CHECK(a.history.rows[i].eta == b.history.rows[i].eta);
    CHECK(a.history.rows[i].ndof == b.history.rows[i].ndof);
    CHECK(a.history.rows[i].error == b.history.rows[i].error);
  }
}

TEST_CASE("tolerance stop is sound for guaranteed runs") {
  const ProblemSpec spec = layer_problem_spec(5.0, 8);
  AdaptOptions opt;
  opt.tol = 0.3;
  opt.theta = 0.5;
  opt.max_steps = 20;
  const AdaptResult res = adapt_solve(spec, opt);
  REQUIRE(res.stop == StopReason::tolerance);
  CHECK(res.report.equilibrated);
  const double err = exact_error(res.mesh, res.u_h, spec);
  CHECK(err <= opt.tol);
}
