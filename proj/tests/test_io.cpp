#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "equiflux/errors.hpp"
#include "equiflux/problems.hpp"
#include "equiflux/runner.hpp"

using namespace equiflux;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

}  // namespace

TEST_CASE("vtk export of the two-triangle square") {
  const Mesh mesh = two_triangle_square(
      {-1, -1}, {1, 1}, [](Vec2) { return BoundaryLabel::dirichlet; });
  const std::vector<double> u(mesh.n_vertices(), 0.0);
  const std::vector<double> eta{0.5, 0.25};
  export_vtk(mesh, {{"u", u}}, {{"eta", eta}}, "out_test.vtk");
  const std::string text = slurp("out_test.vtk");
  CHECK(text.find("POINTS 4 double") != std::string::npos);
  CHECK(text.find("CELLS 2 8") != std::string::npos);
  CHECK(text.find("CELL_TYPES 2") != std::string::npos);
  CHECK(text.find("POINT_DATA 4") != std::string::npos);
  CHECK(text.find("SCALARS u double 1") != std::string::npos);
  CHECK(text.find("CELL_DATA 2") != std::string::npos);
  CHECK(text.find("SCALARS eta double 1") != std::string::npos);
  // field length mismatch is rejected
  CHECK_THROWS_AS(export_vtk(mesh, {{"u", {1.0}}}, {}, "bad.vtk"), Error);
}

TEST_CASE("history csv") {
  SUBCASE("one row, two lines") {
    ConvergenceHistory h;
    HistoryRow r;
    r.step = 0;
    r.ndof = 12;
    r.elements = 30;
    r.eta = 0.5;
    r.osc = 0.01;
    h.rows.push_back(r);
    write_history_csv(h, "hist_one.csv");
    const std::string text = slurp("hist_one.csv");
    int lines = 0;
    for (char c : text)
      if (c == '\n') ++lines;
    CHECK(lines == 2);
    CHECK(text.find("step,ndof,elements,eta,osc,error,ieff,seconds") == 0);
    CHECK(text.find(",,") != std::string::npos);  // empty error/ieff cells
  }
  SUBCASE("slopes refit from the file match the in-memory fit") {
    ConvergenceHistory h;
    const double slope = -0.5, c0 = 3.7;
    for (int i = 0; i < 4; ++i) {
      HistoryRow r;
      r.step = i;
      r.ndof = 100 << (2 * i);
      r.elements = 2 * r.ndof;
      r.eta = c0 * std::pow(static_cast<double>(r.ndof), slope);
      r.osc = 0.0;
      h.rows.push_back(r);
    }
    write_history_csv(h, "hist_fit.csv");
    // reparse
    std::ifstream in("hist_fit.csv");
    std::string line;
    std::getline(in, line);  // header
    std::vector<double> lx, ly;
    while (std::getline(in, line)) {
      std::stringstream ss(line);
      std::string cell;
      std::vector<std::string> cells;
      while (std::getline(ss, cell, ',')) cells.push_back(cell);
      lx.push_back(std::log(std::stod(cells[1])));
      ly.push_back(std::log(std::stod(cells[3])));
    }
    REQUIRE(lx.size() == 4);
    auto fit = [](const std::vector<double>& x, const std::vector<double>& y) {
      const int n = static_cast<int>(x.size());
      double sx = 0, sy = 0, sxx = 0, sxy = 0;
      for (int i = 0; i < n; ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
      }
      return (n * sxy - sx * sy) / (n * sxx - sx * sx);
    };
    // in-memory fit on the same data
    std::vector<double> mx, my;
    for (const auto& r : h.rows) {
      mx.push_back(std::log(static_cast<double>(r.ndof)));
      my.push_back(std::log(r.eta));
    }
    CHECK(std::abs(fit(lx, ly) - fit(mx, my)) <= 1e-12);
    CHECK(fit(lx, ly) == doctest::Approx(slope).epsilon(1e-12));
  }
}

TEST_CASE("config parsing") {
  SUBCASE("sections and values") {
    const RunConfig cfg = parse_config_text(
        "# comment\n[problem]\nid = layer\nkappa = 1e2\nn = 16\n\n[adapt]\n"
        "theta = 0.5  # trailing comment\n",
        "inline");
    CHECK(cfg.get("problem.id") == "layer");
    CHECK(cfg.get_num("problem.kappa", 0.0) == 100.0);
    CHECK(cfg.get_int("problem.n", 0) == 16);
    CHECK(cfg.get_num("adapt.theta", 0.0) == 0.5);
    CHECK(cfg.get_num("adapt.tol", 42.0) == 42.0);  // fallback
  }
  SUBCASE("malformed line reports its number") {
    try {
      parse_config_text("[problem]\nid = layer\nbogus line\n", "inline");
      FAIL("expected ConfigParse");
    } catch (const ConfigParse& e) {
      CHECK(e.line == 3);
    }
  }
  SUBCASE("bad numbers are rejected") {
    const RunConfig cfg = parse_config_text("[a]\nx = 12buckets\n", "inline");
    CHECK_THROWS_AS(cfg.get_num("a.x", 0.0), ConfigParse);
  }
}

TEST_CASE("runner exit codes") {
  SUBCASE("missing config file") {
    RunnerOptions opt;
    opt.subcommand = "solve";
    opt.config_path = "no_such_config.cfg";
    CHECK(run(opt) == 1);
  }
  SUBCASE("unknown problem id") {
    write_file("bad_problem.cfg", "[problem]\nid = nonexistent\n");
    RunnerOptions opt;
    opt.subcommand = "solve";
    opt.config_path = "bad_problem.cfg";
    opt.out_dir = "out_bad";
    CHECK(run(opt) == 1);
  }
  SUBCASE("numerical failure: fully constrained mesh") {
    write_file("empty_sys.cfg", "[problem]\nid = sinsin\nn = 1\n");
    RunnerOptions opt;
    opt.subcommand = "solve";
    opt.config_path = "empty_sys.cfg";
    opt.out_dir = "out_empty";
    CHECK(run(opt) == 2);
  }
  SUBCASE("successful estimate run writes its outputs") {
    write_file("ok.cfg",
               "[problem]\nid = layer\nkappa = 10\nn = 4\n[flux]\nmode = "
               "constrained\n");
    RunnerOptions opt;
    opt.subcommand = "estimate";
    opt.config_path = "ok.cfg";
    opt.out_dir = "out_ok";
    REQUIRE(run(opt) == 0);
    const std::string report = slurp("out_ok/report.txt");
    CHECK(report.find("problem: layer") != std::string::npos);
    CHECK(report.find("guarantee: equilibrated upper bound") != std::string::npos);
    CHECK(report.find("ieff:") != std::string::npos);
    const std::string ind = slurp("out_ok/indicators.csv");
    CHECK(ind.find("element,eta,osc,eps_norm,r_norm") == 0);
  }
}

TEST_CASE("deterministic adapt runs produce byte-identical csv") {
  write_file("det.cfg",
             "[problem]\nid = layer\nkappa = 10\nn = 4\n[adapt]\ntol = 0\n"
             "max_steps = 3\n");
  RunnerOptions opt;
  opt.subcommand = "adapt";
  opt.config_path = "det.cfg";
  opt.deterministic = true;
  opt.out_dir = "out_det1";
  REQUIRE(run(opt) == 0);
  opt.out_dir = "out_det2";
  REQUIRE(run(opt) == 0);
  CHECK(slurp("out_det1/history.csv") == slurp("out_det2/history.csv"));
  CHECK(slurp("out_det1/history.csv").find("0.0000000000000000e+00\n") !=
        std::string::npos);
}

TEST_CASE("sweep writes one row per kappa") {
  write_file("sweep.cfg",
             "[problem]\nid = layer\nn = 4\n[sweep]\nkappa_list = 0.5, 5, 50\n");
  RunnerOptions opt;
  opt.subcommand = "sweep";
  opt.config_path = "sweep.cfg";
  opt.out_dir = "out_sweep";
  REQUIRE(run(opt) == 0);
  const std::string text = slurp("out_sweep/history.csv");
  CHECK(text.find("kappa,eta,error,ieff") == 0);
  int lines = 0;
  for (char c : text)
    if (c == '\n') ++lines;
  CHECK(lines == 4);
}
