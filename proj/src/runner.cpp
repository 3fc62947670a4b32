#include "equiflux/runner.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "equiflux/errors.hpp"
#include "equiflux/flux.hpp"

namespace equiflux {

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.16e", v);
  return buf;
}

}  // namespace

void export_vtk(const Mesh& mesh,
                const std::vector<std::pair<std::string, std::vector<double>>>& point_fields,
                const std::vector<std::pair<std::string, std::vector<double>>>& cell_fields,
                const std::string& path) {
  for (const auto& [name, vals] : point_fields)
    if (static_cast<int>(vals.size()) != mesh.n_vertices())
      throw Error("vtk point field '" + name + "' length mismatch");
  for (const auto& [name, vals] : cell_fields)
    if (static_cast<int>(vals.size()) != mesh.n_elements())
      throw Error("vtk cell field '" + name + "' length mismatch");

  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << "# vtk DataFile Version 3.0\nequiflux mesh\nASCII\n"
      << "DATASET UNSTRUCTURED_GRID\n";
  out << "POINTS " << mesh.n_vertices() << " double\n";
  for (const Vec2& v : mesh.vertices)
    out << fmt17(v.x) << ' ' << fmt17(v.y) << " 0\n";
  out << "CELLS " << mesh.n_elements() << ' ' << 4 * mesh.n_elements() << "\n";
  for (const auto& el : mesh.elements)
    out << "3 " << el.v[0] << ' ' << el.v[1] << ' ' << el.v[2] << "\n";
  out << "CELL_TYPES " << mesh.n_elements() << "\n";
  for (int k = 0; k < mesh.n_elements(); ++k) out << "5\n";
  if (!point_fields.empty()) {
    out << "POINT_DATA " << mesh.n_vertices() << "\n";
    for (const auto& [name, vals] : point_fields) {
      out << "SCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
      for (double v : vals) out << fmt17(v) << "\n";
    }
  }
  if (!cell_fields.empty()) {
    out << "CELL_DATA " << mesh.n_elements() << "\n";
    for (const auto& [name, vals] : cell_fields) {
      out << "SCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
      for (double v : vals) out << fmt17(v) << "\n";
    }
  }
  if (!out) throw IoError("write failed for " + path);
}

void write_history_csv(const ConvergenceHistory& history, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << "step,ndof,elements,eta,osc,error,ieff,seconds\n";
  for (const HistoryRow& r : history.rows) {
    out << r.step << ',' << r.ndof << ',' << r.elements << ',' << fmt17(r.eta) << ','
        << fmt17(r.osc) << ',' << (r.error ? fmt17(*r.error) : "") << ','
        << (r.ieff ? fmt17(*r.ieff) : "") << ',' << fmt17(r.seconds) << "\n";
  }
  if (!out) throw IoError("write failed for " + path);
}

std::string RunConfig::get(const std::string& key, const std::string& fallback) const {
  const auto it = values.find(key);
  return it == values.end() ? fallback : it->second;
}

double RunConfig::get_num(const std::string& key, double fallback) const {
  const auto it = values.find(key);
  if (it == values.end()) return fallback;
  try {
    std::size_t pos = 0;
    const double v = std::stod(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument(key);
    return v;
  } catch (const std::exception&) {
    throw ConfigParse("key '" + key + "' is not a number: " + it->second, 0);
  }
}

int RunConfig::get_int(const std::string& key, int fallback) const {
  const double v = get_num(key, fallback);
  return static_cast<int>(std::llround(v));
}

RunConfig parse_config_text(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line, section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigParse(origin + ": unterminated section header", line_no);
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigParse(origin + ": expected key = value", line_no);
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigParse(origin + ": empty key", line_no);
    cfg.values[section.empty() ? key : section + "." + key] = value;
  }
  return cfg;
}

RunConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path);
}

namespace {

struct LoadedProblem {
  ProblemSpec spec;
  FluxMode mode = FluxMode::constrained;
};

LoadedProblem load_problem(const RunConfig& cfg) {
  LoadedProblem lp;
  const std::string id = cfg.get("problem.id");
  if (id.empty()) throw ConfigParse("missing problem.id", 0);
  const double kappa = cfg.get_num("problem.kappa", 1.0);
  const int n = cfg.get_int("problem.n", 16);
  const int segments = cfg.get_int("problem.segments", 64);
  if (id == "file") {
    const std::string mesh_file = cfg.get("problem.mesh_file");
    if (mesh_file.empty()) throw ConfigParse("problem.id = file needs problem.mesh_file", 0);
    ProblemSpec spec;
    spec.id = "file:" + mesh_file;
    spec.kappa = [kappa](Vec2) { return kappa; };
    spec.source = [](Vec2) { return 1.0; };
    spec.neumann = [](Vec2) { return 0.0; };
    const KappaRule krule = spec.kappa;
    spec.initial_mesh = [mesh_file, krule]() { return read_mesh(mesh_file, krule); };
    lp.spec = std::move(spec);
  } else {
    lp.spec = problem_by_id(id, kappa, n, segments);
  }
  lp.spec.kappa0 = cfg.get_num("flux.kappa0", lp.spec.kappa0);
  lp.spec.zeta0 = cfg.get_num("flux.zeta0", lp.spec.zeta0);
  const std::string mode = cfg.get("flux.mode", "constrained");
  if (mode == "constrained")
    lp.mode = FluxMode::constrained;
  else if (mode == "penalized")
    lp.mode = FluxMode::penalized;
  else
    throw ConfigParse("flux.mode must be constrained or penalized", 0);
  return lp;
}

struct StepOutput {
  Mesh mesh;
  P1Solution u_h;
  EstimateReport report;
  int ndof = 0;
};

StepOutput solve_and_estimate(const ProblemSpec& spec, FluxMode mode,
                              double solver_tol) {
  StepOutput out;
  out.mesh = spec.initial_mesh();
  const SparseSystem system = assemble(out.mesh, spec);
  out.ndof = system.dofs.n_free();
  out.u_h = solve_cg(out.mesh, system, solver_tol);
  const ProblemData data = build_problem_data(out.mesh, spec);
  const FluxResult flux = reconstruct_flux(out.mesh, out.u_h, spec, data, mode);
  out.report = estimate(out.mesh, out.u_h, spec, data, flux.tau, mode);
  return out;
}

void write_report_txt(const std::string& path, const ProblemSpec& spec,
                      const EstimateReport& rep, int ndof, int elements) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << "problem: " << spec.id << "\n";
  out << "mode: " << (rep.mode == FluxMode::constrained ? "constrained" : "penalized")
      << "\n";
  out << "elements: " << elements << "\n";
  out << "ndof: " << ndof << "\n";
  out << "eta: " << fmt17(rep.total) << "\n";
  out << "osc: " << fmt17(rep.osc_total) << "\n";
  if (rep.error) out << "error: " << fmt17(*rep.error) << "\n";
  if (rep.ieff) out << "ieff: " << fmt17(*rep.ieff) << "\n";
  out << "equilibration_residual: " << fmt17(rep.max_equilibration_residual) << "\n";
  if (rep.equilibrated) {
    out << "guarantee: equilibrated upper bound (the reconstructed flux satisfies "
           "the divergence and Neumann trace conditions on all zero-reaction "
           "elements to solver tolerance)\n";
  } else {
    out << "guarantee: penalized upper bound (prefactor "
        << fmt17(rep.prefactor)
        << " from the Friedrichs and trace constants; no equilibration assumed)\n";
  }
}

void write_indicators_csv(const std::string& path, const EstimateReport& rep) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << "element,eta,osc,eps_norm,r_norm\n";
  for (std::size_t k = 0; k < rep.elements.size(); ++k) {
    const auto& e = rep.elements[k];
    out << k << ',' << fmt17(e.eta) << ',' << fmt17(e.osc) << ','
        << fmt17(e.eps_norm) << ',' << fmt17(e.r_norm) << "\n";
  }
}

std::vector<double> parse_list(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.find_first_not_of(" \t") == std::string::npos) continue;
    out.push_back(std::stod(item));
  }
  return out;
}

int run_impl(const RunnerOptions& opt) {
  namespace fs = std::filesystem;
  const RunConfig cfg =
      opt.config_path.empty() ? RunConfig{} : parse_config(opt.config_path);
  const std::string out_dir = opt.out_dir.empty() ? "." : opt.out_dir;
  fs::create_directories(out_dir);
  auto out_path = [&](const std::string& name) { return out_dir + "/" + name; };

  if (opt.subcommand == "mesh-info") {
    Mesh mesh;
    if (cfg.has("problem.id")) {
      mesh = load_problem(cfg).spec.initial_mesh();
    } else if (cfg.has("problem.mesh_file")) {
      mesh = read_mesh(cfg.get("problem.mesh_file"));
    } else {
      throw ConfigParse("mesh-info needs problem.id or problem.mesh_file", 0);
    }
    std::cout << "vertices: " << mesh.n_vertices() << "\n"
              << "elements: " << mesh.n_elements() << "\n"
              << "facets: " << mesh.n_facets() << "\n"
              << "min angle (deg): " << min_angle(mesh) * 180.0 / M_PI << "\n";
    double hmin = 1e300, hmax = 0.0;
    for (int k = 0; k < mesh.n_elements(); ++k) {
      const double h = element_metrics(mesh, k).h;
      hmin = std::min(hmin, h);
      hmax = std::max(hmax, h);
    }
    std::cout << "h range: [" << hmin << ", " << hmax << "]\n";
    return 0;
  }

  LoadedProblem lp = load_problem(cfg);
  const double solver_tol = cfg.get_num("solver.rel_tol", 1e-12);

  if (opt.subcommand == "solve" || opt.subcommand == "estimate") {
    StepOutput s = solve_and_estimate(lp.spec, lp.mode, solver_tol);
    if (lp.spec.exact) {
      s.report.error = exact_error(s.mesh, s.u_h, lp.spec);
      if (*s.report.error > 0.0) s.report.ieff = s.report.total / *s.report.error;
    }
    write_report_txt(out_path("report.txt"), lp.spec, s.report, s.ndof,
                     s.mesh.n_elements());
    if (opt.subcommand == "estimate")
      write_indicators_csv(out_path("indicators.csv"), s.report);
    std::vector<double> eta(s.mesh.n_elements()), osc(s.mesh.n_elements());
    for (int k = 0; k < s.mesh.n_elements(); ++k) {
      eta[k] = s.report.elements[k].eta;
      osc[k] = s.report.elements[k].osc;
    }
    if (cfg.get_int("output.vtk", 1))
      export_vtk(s.mesh, {{"u", s.u_h.nodal}}, {{"eta", eta}, {"osc", osc}},
                 out_path(opt.subcommand == "solve" ? "solution.vtk" : "estimate.vtk"));
    return 0;
  }

  if (opt.subcommand == "adapt") {
    AdaptOptions aopt;
    aopt.tol = cfg.get_num("adapt.tol", 0.0);
    aopt.theta = cfg.get_num("adapt.theta", 0.5);
    aopt.max_steps = cfg.get_int("adapt.max_steps", 30);
    aopt.mode = lp.mode;
    aopt.solver_tol = solver_tol;
    const std::string measure = cfg.get("adapt.error", "auto");
    if (measure == "auto")
      aopt.measure = ErrorMeasure::automatic;
    else if (measure == "exact")
      aopt.measure = ErrorMeasure::exact;
    else if (measure == "reference")
      aopt.measure = ErrorMeasure::reference;
    else if (measure == "none")
      aopt.measure = ErrorMeasure::none;
    else
      throw ConfigParse("adapt.error must be auto|exact|reference|none", 0);

    AdaptResult res = adapt_solve(lp.spec, aopt);
    if (opt.deterministic)
      for (auto& row : res.history.rows) row.seconds = 0.0;
    write_history_csv(res.history, out_path("history.csv"));
    write_indicators_csv(out_path("indicators.csv"), res.report);
    write_report_txt(out_path("report.txt"), lp.spec, res.report,
                     res.history.rows.back().ndof, res.mesh.n_elements());
    if (cfg.get_int("output.vtk", 0)) {
      std::vector<double> eta(res.mesh.n_elements());
      for (int k = 0; k < res.mesh.n_elements(); ++k)
        eta[k] = res.report.elements[k].eta;
      export_vtk(res.mesh, {{"u", res.u_h.nodal}}, {{"eta", eta}},
                 out_path("mesh_step_" + std::to_string(res.history.rows.back().step) +
                          ".vtk"));
    }
    if (res.stop == StopReason::step_limit && cfg.get_num("adapt.tol", 0.0) > 0.0)
      std::cerr << "adapt: step limit reached before tolerance\n";
    return 0;
  }

  if (opt.subcommand == "sweep") {
    const std::vector<double> kappas = parse_list(cfg.get("sweep.kappa_list"));
    if (kappas.empty()) throw ConfigParse("sweep needs sweep.kappa_list", 0);
    const std::string id = cfg.get("problem.id");
    const int n = cfg.get_int("problem.n", 16);
    const int segments = cfg.get_int("problem.segments", 64);
    std::ofstream out(out_path("history.csv"));
    if (!out) throw IoError("cannot open history.csv");
    out << "kappa,eta,error,ieff\n";
    for (double kappa : kappas) {
      ProblemSpec spec = problem_by_id(id, kappa, n, segments);
      spec.kappa0 = lp.spec.kappa0;
      spec.zeta0 = lp.spec.zeta0;
      StepOutput s = solve_and_estimate(spec, lp.mode, solver_tol);
      std::string err_s, ieff_s;
      if (spec.exact) {
        const double err = exact_error(s.mesh, s.u_h, spec);
        err_s = fmt17(err);
        if (err > 0.0) ieff_s = fmt17(s.report.total / err);
      }
      out << fmt17(kappa) << ',' << fmt17(s.report.total) << ',' << err_s << ','
          << ieff_s << "\n";
    }
    return 0;
  }

  throw ConfigParse("unknown subcommand '" + opt.subcommand + "'", 0);
}

}  // namespace

int run(const RunnerOptions& options) {
  try {
    return run_impl(options);
  } catch (const ConfigParse& e) {
    std::cerr << "config error";
    if (e.line > 0) std::cerr << " (line " << e.line << ")";
    std::cerr << ": " << e.what() << "\n";
    return 1;
  } catch (const ProblemNotFound& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace equiflux
