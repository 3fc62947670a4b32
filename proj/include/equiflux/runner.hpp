#pragma once

#include <map>
#include <string>
#include <vector>

#include "equiflux/adapt.hpp"
#include "equiflux/mesh.hpp"

namespace equiflux {

/// Legacy ASCII VTK unstructured grid with optional per-node and per-element
/// scalar fields.
void export_vtk(const Mesh& mesh,
                const std::vector<std::pair<std::string, std::vector<double>>>& point_fields,
                const std::vector<std::pair<std::string, std::vector<double>>>& cell_fields,
                const std::string& path);

/// header: step,ndof,elements,eta,osc,error,ieff,seconds
/// 17 significant digits, empty cells for absent optionals.
void write_history_csv(const ConvergenceHistory& history, const std::string& path);

/// Flat key = value configuration with [section] headers; keys are stored as
/// "section.key". Throws ConfigParse with the offending line number.
struct RunConfig {
  std::map<std::string, std::string> values;

  bool has(const std::string& key) const { return values.count(key) > 0; }
  std::string get(const std::string& key, const std::string& fallback = "") const;
  double get_num(const std::string& key, double fallback) const;
  int get_int(const std::string& key, int fallback) const;
};

RunConfig parse_config(const std::string& path);
RunConfig parse_config_text(const std::string& text, const std::string& origin);

struct RunnerOptions {
  std::string subcommand;  // solve | estimate | adapt | sweep | mesh-info
  std::string config_path;
  std::string out_dir;
  bool deterministic = false;
};

/// Executes one subcommand; returns the process exit code
/// (0 success, 1 configuration error, 2 numerical failure).
int run(const RunnerOptions& options);

}  // namespace equiflux
