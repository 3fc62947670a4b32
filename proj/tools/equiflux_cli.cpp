#include <CLI11.hpp>
#include <string>

#include "equiflux/runner.hpp"

int main(int argc, char** argv) {
  CLI::App app{"adaptive reaction-diffusion solver with guaranteed error bounds"};
  app.require_subcommand(1);

  equiflux::RunnerOptions opt;
  for (const char* name : {"solve", "estimate", "adapt", "sweep", "mesh-info"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", opt.config_path, "configuration file");
    sub->add_option("--out", opt.out_dir, "output directory");
    sub->add_flag("--deterministic", opt.deterministic,
                  "byte-identical output across runs (timings written as zero)");
    sub->callback([&opt, name]() { opt.subcommand = name; });
  }

  CLI11_PARSE(app, argc, argv);
  return equiflux::run(opt);
}
