#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "vortex/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Coupled vortex equations: constrained minimization, mountain pass and verification"};
  app.require_subcommand(1);
  auto* solve = app.add_subcommand("solve", "run the pipeline described by a JSON config");
  std::string config_path, mode, out;
  solve->add_option("--config", config_path, "JSON config file")->required();
  solve->add_option("--mode", mode, "solve-min | solve-mp | verify | radial-oracle");
  solve->add_option("--out", out, "output directory (overrides output_dir)");
  CLI11_PARSE(app, argc, argv);

  vortex::RunConfig cfg;
  try {
    cfg = vortex::parse_config_file(config_path);
    if (!mode.empty()) cfg.mode = vortex::parse_mode(mode);
    if (!out.empty()) cfg.output_dir = out;
    vortex::validate_mode(cfg);
  } catch (const vortex::error& e) {
    std::cerr << vortex::to_string(e.code()) << ": " << e.what() << '\n';
    return vortex::exit_config;
  }
  return vortex::run(cfg);
}
