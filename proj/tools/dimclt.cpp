// dimclt run <config.json> [--out DIR] [--threads N] [--no-cache]
//
// DIMCLT_OUT and DIMCLT_THREADS override the config; flags override both.

#include <cstdlib>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "dimclt/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Ball-measure fluctuation experiments for skew-product expanding maps"};
  app.require_subcommand(1);
  auto* run_cmd = app.add_subcommand("run", "Run the experiment described by a JSON config");
  std::string config_path, out_dir;
  int threads = 0;
  bool no_cache = false;
  run_cmd->add_option("config", config_path, "Config file (JSON)")->required();
  run_cmd->add_option("--out", out_dir, "Output directory");
  run_cmd->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
  run_cmd->add_flag("--no-cache", no_cache, "Always rebuild the Gibbs model");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  dimclt::RunOptions opt;
  opt.use_cache = !no_cache;
  if (const char* env = std::getenv("DIMCLT_OUT"); env && *env) opt.out_dir = env;
  if (const char* env = std::getenv("DIMCLT_THREADS"); env && *env) {
    try {
      opt.threads = std::stoi(env);
    } catch (const std::exception&) {
      std::cerr << "error: DIMCLT_THREADS is not an integer\n";
      return 2;
    }
  }
  if (!out_dir.empty()) opt.out_dir = out_dir;
  if (threads > 0) opt.threads = threads;

  dimclt::Json doc;
  try {
    std::ifstream in(config_path);
    if (!in) {
      std::cerr << "error: cannot open " << config_path << "\n";
      return 2;
    }
    doc = dimclt::Json::parse(in);
  } catch (const dimclt::Json::exception& e) {
    std::cerr << "error: config is not valid JSON: " << e.what() << "\n";
    return 2;
  }

  const auto outcome = dimclt::run(doc, opt);
  std::cout << dimclt::render_text(outcome.tests);
  if (outcome.exit_code != 0) std::cerr << "status " << outcome.exit_code << ": " << outcome.reason << "\n";
  return outcome.exit_code;
}
