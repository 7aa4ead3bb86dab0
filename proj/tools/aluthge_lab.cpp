// Command-line runner for declarative experiments.
//
//   aluthge_lab run <config> [--seed S] [--out-dir D] [--threads K]
//   aluthge_lab validate <config>
//   aluthge_lab demo <name> [--seed S] [--out-dir D] [--threads K]
//
// Default output directory comes from ALUTHGE_LAB_OUT_DIR, else ".".

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "aluthge/experiment.hpp"

namespace {

namespace ex = aluthge::experiment;

void report(const ex::ExperimentConfig& cfg, const ex::RunResult& r) {
  std::cout << cfg.name << " (" << ex::kindName(cfg.kind) << ")\n";
  for (const auto& a : r.assertions) {
    std::cout << "  " << (a.pass ? "PASS " : "FAIL ") << a.name << "  measured=" << a.measured
              << "  bound=" << a.bound << '\n';
  }
  for (const auto& f : r.files) std::cout << "  wrote " << f.string() << '\n';
  if (!r.message.empty()) std::cerr << r.message << '\n';
}

int execute(const ex::ExperimentConfig& cfg, const ex::RunOptions& opts) {
  const auto result = ex::run(cfg, opts);
  report(cfg, result);
  return result.exitCode;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Aluthge transform experiment runner"};
  app.require_subcommand(1);

  std::optional<std::uint64_t> seed;
  std::string outDir = ".";
  if (const char* env = std::getenv("ALUTHGE_LAB_OUT_DIR"); env && *env) outDir = env;
  unsigned threads = 1;
  std::string configPath;
  std::string demoName;

  auto addRunFlags = [&](CLI::App* sub) {
    sub->add_option("--seed", seed, "Override the config seed");
    sub->add_option("--out-dir", outDir, "Directory for result files (env ALUTHGE_LAB_OUT_DIR)");
    sub->add_option("--threads", threads, "Worker threads for trials")->check(CLI::PositiveNumber);
  };

  auto* run = app.add_subcommand("run", "Run an experiment config");
  run->add_option("config", configPath, "Config file")->required();
  addRunFlags(run);

  auto* validate = app.add_subcommand("validate", "Parse and validate a config without running it");
  validate->add_option("config", configPath, "Config file")->required();
  validate->add_option("--seed", seed, "Seed that would be supplied at run time");

  std::string demoHelp = "Run a built-in demo:";
  for (const auto& [name, _] : ex::demos()) demoHelp += " " + name;
  auto* demo = app.add_subcommand("demo", demoHelp);
  demo->add_option("name", demoName, "Demo name")->required();
  addRunFlags(demo);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  const ex::RunOptions opts{outDir, threads, seed};
  try {
    if (*validate) {
      const auto cfg = ex::parseConfig(configPath);
      ex::validate(cfg, seed);
      std::cout << "ok: " << cfg.name << " (" << ex::kindName(cfg.kind) << ")\n";
      return 0;
    }
    if (*demo) {
      const auto it = ex::demos().find(demoName);
      if (it == ex::demos().end()) throw ex::ConfigError("unknown demo '" + demoName + "'");
      return execute(ex::parseConfigText(it->second), opts);
    }
    return execute(ex::parseConfig(configPath), opts);
  } catch (const ex::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
}
