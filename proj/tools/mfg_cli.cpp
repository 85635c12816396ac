// mfg: run and check mean-field game solver sweeps.
//
//   mfg run <config.json|manifest.json> [--output-dir DIR] [--quiet]
//   mfg validate <config.json>
//   mfg list-envs
//
// Exit codes: 0 ok, 1 config error, 2 runtime failure.
// MFG_OUTPUT_DIR overrides the configured output directory.

#include <cstdlib>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "mfg/experiment.hpp"

namespace {

namespace ex = mfg::experiment;

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kRuntimeFailure = 2;

int run_verb(const std::string& path, const std::string& output_dir, bool quiet) {
  ex::ExperimentConfig cfg;
  try {
    cfg = ex::load_config(path);
  } catch (const mfg::ConfigError& e) {
    std::cerr << e.what() << '\n';
    return kConfigError;
  }
  if (const char* env = std::getenv("MFG_OUTPUT_DIR"); env && *env) cfg.output_dir = env;
  if (!output_dir.empty()) cfg.output_dir = output_dir;

  try {
    auto sweep = ex::run(cfg, quiet ? nullptr : &std::cerr);
    std::size_t failed = 0;
    for (const auto& c : sweep.cells) {
      if (c.ok) continue;
      ++failed;
      std::cerr << "cell eta=" << ex::format_eta(c.eta) << " seed=" << c.seed << " failed: " << c.error << '\n';
    }
    std::cout << sweep.cells.size() - failed << '/' << sweep.cells.size() << " cells ok, results in "
              << sweep.output_dir.string() << '\n';
    return failed ? kRuntimeFailure : kOk;
  } catch (const mfg::ConfigError& e) {
    std::cerr << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeFailure;
  }
}

int validate_verb(const std::string& path) {
  nlohmann::json doc;
  try {
    doc = ex::detail::read_json(path);
  } catch (const mfg::ConfigError& e) {
    std::cout << e.what() << '\n';
    return kConfigError;
  }
  if (doc.is_object() && doc.contains("config") && doc.contains("cells")) doc = doc["config"];
  auto problems = ex::check_config(doc, std::filesystem::absolute(path).parent_path());
  if (problems.empty()) {
    std::cout << "ok\n";
    return kOk;
  }
  for (const auto& p : problems) std::cout << p << '\n';
  return kConfigError;
}

int list_envs_verb() {
  for (const auto& env : {mfg::make_lr(), mfg::make_toy_lr(), mfg::make_rps(), mfg::make_sis()})
    std::cout << env.name << "\ttabular T=" << env.horizon << " |S|=" << env.num_states
              << " |A|=" << env.num_actions << '\n';
  const auto taxi = mfg::make_taxi();
  std::cout << "taxi\tsampled T=" << taxi.horizon() << " tiles=" << taxi.num_tiles() << " |A|=" << taxi.num_actions()
            << " (boltzmann_dqn only)\n";
  std::cout << "custom:<path>\ttabular, affine JSON model\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mean-field game solver sweeps"};
  app.require_subcommand(1);

  std::string run_path, output_dir;
  bool quiet = false;
  auto* run = app.add_subcommand("run", "Run a sweep from a config or manifest");
  run->add_option("config", run_path, "Config or manifest JSON")->required()->check(CLI::ExistingFile);
  run->add_option("-o,--output-dir", output_dir, "Output directory (overrides config and MFG_OUTPUT_DIR)");
  run->add_flag("-q,--quiet", quiet, "No per-iteration progress");

  std::string validate_path;
  auto* validate = app.add_subcommand("validate", "Check a config without running it");
  validate->add_option("config", validate_path, "Config JSON")->required();

  auto* list = app.add_subcommand("list-envs", "List built-in environments");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  if (*run) return run_verb(run_path, output_dir, quiet);
  if (*validate) return validate_verb(validate_path);
  if (*list) return list_envs_verb();
  return kConfigError;
}
