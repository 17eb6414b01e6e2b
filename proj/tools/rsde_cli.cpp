#include <cstdio>
#include <exception>
#include <fstream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "rsde/error.hpp"
#include "rsde/experiments.hpp"

namespace {

nlohmann::json load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) rsde::fail("InvalidConfig", "cannot open config file '" + path + "'");
  nlohmann::json cfg;
  try {
    in >> cfg;
  } catch (const nlohmann::json::exception& e) {
    rsde::fail("InvalidConfig", "config file '" + path + "' is not valid JSON: " + e.what());
  }
  return cfg;
}

void print_report(const rsde::experiments::experiment_report& rep) {
  std::printf("experiment : %s\n", rep.experiment.c_str());
  std::printf("seed       : %llu\n", static_cast<unsigned long long>(rep.seed));
  std::printf("config hash: %s\n", rep.config_hash.c_str());
  for (const auto& f : rep.curve_files) std::printf("curve      : %s\n", f.c_str());
  for (const auto& v : rep.verdicts) {
    std::printf("  [%s] %-16s value %-14.6g vs %s = %g\n", v.pass ? "PASS" : "FAIL",
                v.name.c_str(), v.value, v.tolerance_name.c_str(), v.tolerance);
  }
  std::printf("%s\n", rep.all_pass() ? "all verdicts pass" : "verdict failure");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"simulation and certification toolkit for regime-switching diffusions"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<long long> seed;
  std::string out_dir;

  auto* run = app.add_subcommand("run", "run an experiment from a config file");
  run->add_option("--config", config_path, "path to a JSON config")->required();
  run->add_option("--seed", seed, "override the config seed");
  run->add_option("--out", out_dir, "override the output directory");

  auto* list = app.add_subcommand("list", "list available experiments");

  auto* validate = app.add_subcommand("validate", "check a config file without running it");
  validate->add_option("--config", config_path, "path to a JSON config")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (list->parsed()) {
      for (const auto& e : rsde::experiments::list_experiments()) {
        std::printf("%-18s %s\n", e.name.c_str(), e.summary.c_str());
      }
      return 0;
    }
    if (validate->parsed()) {
      rsde::experiments::validate_config(load_config(config_path));
      std::printf("config ok: %s\n", config_path.c_str());
      return 0;
    }
    const auto cfg = load_config(config_path);
    std::optional<std::uint64_t> seed_override;
    if (seed) seed_override = static_cast<std::uint64_t>(*seed);
    const auto rep = rsde::experiments::run(cfg, out_dir, seed_override);
    print_report(rep);
    return rep.all_pass() ? 0 : 2;
  } catch (const rsde::error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
