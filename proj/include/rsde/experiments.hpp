#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rsde/error.hpp"

namespace rsde::experiments {

// One acceptance check. tolerance_name is the config path the tolerance was
// read from (e.g. "tolerances.slope_abs"), so every pass/fail is traceable to
// a named knob rather than a hard-coded constant.
struct verdict {
  std::string name;
  bool pass = false;
  double value = 0.0;
  double tolerance = 0.0;
  std::string tolerance_name;
};

struct experiment_report {
  std::string experiment;
  std::uint64_t seed = 1;
  std::string config_hash;  // FNV-1a of the canonical effective config, 16 hex digits
  nlohmann::json config;    // effective config: shipped defaults overlaid with the input
  std::vector<std::string> curve_files;
  nlohmann::json fits = nlohmann::json::object();
  nlohmann::json certificates = nlohmann::json::object();
  nlohmann::json predicted = nlohmann::json::object();
  std::vector<verdict> verdicts;

  bool all_pass() const;
  nlohmann::json to_json() const;
};

struct catalog_entry {
  std::string name;
  std::string summary;
};

// Stable ordering; names are the accepted values of config["experiment"].
std::vector<catalog_entry> list_experiments();

// Shipped defaults for one experiment, including its tolerances.
nlohmann::json default_config(const std::string& experiment);

// Structural checks on an input config: known experiment, replicate counts,
// step sizes, grid monotonicity. Throws InvalidConfig / UnknownExperiment.
void validate_config(const nlohmann::json& config);

// 64-bit FNV-1a over the canonical (sorted-key) serialization, as hex.
std::string config_fingerprint(const nlohmann::json& config);

// Runs one experiment: overlays the input on the defaults, applies the
// overrides, executes, and writes one CSV per curve plus report.json under
// the output directory. Deterministic given (config, seed): same CSV bytes,
// same fits. Module errors propagate wrapped with the experiment name.
experiment_report run(const nlohmann::json& config, const std::string& out_override = "",
                      std::optional<std::uint64_t> seed_override = std::nullopt);

}  // namespace rsde::experiments
