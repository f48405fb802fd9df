#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "epo/env/environment.hpp"
#include "epo/exchange/exchange.hpp"
#include "epo/ppo/ppo_lag.hpp"

namespace epo::experiment {

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct EvalSettings {
  int episodes = 256;            // M_eval
  int heatmap_resolution = 64;   // N_heat per axis
};

/**
 * Everything a run needs. Sections of the INI file map onto the members:
 * [run], [env], [network], [ppo], [exchange], [eval].
 */
struct RunConfig {
  std::string env = "ship";
  std::vector<std::uint64_t> seeds;
  std::filesystem::path output_dir = "runs";
  bool record_wall_clock = false;

  env::EnvConfig env_config;
  double gamma_c = 1.0;
  ppo::NetworkShape network;
  ppo::PpoConfig ppo;

  double eta = 0.01;
  double eps_mult = 1e-3;
  int max_outer = 150;
  double initial_multiplier = 0.05;
  std::vector<int> ladder{8, 16, 24, 32};

  EvalSettings eval;

  void validate() const;
  exchange::ExchangeConfig exchange_config() const;
};

/// Defaults for a named environment ("ship" or "agri").
RunConfig defaults_for(const std::string& env_name);

/// Parses INI text. Keys not listed in the schema raise ConfigError naming
/// "section.key". ppo.sub_tolerance follows eta / 2 unless given explicitly.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

/// Every field as INI text; parse_config(to_ini(c)) reproduces c.
std::string to_ini(const RunConfig& cfg);

/// "3", "0..9", "1,4,7" or a mix such as "0..2,5".
std::vector<std::uint64_t> parse_seeds(const std::string& text);

std::unique_ptr<env::Environment> make_environment(const RunConfig& cfg);

/// Shortest decimal text that parses back to the same double.
std::string format_number(double x);

}  // namespace epo::experiment
