#include "epo/experiment/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "epo/env/benchmarks.hpp"

namespace epo::experiment {

namespace pt = boost::property_tree;

std::string format_number(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& text) {
  double v = 0.0;
  const std::string t = trim(text);
  const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (res.ec != std::errc{} || res.ptr != t.data() + t.size()) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + text + "'");
  }
  return v;
}

long long parse_integer(const std::string& key, const std::string& text) {
  long long v = 0;
  const std::string t = trim(text);
  const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (res.ec != std::errc{} || res.ptr != t.data() + t.size()) {
    throw ConfigError("config key '" + key + "': expected an integer, got '" + text + "'");
  }
  return v;
}

int parse_int(const std::string& key, const std::string& text) {
  const long long v = parse_integer(key, text);
  if (v < INT32_MIN || v > INT32_MAX) throw ConfigError("config key '" + key + "': value out of range");
  return static_cast<int>(v);
}

bool parse_bool(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  if (t == "true" || t == "1" || t == "yes") return true;
  if (t == "false" || t == "0" || t == "no") return false;
  throw ConfigError("config key '" + key + "': expected true or false, got '" + text + "'");
}

std::vector<int> parse_int_list(const std::string& key, const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_int(key, item));
  if (out.empty()) throw ConfigError("config key '" + key + "': empty list");
  return out;
}

std::string join(const std::vector<int>& xs) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? "," : "") + std::to_string(xs[i]);
  return s;
}

std::string seeds_text(const std::vector<std::uint64_t>& seeds) {
  std::string s;
  for (std::size_t i = 0; i < seeds.size(); ++i) s += (i ? "," : "") + std::to_string(seeds[i]);
  return s;
}

std::string bool_text(bool b) { return b ? "true" : "false"; }

struct Field {
  const char* key;
  std::function<void(RunConfig&, const std::string& key, const std::string& value)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define EPO_REAL(name, member)                                                                 \
  Field {                                                                                      \
    name, [](RunConfig& c, const std::string& k, const std::string& v) { c.member = parse_double(k, v); }, \
        [](const RunConfig& c) { return format_number(c.member); }                            \
  }
#define EPO_INT(name, member)                                                                  \
  Field {                                                                                      \
    name, [](RunConfig& c, const std::string& k, const std::string& v) { c.member = parse_int(k, v); }, \
        [](const RunConfig& c) { return std::to_string(c.member); }                           \
  }
#define EPO_BOOL(name, member)                                                                 \
  Field {                                                                                      \
    name, [](RunConfig& c, const std::string& k, const std::string& v) { c.member = parse_bool(k, v); }, \
        [](const RunConfig& c) { return bool_text(c.member); }                                \
  }

// Order here is the order of to_ini(); "run.env" is handled before the others.
const std::vector<Field>& schema() {
  static const std::vector<Field> fields = {
      Field{"run.env", [](RunConfig&, const std::string&, const std::string&) {},
            [](const RunConfig& c) { return c.env; }},
      Field{"run.seeds", [](RunConfig& c, const std::string&, const std::string& v) { c.seeds = parse_seeds(v); },
            [](const RunConfig& c) { return seeds_text(c.seeds); }},
      Field{"run.output_dir",
            [](RunConfig& c, const std::string&, const std::string& v) { c.output_dir = trim(v); },
            [](const RunConfig& c) { return c.output_dir.string(); }},
      EPO_BOOL("run.record_wall_clock", record_wall_clock),

      EPO_REAL("env.step_length", env_config.step_length),
      EPO_INT("env.max_steps", env_config.max_steps),
      EPO_REAL("env.reach_radius", env_config.reach_radius),
      EPO_REAL("env.gamma_r", env_config.gamma_r),
      EPO_REAL("env.gamma_c", gamma_c),

      EPO_INT("network.hidden_layers", network.hidden_layers),
      EPO_INT("network.hidden_size", network.hidden_size),

      EPO_REAL("ppo.lr_net", ppo.lr_net),
      EPO_REAL("ppo.lr_mult", ppo.lr_mult),
      EPO_REAL("ppo.clip", ppo.clip),
      EPO_REAL("ppo.gae_lambda", ppo.gae_lambda),
      EPO_INT("ppo.inner_iters", ppo.inner_iters),
      EPO_INT("ppo.epochs", ppo.epochs),
      EPO_INT("ppo.minibatch", ppo.minibatch),
      EPO_INT("ppo.episodes", ppo.episodes),
      EPO_REAL("ppo.sub_tolerance", ppo.sub_tolerance),
      EPO_BOOL("ppo.normalize_reward_advantages", ppo.normalize_reward_advantages),
      EPO_INT("ppo.constraint_critic_samples", ppo.constraint_critic_samples),

      EPO_REAL("exchange.eta", eta),
      EPO_REAL("exchange.eps_mult", eps_mult),
      EPO_INT("exchange.max_outer", max_outer),
      EPO_REAL("exchange.initial_multiplier", initial_multiplier),
      Field{"exchange.ladder",
            [](RunConfig& c, const std::string& k, const std::string& v) { c.ladder = parse_int_list(k, v); },
            [](const RunConfig& c) { return join(c.ladder); }},

      EPO_INT("eval.episodes", eval.episodes),
      EPO_INT("eval.heatmap_resolution", eval.heatmap_resolution),
  };
  return fields;
}

#undef EPO_REAL
#undef EPO_INT
#undef EPO_BOOL

const Field* find_field(const std::string& key) {
  for (const auto& f : schema()) {
    if (key == f.key) return &f;
  }
  return nullptr;
}

}  // namespace

void RunConfig::validate() const {
  if (env != "ship" && env != "agri") throw ConfigError("unknown environment '" + env + "'");
  if (seeds.empty()) throw ConfigError("run.seeds: at least one seed required");
  if (ladder.empty()) throw ConfigError("exchange.ladder: empty");
  if (eval.episodes < 1) throw ConfigError("eval.episodes must be positive");
  if (eval.heatmap_resolution < 2) throw ConfigError("eval.heatmap_resolution must be at least 2");
  if (network.hidden_layers < 1 || network.hidden_size < 1) throw ConfigError("network: sizes must be positive");
  if (!(gamma_c > 0.0 && gamma_c <= 1.0)) throw ConfigError("env.gamma_c must lie in (0, 1]");
  try {
    env_config.validate();
    ppo.validate();
    exchange_config().validate();
    search::GridLadder check(ladder);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

exchange::ExchangeConfig RunConfig::exchange_config() const {
  exchange::ExchangeConfig c;
  c.eta = eta;
  c.eps_mult = eps_mult;
  c.max_outer = max_outer;
  c.initial_multiplier = initial_multiplier;
  c.ladder = search::GridLadder(ladder);
  return c;
}

RunConfig defaults_for(const std::string& env_name) {
  RunConfig c;
  c.env = env_name;
  for (std::uint64_t s = 0; s < 10; ++s) c.seeds.push_back(s);
  if (env_name == "ship") {
    c.env_config = env::ShipEnv::Params{}.env;
    c.gamma_c = env::ShipPollution::Params{}.gamma_c;
    c.eta = 0.01;
    c.max_outer = 150;
    c.initial_multiplier = 0.05;
  } else if (env_name == "agri") {
    c.env_config = env::AgriEnv::Params{}.env;
    c.gamma_c = env::AgriPesticide::Params{}.gamma_c;
    c.eta = 0.1;
    c.max_outer = 400;
    c.initial_multiplier = 1.0;
  } else {
    throw ConfigError("unknown environment '" + env_name + "'");
  }
  c.ppo.sub_tolerance = 0.5 * c.eta;
  c.output_dir = "runs/" + env_name;
  return c;
}

RunConfig parse_config(const std::string& text) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config syntax error: ") + e.what());
  }

  std::vector<std::pair<std::string, std::string>> entries;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw ConfigError("config key '" + section + "' must appear inside a section");
    }
    for (const auto& [key, value] : body) {
      const std::string full = section + "." + key;
      if (!find_field(full)) throw ConfigError("unknown config key '" + full + "'");
      entries.emplace_back(full, value.data());
    }
  }

  std::string env_name = "ship";
  bool tolerance_given = false;
  for (const auto& [k, v] : entries) {
    if (k == "run.env") env_name = trim(v);
    if (k == "ppo.sub_tolerance") tolerance_given = true;
  }
  RunConfig cfg = defaults_for(env_name);
  for (const auto& [k, v] : entries) find_field(k)->set(cfg, k, v);
  if (!tolerance_given) cfg.ppo.sub_tolerance = 0.5 * cfg.eta;
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

std::string to_ini(const RunConfig& cfg) {
  std::string out;
  std::string section;
  for (const auto& f : schema()) {
    const std::string key = f.key;
    const auto dot = key.find('.');
    const std::string sec = key.substr(0, dot);
    if (sec != section) {
      if (!section.empty()) out += "\n";
      out += "[" + sec + "]\n";
      section = sec;
    }
    out += key.substr(dot + 1) + " = " + f.get(cfg) + "\n";
  }
  return out;
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(text);
  std::string item;
  auto number = [&text](const std::string& s) {
    const std::string t = trim(s);
    std::uint64_t v = 0;
    const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || res.ec != std::errc{} || res.ptr != t.data() + t.size()) {
      throw ConfigError("bad seed list '" + text + "'");
    }
    return v;
  };
  while (std::getline(ss, item, ',')) {
    const auto range = item.find("..");
    if (range == std::string::npos) {
      out.push_back(number(item));
      continue;
    }
    const std::uint64_t lo = number(item.substr(0, range));
    const std::uint64_t hi = number(item.substr(range + 2));
    if (hi < lo) throw ConfigError("bad seed range '" + trim(item) + "'");
    for (std::uint64_t s = lo; s <= hi; ++s) out.push_back(s);
  }
  if (out.empty()) throw ConfigError("empty seed list");
  return out;
}

std::unique_ptr<env::Environment> make_environment(const RunConfig& cfg) {
  if (cfg.env == "ship") {
    env::ShipEnv::Params p;
    p.env = cfg.env_config;
    p.pollution.gamma_c = cfg.gamma_c;
    return std::make_unique<env::ShipEnv>(p);
  }
  if (cfg.env == "agri") {
    env::AgriEnv::Params p;
    p.env = cfg.env_config;
    p.pesticide.gamma_c = cfg.gamma_c;
    return std::make_unique<env::AgriEnv>(p);
  }
  throw ConfigError("unknown environment '" + cfg.env + "'");
}

}  // namespace epo::experiment
