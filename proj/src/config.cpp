#include "safemarl/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <algorithm>
#include <functional>
#include <numbers>
#include <sstream>

namespace safemarl {

std::string to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::full: return "full";
    case TrainMode::uca: return "uca";
    case TrainMode::penalty_only: return "penalty_only";
    case TrainMode::shared_params: return "shared_params";
    case TrainMode::macpo_style: return "macpo_style";
  }
  return "unknown";
}

TrainMode train_mode_from_string(std::string_view name) {
  if (name == "full") return TrainMode::full;
  if (name == "uca") return TrainMode::uca;
  if (name == "penalty" || name == "penalty_only") return TrainMode::penalty_only;
  if (name == "shared" || name == "shared_params") return TrainMode::shared_params;
  if (name == "macpo" || name == "macpo_style") return TrainMode::macpo_style;
  throw std::invalid_argument("unknown training mode '" + std::string(name) + "'");
}

ConfigError::ConfigError(std::string key, int line, const std::string& message)
    : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + key + ": " + message : key + ": " + message),
      key_(std::move(key)),
      line_(line) {}

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_double(const std::string& key, std::string_view text, int line) {
  double v = 0.0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end || !std::isfinite(v)) {
    throw ConfigError(key, line, "expected a finite number, got '" + std::string(text) + "'");
  }
  return v;
}

template <typename Int>
Int parse_int(const std::string& key, std::string_view text, int line) {
  Int v{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError(key, line, "expected an integer, got '" + std::string(text) + "'");
  }
  return v;
}

bool parse_bool(const std::string& key, std::string_view text, int line) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw ConfigError(key, line, "expected true or false, got '" + std::string(text) + "'");
}

struct Entry {
  std::string name;
  std::string range;
  std::function<void(Config&, std::string_view, int)> set;
  std::function<std::string(const Config&)> get;
  std::function<void(const Config&)> check;
};

template <typename T>
using Field = T& (*)(Config&);

Entry real(std::string name, Field<double> field, std::function<bool(double)> ok, std::string range) {
  Entry e;
  e.name = name;
  e.range = range;
  e.check = [name, field, ok, range](const Config& c) {
    const double v = field(const_cast<Config&>(c));
    if (!ok(v)) throw ConfigError(name, 0, "value " + format_double(v) + " outside " + range);
  };
  e.set = [name, field, check = e.check](Config& c, std::string_view text, int line) {
    field(c) = parse_double(name, text, line);
    try {
      check(c);
    } catch (const ConfigError& err) {
      throw ConfigError(name, line, std::string(err.what()).substr(name.size() + 2));
    }
  };
  e.get = [field](const Config& c) { return format_double(field(const_cast<Config&>(c))); };
  return e;
}

template <typename Int>
Entry integer(std::string name, Field<Int> field, std::function<bool(Int)> ok, std::string range) {
  Entry e;
  e.name = name;
  e.range = range;
  e.check = [name, field, ok, range](const Config& c) {
    const Int v = field(const_cast<Config&>(c));
    if (!ok(v)) throw ConfigError(name, 0, "value " + std::to_string(v) + " outside " + range);
  };
  e.set = [name, field, check = e.check](Config& c, std::string_view text, int line) {
    field(c) = parse_int<Int>(name, text, line);
    try {
      check(c);
    } catch (const ConfigError& err) {
      throw ConfigError(name, line, std::string(err.what()).substr(name.size() + 2));
    }
  };
  e.get = [field](const Config& c) { return std::to_string(field(const_cast<Config&>(c))); };
  return e;
}

Entry boolean(std::string name, Field<bool> field) {
  Entry e;
  e.name = name;
  e.range = "{true, false}";
  e.check = [](const Config&) {};
  e.set = [name, field](Config& c, std::string_view text, int line) { field(c) = parse_bool(name, text, line); };
  e.get = [field](const Config& c) { return std::string(field(const_cast<Config&>(c)) ? "true" : "false"); };
  return e;
}

bool positive(double v) { return v > 0.0; }
bool non_negative(double v) { return v >= 0.0; }
bool unit_open_right(double v) { return v >= 0.0 && v < 1.0; }

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = [] {
    std::vector<Entry> t;
    {
      Entry e;
      e.name = "env.kind";
      e.range = "{gate, corridor, forest}";
      e.check = [](const Config&) {};
      e.set = [](Config& c, std::string_view text, int line) {
        try {
          c.env.kind = scenario_kind_from_string(std::string(text));
        } catch (const std::invalid_argument&) {
          throw ConfigError("env.kind", line, "expected one of {gate, corridor, forest}, got '" + std::string(text) + "'");
        }
      };
      e.get = [](const Config& c) { return to_string(c.env.kind); };
      t.push_back(std::move(e));
    }
    t.push_back(real("env.gate_width", [](Config& c) -> double& { return c.env.scenario.gate_width; }, positive, "(0, inf)"));
    t.push_back(real("env.gate_depth", [](Config& c) -> double& { return c.env.scenario.gate_depth; }, positive, "(0, inf)"));
    t.push_back(real("env.gate_wall_span", [](Config& c) -> double& { return c.env.scenario.gate_wall_span; }, positive, "(0, inf)"));
    t.push_back(integer<int>("env.forest_trees", [](Config& c) -> int& { return c.env.scenario.forest_trees; },
                             [](int v) { return v >= 0 && v <= 64; }, "[0, 64]"));
    t.push_back(real("env.forest_tree_radius", [](Config& c) -> double& { return c.env.scenario.forest_tree_radius; }, positive, "(0, inf)"));
    t.push_back(real("env.forest_clearance", [](Config& c) -> double& { return c.env.scenario.forest_clearance; }, non_negative, "[0, inf)"));
    t.push_back(integer<std::uint64_t>("env.layout_seed", [](Config& c) -> std::uint64_t& { return c.env.scenario.layout_seed; },
                                       [](std::uint64_t) { return true; }, "[0, 2^64)"));
    t.push_back(real("env.arrival_radius", [](Config& c) -> double& { return c.env.scenario.arrival_radius; }, positive, "(0, inf)"));
    t.push_back(integer<int>("env.episode_cap", [](Config& c) -> int& { return c.env.scenario.episode_cap; },
                             [](int v) { return v >= 1; }, "[1, inf)"));
    t.push_back(real("env.start_heading_range", [](Config& c) -> double& { return c.env.scenario.start_heading_range; },
                     [](double v) { return v >= 0.0 && v <= std::numbers::pi; }, "[0, pi]"));
    t.push_back(real("env.dt", [](Config& c) -> double& { return c.env.params.dt; }, positive, "(0, inf)"));
    t.push_back(real("env.tau", [](Config& c) -> double& { return c.env.params.tau; }, positive, "(0, inf)"));
    t.push_back(real("env.link_length", [](Config& c) -> double& { return c.env.params.link_length; }, positive, "(0, inf)"));
    t.push_back(real("env.probe_radius", [](Config& c) -> double& { return c.env.params.probe_radius; }, positive, "(0, inf)"));
    t.push_back(real("env.v_max", [](Config& c) -> double& { return c.env.params.v_max; }, positive, "(0, inf)"));
    t.push_back(real("env.omega_max", [](Config& c) -> double& { return c.env.params.omega_max; }, positive, "(0, inf)"));
    t.push_back(real("env.w_f", [](Config& c) -> double& { return c.env.params.weights.move_forward; }, non_negative, "[0, inf)"));
    t.push_back(real("env.w_d", [](Config& c) -> double& { return c.env.params.weights.destination; }, non_negative, "[0, inf)"));
    t.push_back(real("env.w_m", [](Config& c) -> double& { return c.env.params.weights.collaboration; }, non_negative, "[0, inf)"));
    t.push_back(real("env.w_c", [](Config& c) -> double& { return c.env.params.weights.collision; }, non_negative, "[0, inf)"));

    t.push_back(integer<int>("policy.hidden", [](Config& c) -> int& { return c.policy.hidden; },
                             [](int v) { return v >= 1 && v <= 4096; }, "[1, 4096]"));
    t.push_back(real("policy.init_log_std", [](Config& c) -> double& { return c.policy.init_log_std; },
                     [](double v) { return v >= -5.0 && v <= 2.0; }, "[-5, 2]"));
    t.push_back(real("policy.rate", [](Config& c) -> double& { return c.policy.rate; }, positive, "(0, inf)"));
    t.push_back(real("policy.critic_rate", [](Config& c) -> double& { return c.policy.critic_rate; }, positive, "(0, inf)"));
    t.push_back(real("policy.beta1", [](Config& c) -> double& { return c.policy.beta1; }, unit_open_right, "[0, 1)"));
    t.push_back(real("policy.beta2", [](Config& c) -> double& { return c.policy.beta2; }, unit_open_right, "[0, 1)"));
    t.push_back(real("policy.epsilon", [](Config& c) -> double& { return c.policy.epsilon; }, positive, "(0, inf)"));

    {
      Entry e;
      e.name = "trainer.mode";
      e.range = "{full, uca, penalty_only, shared_params, macpo_style}";
      e.check = [](const Config&) {};
      e.set = [](Config& c, std::string_view text, int line) {
        try {
          c.trainer.mode = train_mode_from_string(text);
        } catch (const std::invalid_argument&) {
          throw ConfigError("trainer.mode", line, "unknown mode '" + std::string(text) + "'");
        }
      };
      e.get = [](const Config& c) { return to_string(c.trainer.mode); };
      t.push_back(std::move(e));
    }
    t.push_back(integer<int>("trainer.iterations", [](Config& c) -> int& { return c.trainer.iterations; },
                             [](int v) { return v >= 0; }, "[0, inf)"));
    t.push_back(integer<int>("trainer.n_envs", [](Config& c) -> int& { return c.trainer.n_envs; },
                             [](int v) { return v >= 1 && v <= 4096; }, "[1, 4096]"));
    t.push_back(integer<int>("trainer.horizon", [](Config& c) -> int& { return c.trainer.horizon; },
                             [](int v) { return v >= 1; }, "[1, inf)"));
    t.push_back(real("trainer.gamma", [](Config& c) -> double& { return c.trainer.gamma; }, unit_open_right, "[0, 1)"));
    t.push_back(real("trainer.gae_lambda", [](Config& c) -> double& { return c.trainer.gae_lambda; },
                     [](double v) { return v >= 0.0 && v <= 1.0; }, "[0, 1]"));
    t.push_back(real("trainer.epsilon", [](Config& c) -> double& { return c.trainer.clip; },
                     [](double v) { return v > 0.0 && v < 1.0; }, "(0, 1)"));
    t.push_back(real("trainer.kl_threshold", [](Config& c) -> double& { return c.trainer.kl_threshold; }, positive, "(0, inf)"));
    t.push_back(integer<int>("trainer.epochs", [](Config& c) -> int& { return c.trainer.epochs; },
                             [](int v) { return v >= 1; }, "[1, inf)"));
    t.push_back(integer<int>("trainer.minibatch", [](Config& c) -> int& { return c.trainer.minibatch; },
                             [](int v) { return v >= 1; }, "[1, inf)"));
    t.push_back(real("trainer.cost_limit", [](Config& c) -> double& { return c.trainer.cost_limit; }, non_negative, "[0, inf)"));
    t.push_back(real("trainer.lagrange_rate", [](Config& c) -> double& { return c.trainer.lagrange_rate; }, positive, "(0, inf)"));
    t.push_back(real("trainer.lambda_init", [](Config& c) -> double& { return c.trainer.lambda_init; }, non_negative, "[0, inf)"));
    t.push_back(boolean("trainer.freeze_multipliers", [](Config& c) -> bool& { return c.trainer.freeze_multipliers; }));
    t.push_back(real("trainer.penalty_coef", [](Config& c) -> double& { return c.trainer.penalty_coef; }, non_negative, "[0, inf)"));
    t.push_back(integer<int>("trainer.checkpoint_every", [](Config& c) -> int& { return c.trainer.checkpoint_every; },
                             [](int v) { return v >= 0; }, "[0, inf)"));

    t.push_back(integer<std::size_t>("allocator.window", [](Config& c) -> std::size_t& { return c.allocator.window; },
                                     [](std::size_t v) { return v >= 1 && v <= 1000; }, "[1, 1000]"));
    t.push_back(integer<int>("allocator.grid", [](Config& c) -> int& { return c.allocator.grid_size; },
                             [](int v) { return v >= 2 && v <= 100000; }, "[2, 100000]"));
    t.push_back(real("allocator.signal_variance", [](Config& c) -> double& { return c.allocator.kernel.signal_variance; }, positive, "(0, inf)"));
    t.push_back(real("allocator.length_scale", [](Config& c) -> double& { return c.allocator.kernel.length_scale; }, positive, "(0, inf)"));
    t.push_back(real("allocator.noise_variance", [](Config& c) -> double& { return c.allocator.kernel.noise_variance; }, non_negative, "[0, inf)"));
    t.push_back(integer<int>("allocator.cold_start", [](Config& c) -> int& { return c.allocator.cold_start; },
                             [](int v) { return v >= 0; }, "[0, inf)"));
    t.push_back(real("allocator.w1", [](Config& c) -> double& { return c.allocator.w1; }, non_negative, "[0, inf)"));
    t.push_back(real("allocator.w2", [](Config& c) -> double& { return c.allocator.w2; }, non_negative, "[0, inf)"));

    t.push_back(integer<int>("eval.episodes", [](Config& c) -> int& { return c.eval.episodes; },
                             [](int v) { return v >= 1; }, "[1, inf)"));
    t.push_back(real("eval.time_cap", [](Config& c) -> double& { return c.eval.time_cap; }, positive, "(0, inf)"));
    return t;
  }();
  return table;
}

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

void Config::validate() const {
  for (const auto& e : entries()) e.check(*this);
}

Config parse_config_text(std::string_view text, const Config& defaults) {
  Config config = defaults;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(std::string(line), line_no, "expected 'key = value'");
    }
    const std::string key(trim(line.substr(0, eq)));
    const std::string_view value = trim(line.substr(eq + 1));
    const auto& table = entries();
    const auto it = std::find_if(table.begin(), table.end(), [&](const Entry& e) { return e.name == key; });
    if (it == table.end()) throw ConfigError(key, line_no, "unknown key");
    if (value.empty()) throw ConfigError(key, line_no, "missing value");
    it->set(config, value, line_no);
  }
  return config;
}

Config parse_config(const std::filesystem::path& path, const Config& defaults) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string(), 0, "cannot open file");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config_text(buffer.str(), defaults);
}

std::string serialize_config(const Config& config) {
  std::string out;
  for (const auto& e : entries()) out += e.name + " = " + e.get(config) + "\n";
  return out;
}

bool operator==(const Config& lhs, const Config& rhs) { return serialize_config(lhs) == serialize_config(rhs); }

std::vector<ConfigKey> config_keys() {
  std::vector<ConfigKey> keys;
  for (const auto& e : entries()) keys.push_back({e.name, e.range});
  return keys;
}

ScenarioSpec make_scenario(const EnvConfig& env) { return make_scenario(env.kind, env.scenario); }

TransportEnv make_env(const EnvConfig& env) { return TransportEnv(make_scenario(env), env.params); }

}  // namespace safemarl
