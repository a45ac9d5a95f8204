#include "mvelab/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "mvelab/errors.hpp"

namespace mvelab {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(trim(item));
  return out;
}

std::string fmt_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

double parse_double(const std::string& key, const std::string& s) {
  double v = 0.0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size() || s.empty())
    throw ContractViolation("config: " + key + " expects a number, got '" + s + "'");
  return v;
}

template <class Int>
Int parse_int(const std::string& key, const std::string& s) {
  Int v = 0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size() || s.empty())
    throw ContractViolation("config: " + key + " expects an integer, got '" + s + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "true") return true;
  if (s == "false") return false;
  throw ContractViolation("config: " + key + " expects true or false, got '" + s + "'");
}

std::string fmt_bool(bool b) { return b ? "true" : "false"; }

template <class T>
std::string fmt_list(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(v[i]);
  }
  return out;
}

template <class Int>
std::vector<Int> parse_int_list(const std::string& key, const std::string& s) {
  std::vector<Int> out;
  for (const auto& item : split_list(s)) out.push_back(parse_int<Int>(key, item));
  return out;
}

std::string noise_name(NoiseKind k) {
  switch (k) {
    case NoiseKind::parameter: return "parameter";
    case NoiseKind::action_gaussian: return "action_gaussian";
    case NoiseKind::none: return "none";
  }
  return "parameter";
}

NoiseKind parse_noise(const std::string& s) {
  if (s == "parameter") return NoiseKind::parameter;
  if (s == "action_gaussian") return NoiseKind::action_gaussian;
  if (s == "none") return NoiseKind::none;
  throw ContractViolation("config: noise.kind must be parameter, action_gaussian or none, got '" +
                          s + "'");
}

struct Field {
  std::string key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

#define MVELAB_DOUBLE(k, member)                                                      \
  Field{k, [](const ExperimentConfig& c) { return fmt_double(c.member); },           \
        [](ExperimentConfig& c, const std::string& v) { c.member = parse_double(k, v); }}
#define MVELAB_INT(k, member)                                                         \
  Field{k, [](const ExperimentConfig& c) { return std::to_string(c.member); },       \
        [](ExperimentConfig& c, const std::string& v) {                               \
          c.member = parse_int<decltype(c.member)>(k, v);                             \
        }}
#define MVELAB_BOOL(k, member)                                                        \
  Field{k, [](const ExperimentConfig& c) { return fmt_bool(c.member); },             \
        [](ExperimentConfig& c, const std::string& v) { c.member = parse_bool(k, v); }}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      Field{"env.name", [](const ExperimentConfig& c) { return c.env; },
            [](ExperimentConfig& c, const std::string& v) { c.env = v; }},
      Field{"mve.mode", [](const ExperimentConfig& c) { return to_string(c.mve.mode); },
            [](ExperimentConfig& c, const std::string& v) { c.mve.mode = parse_mve_mode(v); }},
      MVELAB_INT("mve.h", mve.horizon),
      MVELAB_INT("mve.ib_ratio", mve.ib_ratio),
      MVELAB_INT("mve.ib_rollouts", mve.ib_rollouts),
      Field{"agent.hidden", [](const ExperimentConfig& c) { return fmt_list(c.agent.hidden); },
            [](ExperimentConfig& c, const std::string& v) {
              c.agent.hidden = parse_int_list<int>("agent.hidden", v);
            }},
      MVELAB_DOUBLE("agent.actor_lr", agent.actor_lr),
      MVELAB_DOUBLE("agent.critic_lr", agent.critic_lr),
      MVELAB_DOUBLE("agent.decay", agent.decay),
      MVELAB_DOUBLE("agent.actor_final_scale", agent.actor_final_scale),
      MVELAB_INT("agent.batch_size", batch_size),
      Field{"noise.kind", [](const ExperimentConfig& c) { return noise_name(c.noise.kind); },
            [](ExperimentConfig& c, const std::string& v) { c.noise.kind = parse_noise(v); }},
      MVELAB_DOUBLE("noise.target_distance", noise.target_distance),
      MVELAB_DOUBLE("noise.initial_sigma", noise.initial_sigma),
      MVELAB_DOUBLE("noise.adapt_factor", noise.adapt_factor),
      MVELAB_DOUBLE("noise.action_sigma", noise.action_sigma),
      Field{"dynamics.hidden",
            [](const ExperimentConfig& c) { return fmt_list(c.dynamics.hidden); },
            [](ExperimentConfig& c, const std::string& v) {
              c.dynamics.hidden = parse_int_list<int>("dynamics.hidden", v);
            }},
      MVELAB_DOUBLE("dynamics.lr", dynamics.learning_rate),
      MVELAB_INT("dynamics.steps", dynamics_steps),
      MVELAB_INT("dynamics.batch_size", dynamics_batch),
      MVELAB_BOOL("dynamics.oracle", oracle_dynamics),
      MVELAB_BOOL("dynamics.always_fit", always_fit_model),
      MVELAB_INT("train.total_steps", total_steps),
      MVELAB_INT("train.gradient_steps", gradient_steps),
      MVELAB_INT("train.warmup_steps", warmup_steps),
      MVELAB_INT("train.model_warmup_steps", model_warmup_steps),
      MVELAB_INT("train.replay_capacity", replay_capacity),
      MVELAB_INT("eval.interval", eval_interval),
      MVELAB_INT("eval.episodes", eval_episodes),
      Field{"run.seeds", [](const ExperimentConfig& c) { return fmt_list(c.seeds); },
            [](ExperimentConfig& c, const std::string& v) {
              c.seeds = parse_int_list<std::uint64_t>("run.seeds", v);
            }},
      Field{"run.output_dir", [](const ExperimentConfig& c) { return c.output_dir; },
            [](ExperimentConfig& c, const std::string& v) { c.output_dir = v; }},
  };
  return table;
}

#undef MVELAB_DOUBLE
#undef MVELAB_INT
#undef MVELAB_BOOL

const Field& field(const std::string& key) {
  for (const auto& f : fields())
    if (f.key == key) return f;
  throw ContractViolation("config: unknown key '" + key + "'");
}

}  // namespace

bool ExperimentConfig::operator==(const ExperimentConfig& other) const {
  return to_canonical_text(*this) == to_canonical_text(other);
}

ExperimentConfig desk_profile() { return ExperimentConfig{}; }

ExperimentConfig full_profile() {
  ExperimentConfig c;
  c.batch_size = 512;
  c.dynamics_batch = 512;
  c.dynamics.hidden = std::vector<int>(8, 128);
  c.total_steps = 1000000;
  c.warmup_steps = 10000;
  c.model_warmup_steps = 5000;
  c.eval_interval = 1000;
  return c;
}

ExperimentConfig named_profile(const std::string& name) {
  if (name == "desk") return desk_profile();
  if (name == "full") return full_profile();
  throw ContractViolation("config: unknown profile '" + name + "' (desk, full)");
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& f : fields()) k.push_back(f.key);
    return k;
  }();
  return keys;
}

void set_config_value(ExperimentConfig& config, const std::string& key, const std::string& value) {
  field(key).set(config, value);
}

std::string get_config_value(const ExperimentConfig& config, const std::string& key) {
  return field(key).get(config);
}

std::string to_canonical_text(const ExperimentConfig& config) {
  std::string out;
  for (const auto& f : fields()) out += f.key + " = " + f.get(config) + "\n";
  return out;
}

void validate(const ExperimentConfig& c) {
  const auto names = env_names();
  require(std::find(names.begin(), names.end(), c.env) != names.end(),
          "config: unknown environment '" + c.env + "'");
  require(c.mve.horizon >= 0, "config: mve.h must be >= 0");
  require(c.mve.ib_ratio >= 0, "config: mve.ib_ratio must be >= 0");
  require(c.mve.ib_rollouts >= 0, "config: mve.ib_rollouts must be >= 0");
  require(!c.agent.hidden.empty(), "config: agent.hidden must list at least one layer");
  for (int h : c.agent.hidden) require(h > 0, "config: agent.hidden sizes must be positive");
  require(!c.dynamics.hidden.empty(), "config: dynamics.hidden must list at least one layer");
  for (int h : c.dynamics.hidden) require(h > 0, "config: dynamics.hidden sizes must be positive");
  require(c.agent.actor_lr > 0 && c.agent.critic_lr > 0 && c.dynamics.learning_rate > 0,
          "config: learning rates must be positive");
  require(c.agent.decay > 0 && c.agent.decay <= 1, "config: agent.decay must be in (0, 1]");
  require(c.agent.actor_final_scale > 0, "config: agent.actor_final_scale must be positive");
  require(c.batch_size > 0 && c.dynamics_batch > 0, "config: batch sizes must be positive");
  require(c.noise.target_distance > 0 && c.noise.initial_sigma >= 0 && c.noise.adapt_factor > 1 &&
              c.noise.action_sigma >= 0,
          "config: noise settings out of range");
  require(c.dynamics_steps >= 0, "config: dynamics.steps must be >= 0");
  require(c.total_steps >= 0, "config: train.total_steps must be >= 0");
  require(c.gradient_steps > 0, "config: train.gradient_steps must be positive");
  require(c.warmup_steps >= 0 && c.model_warmup_steps >= 0, "config: warmups must be >= 0");
  require(c.replay_capacity > 0, "config: train.replay_capacity must be positive");
  require(c.eval_interval > 0 && c.eval_episodes > 0, "config: eval counts must be positive");
  require(!c.seeds.empty(), "config: run.seeds must not be empty");
  std::set<std::uint64_t> unique(c.seeds.begin(), c.seeds.end());
  require(unique.size() == c.seeds.size(), "config: run.seeds has duplicates");
  require(!c.output_dir.empty(), "config: run.output_dir must not be empty");
}

ExperimentConfig parse_config(const std::string& text, const ExperimentConfig& base) {
  ExperimentConfig config = base;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ContractViolation("config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!seen.insert(key).second)
      throw ContractViolation("config line " + std::to_string(line_no) + ": duplicate key '" +
                              key + "'");
    try {
      set_config_value(config, key, value);
    } catch (const ContractViolation& e) {
      throw ContractViolation("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  validate(config);
  return config;
}

ExperimentConfig load_config(const std::string& path, const ExperimentConfig& base) {
  std::ifstream in(path);
  require(static_cast<bool>(in), "config: cannot open '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), base);
}

std::vector<std::string> differing_keys(const ExperimentConfig& a, const ExperimentConfig& b) {
  std::vector<std::string> out;
  for (const auto& f : fields())
    if (f.get(a) != f.get(b)) out.push_back(f.key);
  return out;
}

}  // namespace mvelab
