#include "gfn/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "gfn/errors.hpp"

namespace gfn::harness {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

/// Tracks which keys of a section were consumed so leftovers fail fast.
class SectionReader {
 public:
  SectionReader(const Ini& ini, const std::string& section) : section_(section) {
    auto it = ini.sections.find(section);
    if (it != ini.sections.end()) {
      for (const auto& [k, v] : it->second) {
        if (!values_.emplace(k, v).second)
          throw ConfigError("[" + section + "] duplicate key '" + k + "'");
      }
    }
  }

  bool has(const std::string& key) const { return values_.contains(key); }

  std::optional<std::string> take(const std::string& key) {
    auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    std::string v = it->second;
    values_.erase(it);
    return v;
  }

  std::string require(const std::string& key) {
    auto v = take(key);
    if (!v) throw ConfigError("[" + section_ + "] missing required key '" + key + "'");
    return *v;
  }

  void finish() const {
    if (!values_.empty())
      throw ConfigError("[" + section_ + "] unknown key '" + values_.begin()->first + "'");
  }

 private:
  std::string section_;
  std::map<std::string, std::string> values_;
};

long long parse_int(const std::string& section, const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long long out = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("[" + section + "] " + key + ": invalid integer '" + v + "'");
  }
}

std::uint64_t parse_u64(const std::string& section, const std::string& key,
                        const std::string& v) {
  try {
    std::size_t pos = 0;
    const unsigned long long out = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("[" + section + "] " + key + ": invalid unsigned integer '" + v + "'");
  }
}

double parse_double(const std::string& section, const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double out = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("[" + section + "] " + key + ": invalid number '" + v + "'");
  }
}

bool parse_bool(const std::string& section, const std::string& key, const std::string& v) {
  if (v == "true" || v == "on" || v == "1") return true;
  if (v == "false" || v == "off" || v == "0") return false;
  throw ConfigError("[" + section + "] " + key + ": invalid boolean '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

Ini Ini::parse(const std::string& text) {
  Ini ini;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw ConfigError("line " + std::to_string(lineno) + ": bad section header");
      section = trim(t.substr(1, t.size() - 2));
      if (section.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty section name");
      ini.sections[section];  // register even if empty
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    if (section.empty())
      throw ConfigError("line " + std::to_string(lineno) + ": key outside any section");
    ini.sections[section].emplace_back(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  return ini;
}

void Ini::set(const std::string& section, const std::string& key, const std::string& value) {
  auto& entries = sections[section];
  for (auto& [k, v] : entries) {
    if (k == key) {
      v = value;
      return;
    }
  }
  entries.emplace_back(key, value);
}

led::DecompositionConfig LedConfig::to_decomposition() const {
  led::DecompositionConfig d;
  d.keep_prob = keep_prob;
  d.inner_steps = inner_steps;
  d.batch_size = batch_size;
  d.redistribution = led::parse_redistribution(redistribution);
  d.source = led::parse_potential_source(potential);
  d.learning_rate = learning_rate;
  d.buffer_capacity = static_cast<std::size_t>(buffer_capacity);
  return d;
}

RunConfig RunConfig::from_text(const std::string& text) { return from_ini(Ini::parse(text)); }

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return from_text(ss.str());
}

RunConfig RunConfig::from_ini(const Ini& ini) {
  static const std::set<std::string> known = {"run", "env", "policy", "subtb", "led"};
  for (const auto& [name, entries] : ini.sections)
    if (!known.contains(name)) throw ConfigError("unknown section [" + name + "]");

  RunConfig cfg;
  {
    SectionReader run(ini, "run");
    cfg.objective = run.require("objective");
    cfg.rounds = static_cast<int>(parse_int("run", "rounds", run.require("rounds")));
    cfg.batch_size = static_cast<int>(parse_int("run", "batch_size", run.require("batch_size")));
    for (const auto& s : split_list(run.require("seeds")))
      cfg.seeds.push_back(parse_u64("run", "seeds", s));
    if (auto v = run.take("eval_every"))
      cfg.eval_every = static_cast<int>(parse_int("run", "eval_every", *v));
    if (auto v = run.take("topk")) cfg.topk = static_cast<int>(parse_int("run", "topk", *v));
    if (auto v = run.take("out_dir")) cfg.out_dir = *v;
    if (auto v = run.take("checkpoint_every"))
      cfg.checkpoint_every = static_cast<int>(parse_int("run", "checkpoint_every", *v));
    if (auto v = run.take("deterministic_timing"))
      cfg.deterministic_timing = parse_bool("run", "deterministic_timing", *v);
    if (auto v = run.take("parallel_seeds"))
      cfg.parallel_seeds = parse_bool("run", "parallel_seeds", *v);
    if (auto v = run.take("fl_memoize")) cfg.fl_memoize = parse_bool("run", "fl_memoize", *v);
    run.finish();
  }
  {
    SectionReader env(ini, "env");
    cfg.env.kind = env.require("kind");
    if (cfg.env.kind == "bag") {
      cfg.env.entity_types = 7;
      cfg.env.capacity = 15;
      cfg.env.special_repeat = 7;
      if (auto v = env.take("entity_types"))
        cfg.env.entity_types = static_cast<int>(parse_int("env", "entity_types", *v));
      if (auto v = env.take("capacity"))
        cfg.env.capacity = static_cast<int>(parse_int("env", "capacity", *v));
      if (auto v = env.take("special_repeat"))
        cfg.env.special_repeat = static_cast<int>(parse_int("env", "special_repeat", *v));
    } else if (cfg.env.kind == "set") {
      cfg.env.entity_types = 30;
      cfg.env.capacity = 20;
      if (auto v = env.take("entity_types"))
        cfg.env.entity_types = static_cast<int>(parse_int("env", "entity_types", *v));
      if (auto v = env.take("capacity"))
        cfg.env.capacity = static_cast<int>(parse_int("env", "capacity", *v));
      if (auto v = env.take("utility_seed"))
        cfg.env.utility_seed = parse_u64("env", "utility_seed", *v);
    } else if (cfg.env.kind == "sequence") {
      cfg.env.vocab = 4;
      cfg.env.length = 8;
      if (auto v = env.take("vocab")) cfg.env.vocab = static_cast<int>(parse_int("env", "vocab", *v));
      if (auto v = env.take("length"))
        cfg.env.length = static_cast<int>(parse_int("env", "length", *v));
      if (auto v = env.take("landscape_seed"))
        cfg.env.landscape_seed = parse_u64("env", "landscape_seed", *v);
    } else {
      throw ConfigError("[env] unknown kind '" + cfg.env.kind + "' (expected bag|set|sequence)");
    }
    if (auto v = env.take("beta")) cfg.env.beta = parse_double("env", "beta", *v);
    if (auto v = env.take("mode_threshold"))
      cfg.env.mode_threshold = parse_double("env", "mode_threshold", *v);
    if (auto v = env.take("intermediate_energy"))
      cfg.env.intermediate_energy = parse_bool("env", "intermediate_energy", *v);
    env.finish();
  }
  {
    SectionReader policy(ini, "policy");
    for (const auto& s : split_list(policy.require("hidden")))
      cfg.hidden.push_back(static_cast<int>(parse_int("policy", "hidden", s)));
    cfg.learning_rate = parse_double("policy", "learning_rate", policy.require("learning_rate"));
    if (auto v = policy.take("epsilon")) cfg.epsilon = parse_double("policy", "epsilon", *v);
    policy.finish();
  }
  if (ini.has("subtb")) {
    SectionReader subtb(ini, "subtb");
    cfg.subtb_lambda = parse_double("subtb", "lambda", subtb.require("lambda"));
    subtb.finish();
  }
  if (ini.has("led")) {
    SectionReader led_sec(ini, "led");
    LedConfig led;
    led.keep_prob = parse_double("led", "keep_prob", led_sec.require("keep_prob"));
    if (auto v = led_sec.take("inner_steps"))
      led.inner_steps = static_cast<int>(parse_int("led", "inner_steps", *v));
    led.batch_size = cfg.batch_size;
    if (auto v = led_sec.take("batch_size"))
      led.batch_size = static_cast<int>(parse_int("led", "batch_size", *v));
    if (auto v = led_sec.take("redistribution")) led.redistribution = *v;
    if (auto v = led_sec.take("potential")) led.potential = *v;
    if (auto v = led_sec.take("learning_rate"))
      led.learning_rate = parse_double("led", "learning_rate", *v);
    if (auto v = led_sec.take("buffer_capacity"))
      led.buffer_capacity = static_cast<int>(parse_int("led", "buffer_capacity", *v));
    led_sec.finish();
    cfg.led = led;
  }
  cfg.validate();
  return cfg;
}

std::string RunConfig::to_text() const {
  std::ostringstream out;
  out << "# gfn run config v1\n";
  out << "[run]\n";
  out << "objective = " << objective << "\n";
  out << "rounds = " << rounds << "\n";
  out << "batch_size = " << batch_size << "\n";
  out << "seeds = ";
  for (std::size_t i = 0; i < seeds.size(); ++i) out << (i ? "," : "") << seeds[i];
  out << "\n";
  out << "eval_every = " << eval_every << "\n";
  out << "topk = " << topk << "\n";
  out << "out_dir = " << out_dir << "\n";
  out << "checkpoint_every = " << checkpoint_every << "\n";
  out << "deterministic_timing = " << (deterministic_timing ? "true" : "false") << "\n";
  out << "parallel_seeds = " << (parallel_seeds ? "true" : "false") << "\n";
  out << "fl_memoize = " << (fl_memoize ? "true" : "false") << "\n";
  out << "[env]\n";
  out << "kind = " << env.kind << "\n";
  if (env.kind == "bag") {
    out << "entity_types = " << env.entity_types << "\n";
    out << "capacity = " << env.capacity << "\n";
    out << "special_repeat = " << env.special_repeat << "\n";
  } else if (env.kind == "set") {
    out << "entity_types = " << env.entity_types << "\n";
    out << "capacity = " << env.capacity << "\n";
    out << "utility_seed = " << env.utility_seed << "\n";
  } else {
    out << "vocab = " << env.vocab << "\n";
    out << "length = " << env.length << "\n";
    out << "landscape_seed = " << env.landscape_seed << "\n";
  }
  if (env.beta) out << "beta = " << format_double(*env.beta) << "\n";
  if (env.mode_threshold) out << "mode_threshold = " << format_double(*env.mode_threshold) << "\n";
  out << "intermediate_energy = " << (env.intermediate_energy ? "true" : "false") << "\n";
  out << "[policy]\n";
  out << "hidden = ";
  for (std::size_t i = 0; i < hidden.size(); ++i) out << (i ? "," : "") << hidden[i];
  out << "\n";
  out << "learning_rate = " << format_double(learning_rate) << "\n";
  out << "epsilon = " << format_double(epsilon) << "\n";
  if (subtb_lambda) {
    out << "[subtb]\n";
    out << "lambda = " << format_double(*subtb_lambda) << "\n";
  }
  if (led) {
    out << "[led]\n";
    out << "keep_prob = " << format_double(led->keep_prob) << "\n";
    out << "inner_steps = " << led->inner_steps << "\n";
    out << "batch_size = " << led->batch_size << "\n";
    out << "redistribution = " << led->redistribution << "\n";
    out << "potential = " << led->potential << "\n";
    out << "learning_rate = " << format_double(led->learning_rate) << "\n";
    out << "buffer_capacity = " << led->buffer_capacity << "\n";
  }
  return out.str();
}

void RunConfig::validate() const {
  const ObjectiveKind kind = objective_kind();
  if (rounds < 0) throw ConfigError("run.rounds must be >= 0");
  if (batch_size < 1) throw ConfigError("run.batch_size must be >= 1");
  if (seeds.empty()) throw ConfigError("run.seeds must list at least one seed");
  if (eval_every < 1) throw ConfigError("run.eval_every must be >= 1");
  if (topk < 1) throw ConfigError("run.topk must be >= 1");
  if (checkpoint_every < 0) throw ConfigError("run.checkpoint_every must be >= 0");
  if (hidden.empty()) throw ConfigError("policy.hidden must list at least one layer");
  for (int h : hidden)
    if (h < 1) throw ConfigError("policy.hidden sizes must be positive");
  if (learning_rate <= 0.0) throw ConfigError("policy.learning_rate must be positive");
  if (epsilon < 0.0 || epsilon > 1.0) throw ConfigError("policy.epsilon must be in [0, 1]");
  if (env.beta && *env.beta <= 0.0) throw ConfigError("env.beta must be positive");

  if (objective_is_subtb_family(kind)) {
    if (!subtb_lambda) throw ConfigError("[subtb] section with lambda required for " + objective);
    if (*subtb_lambda <= 0.0 || *subtb_lambda > 1.0)
      throw ConfigError("subtb.lambda must be in (0, 1]");
  } else if (subtb_lambda) {
    throw ConfigError("[subtb] section is only valid for subtb-family objectives");
  }

  if (objective_is_led(kind)) {
    if (!led) throw ConfigError("[led] section required for objective " + objective);
    led->to_decomposition().validate();
  } else if (led) {
    throw ConfigError("[led] section present but objective is " + objective);
  }

  if (objective_is_fl(kind) && !env.intermediate_energy)
    throw ConfigError(objective + " requires env.intermediate_energy = on");

  // Constructs the environment to surface parameter errors now.
  const envs::EnvSpec spec = build_env();
  if (!std::isfinite(spec.mode_threshold))
    throw ConfigError("env.mode_threshold required: no default is available for this environment");
  if (objective_is_fl(kind) && !spec.env->has_intermediate_energy())
    throw ConfigError(objective + " requires an environment with intermediate energy");
}

envs::EnvSpec RunConfig::build_env() const {
  envs::EnvSpec spec;
  if (env.kind == "bag") {
    spec = envs::bag_env(env.entity_types, env.capacity, env.special_repeat);
  } else if (env.kind == "set") {
    spec = envs::set_env(env.entity_types, env.capacity, env.utility_seed);
  } else if (env.kind == "sequence") {
    spec = envs::sequence_env(env.vocab, env.length, env.landscape_seed);
  } else {
    throw ConfigError("[env] unknown kind '" + env.kind + "'");
  }
  if (env.beta) spec.beta = *env.beta;
  if (env.mode_threshold) spec.mode_threshold = *env.mode_threshold;
  spec.intermediate_energy_enabled = env.intermediate_energy;
  return spec;
}

std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t RunConfig::hash(std::uint64_t seed) const {
  const std::string text = to_text();
  std::uint64_t h = fnv1a64(text.data(), text.size());
  return fnv1a64(&seed, sizeof(seed), h);
}

}  // namespace gfn::harness
