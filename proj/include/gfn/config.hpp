#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gfn/env.hpp"
#include "gfn/led.hpp"
#include "gfn/objectives.hpp"

namespace gfn::harness {

/// Parsed flat key-value config text with [section] headers. Unknown keys and
/// sections are errors when a RunConfig is built from it.
struct Ini {
  // section -> ordered (key, value) pairs
  std::map<std::string, std::vector<std::pair<std::string, std::string>>> sections;

  static Ini parse(const std::string& text);
  void set(const std::string& section, const std::string& key, const std::string& value);
  bool has(const std::string& section) const { return sections.contains(section); }
};

struct EnvConfig {
  std::string kind;  // bag | set | sequence
  int entity_types = 0;
  int capacity = 0;
  int special_repeat = 0;
  int vocab = 0;
  int length = 0;
  std::uint64_t utility_seed = 1;
  std::uint64_t landscape_seed = 1;
  std::optional<double> beta;
  std::optional<double> mode_threshold;
  bool intermediate_energy = true;

  bool operator==(const EnvConfig&) const = default;
};

struct LedConfig {
  double keep_prob = 0.9;
  int inner_steps = 8;
  int batch_size = 32;
  std::string redistribution = "uniform_error";
  std::string potential = "least_squares";
  double learning_rate = 0.001;
  int buffer_capacity = 10000;

  bool operator==(const LedConfig&) const = default;
  led::DecompositionConfig to_decomposition() const;
};

/// Full experiment description; serializes losslessly to the config text
/// format and back.
struct RunConfig {
  // [run]
  std::string objective = "db";
  int rounds = 0;
  int batch_size = 1;
  std::vector<std::uint64_t> seeds;
  int eval_every = 25;
  int topk = 100;
  std::string out_dir = "runs/out";
  int checkpoint_every = 0;
  bool deterministic_timing = false;
  bool parallel_seeds = false;
  bool fl_memoize = true;
  // [env]
  EnvConfig env;
  // [policy]
  std::vector<int> hidden;
  double learning_rate = 1e-3;
  double epsilon = 0.0;
  // [subtb], subtb-family objectives only
  std::optional<double> subtb_lambda;
  // [led], led objectives only
  std::optional<LedConfig> led;

  bool operator==(const RunConfig&) const = default;

  ObjectiveKind objective_kind() const { return parse_objective(objective); }

  static RunConfig from_text(const std::string& text);
  static RunConfig from_ini(const Ini& ini);
  static RunConfig load(const std::string& path);
  std::string to_text() const;

  /// Fails fast on any inconsistency, with the offending field in the message.
  void validate() const;

  /// Builds the environment with the configured overrides applied.
  envs::EnvSpec build_env() const;

  /// FNV-1a hash of the canonical serialization plus the seed; pins
  /// checkpoints to the exact configuration that produced them.
  std::uint64_t hash(std::uint64_t seed) const;
};

/// Named experiment presets; unknown names raise a ConfigError that lists the
/// valid ones.
RunConfig preset(const std::string& name);
std::vector<std::string> preset_names();

/// Preset text with `--override section.key=value` patches applied. Switching
/// the objective to a led_* / subtb variant injects the missing section with
/// defaults appropriate for the environment.
RunConfig preset_with_overrides(const std::string& name,
                                const std::vector<std::string>& overrides);

std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t h = 0xcbf29ce484222325ULL);

}  // namespace gfn::harness
