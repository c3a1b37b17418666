#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "gfn/rng.hpp"

namespace gfn::envs {

/// Environment state. The meaning of items is environment-specific:
/// per-type counts (bag), sorted member ids (set) or an ordered token list
/// (sequence). The terminal flag matters only for environments with an
/// explicit stop action.
struct State {
  std::vector<std::int32_t> items;
  bool terminal = false;

  bool operator==(const State&) const = default;
};

struct Edge {
  std::int32_t action;
  State state;
};

/// A DAG-structured generation task rooted at a unique initial state.
/// children/parents must be mutually consistent and rank() must strictly
/// increase along every transition.
class Environment {
 public:
  virtual ~Environment() = default;

  const std::string& name() const { return name_; }
  virtual int action_count() const = 0;
  virtual int max_trajectory_length() const = 0;
  virtual int encoding_dim() const = 0;
  virtual State initial_state() const = 0;
  virtual bool is_terminal(const State& s) const = 0;

  /// Fixed-width real encoding with all features in [-1, 1].
  virtual void encode(const State& s, std::span<double> out) const = 0;

  /// Valid transitions in ascending action order. Contract error on terminal
  /// input.
  virtual std::vector<Edge> children(const State& s) const = 0;

  /// All (action, predecessor) pairs. Contract error on the initial state.
  virtual std::vector<Edge> parents(const State& s) const = 0;

  /// Monotone rank, strictly increasing along transitions.
  virtual int rank(const State& s) const = 0;

  /// Canonical object key used for deduplication and reporting.
  virtual std::string key(const State& s) const = 0;

  /// log of the deterministic (expected) reward of a terminal state.
  virtual double log_expected_reward(const State& terminal) const = 0;

  /// Realized reward draw; deterministic environments return the expected
  /// reward.
  virtual double realized_reward(const State& terminal, diff::SeededRng& rng) const;

  virtual bool has_intermediate_energy() const = 0;

  /// log reward of the incomplete object at a non-terminal state; for a
  /// terminal state this equals log_expected_reward.
  virtual double intermediate_log_reward(const State& s) const;

  /// Number of terminal objects (may exceed integer range; used for guards).
  virtual double terminal_space_size() const = 0;

  virtual double default_mode_threshold() const = 0;

 protected:
  std::string name_;
};

/// Environment plus the run-level reward conventions.
struct EnvSpec {
  std::shared_ptr<const Environment> env;
  double beta = 1.0;
  double mode_threshold = 0.0;
  bool intermediate_energy_enabled = true;
};

/// Instrumented energy oracle: target density is R(x)^beta, i.e. energy
/// E(x) = -beta * log R(x). Counts every evaluation exactly once.
class EnergyOracle {
 public:
  EnergyOracle(const EnvSpec& spec, std::uint64_t reward_seed);

  /// Energy of a terminal object; also draws the realized reward when
  /// requested. Increments terminal_calls.
  double terminal_energy(const State& x, double* realized_reward = nullptr);

  /// Energy of the (possibly incomplete) object at s. Increments
  /// intermediate_calls. Configuration error if the environment does not
  /// define intermediate energy.
  double intermediate_energy(const State& s);

  /// Spec-level entry point: terminal selects the counter and the reward
  /// semantics.
  double evaluate(const State& s, bool terminal, double* realized_reward = nullptr);

  std::int64_t terminal_calls() const { return terminal_calls_.load(); }
  std::int64_t intermediate_calls() const { return intermediate_calls_.load(); }
  void restore_counters(std::int64_t terminal, std::int64_t intermediate);

  double beta() const { return beta_; }
  diff::SeededRng& reward_rng() { return rng_; }
  const Environment& env() const { return *env_; }

 private:
  std::shared_ptr<const Environment> env_;
  double beta_;
  bool intermediate_enabled_;
  std::atomic<std::int64_t> terminal_calls_{0};
  std::atomic<std::int64_t> intermediate_calls_{0};
  diff::SeededRng rng_;
};

/// One complete generation episode.
struct Trajectory {
  std::vector<State> states;
  std::vector<std::int32_t> actions;
  double terminal_energy = 0.0;
  double terminal_reward = 0.0;

  int length() const { return static_cast<int>(actions.size()); }
};

/// Throws if the trajectory violates any structural invariant.
void validate_trajectory(const Environment& env, const Trajectory& traj);

struct TerminalEntry {
  State state;
  std::string key;
  double expected_reward;
  double probability;
};

/// Exhaustive terminal enumeration with exact target probabilities
/// p(x) = R(x)^beta / Z. Refuses spaces above the guard with a size estimate.
std::vector<TerminalEntry> enumerate_terminals(const EnvSpec& spec, double max_objects = 1e6);

// ---------------------------------------------------------------------------
// Environment factories
// ---------------------------------------------------------------------------

/// Multiset construction with a stop action. Bags holding special_repeat or
/// more copies of one entity draw reward 10 with 75% chance and 30 otherwise
/// (expected value 15 is used as the training target); all other bags earn
/// the base reward 0.1.
EnvSpec bag_env(int entity_types = 7, int capacity = 15, int special_repeat = 7);

/// Fixed-size subset selection; reward is the mean utility of the members,
/// with utilities drawn once from utility_seed, uniform in [0.01, 1].
EnvSpec set_env(int entity_types = 30, int capacity = 20, std::uint64_t utility_seed = 1);

/// Fixed-length token strings built by prepending or appending; reward is the
/// exponential of a seeded landscape (per-position weights plus adjacent-pair
/// bonuses).
EnvSpec sequence_env(int vocab = 4, int length = 8, std::uint64_t landscape_seed = 1);

}  // namespace gfn::envs
