#include "gfn/env.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "gfn/errors.hpp"

namespace gfn::envs {

double Environment::realized_reward(const State& terminal, diff::SeededRng&) const {
  return std::exp(log_expected_reward(terminal));
}

double Environment::intermediate_log_reward(const State&) const {
  throw std::logic_error(name_ + ": intermediate energy not defined");
}

EnergyOracle::EnergyOracle(const EnvSpec& spec, std::uint64_t reward_seed)
    : env_(spec.env),
      beta_(spec.beta),
      intermediate_enabled_(spec.intermediate_energy_enabled && spec.env->has_intermediate_energy()),
      rng_(reward_seed) {}

double EnergyOracle::terminal_energy(const State& x, double* realized_reward) {
  terminal_calls_.fetch_add(1, std::memory_order_relaxed);
  if (realized_reward != nullptr) *realized_reward = env_->realized_reward(x, rng_);
  return -beta_ * env_->log_expected_reward(x);
}

double EnergyOracle::intermediate_energy(const State& s) {
  if (!intermediate_enabled_)
    throw ConfigError(env_->name() + ": intermediate energy evaluation is not available");
  intermediate_calls_.fetch_add(1, std::memory_order_relaxed);
  return -beta_ * env_->intermediate_log_reward(s);
}

double EnergyOracle::evaluate(const State& s, bool terminal, double* realized_reward) {
  return terminal ? terminal_energy(s, realized_reward) : intermediate_energy(s);
}

void EnergyOracle::restore_counters(std::int64_t terminal, std::int64_t intermediate) {
  terminal_calls_.store(terminal);
  intermediate_calls_.store(intermediate);
}

void validate_trajectory(const Environment& env, const Trajectory& traj) {
  if (traj.states.size() != traj.actions.size() + 1)
    throw std::invalid_argument("trajectory: states must be one longer than actions");
  if (traj.states.empty()) throw std::invalid_argument("trajectory: empty");
  if (!(traj.states.front() == env.initial_state()))
    throw std::invalid_argument("trajectory: must start at the initial state");
  if (!env.is_terminal(traj.states.back()))
    throw std::invalid_argument("trajectory: must end at a terminal state");
  for (std::size_t t = 0; t + 1 < traj.states.size(); ++t) {
    const auto edges = env.children(traj.states[t]);
    bool found = false;
    for (const auto& e : edges) {
      if (e.action == traj.actions[t] && e.state == traj.states[t + 1]) {
        found = true;
        break;
      }
    }
    if (!found)
      throw std::invalid_argument("trajectory: step " + std::to_string(t) +
                                  " is not a valid transition");
    if (env.rank(traj.states[t + 1]) <= env.rank(traj.states[t]))
      throw std::invalid_argument("trajectory: rank must strictly increase");
  }
}

std::vector<TerminalEntry> enumerate_terminals(const EnvSpec& spec, double max_objects) {
  const Environment& env = *spec.env;
  const double est = env.terminal_space_size();
  if (est > max_objects)
    throw ConfigError(env.name() + ": terminal space too large to enumerate (about " +
                      std::to_string(est) + " objects, guard " + std::to_string(max_objects) + ")");

  // Breadth-first expansion over the DAG, deduplicated by canonical key.
  std::map<std::string, State> pending;
  std::map<std::string, State> expanded;
  std::map<std::string, State> terminals;
  const State s0 = env.initial_state();
  if (env.is_terminal(s0)) throw std::logic_error(env.name() + ": initial state is terminal");
  pending.emplace(env.key(s0), s0);
  while (!pending.empty()) {
    auto it = pending.begin();
    const State s = it->second;
    expanded.emplace(it->first, s);
    pending.erase(it);
    for (const auto& e : env.children(s)) {
      if (env.is_terminal(e.state)) {
        terminals.emplace(env.key(e.state), e.state);
      } else {
        const std::string ck = env.key(e.state);
        if (!expanded.contains(ck)) pending.emplace(ck, e.state);
      }
    }
  }

  std::vector<TerminalEntry> out;
  out.reserve(terminals.size());
  double max_log = -1e300;
  for (const auto& [k, s] : terminals)
    max_log = std::max(max_log, spec.beta * env.log_expected_reward(s));
  double z = 0.0;
  for (const auto& [k, s] : terminals) z += std::exp(spec.beta * env.log_expected_reward(s) - max_log);
  const double log_z = max_log + std::log(z);
  for (const auto& [k, s] : terminals) {
    TerminalEntry e;
    e.state = s;
    e.key = k;
    e.expected_reward = std::exp(env.log_expected_reward(s));
    e.probability = std::exp(spec.beta * env.log_expected_reward(s) - log_z);
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace gfn::envs
