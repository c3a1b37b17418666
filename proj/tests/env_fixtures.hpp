#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "gfn/env.hpp"

namespace gfn::testenv {

using envs::Edge;
using envs::Environment;
using envs::EnvSpec;
using envs::State;

/// Root plus k terminal leaves with fixed rewards; one action per leaf.
class StarEnv : public Environment {
 public:
  explicit StarEnv(std::vector<double> rewards) : rewards_(std::move(rewards)) {
    name_ = "star";
    if (rewards_.size() < 2) throw std::invalid_argument("star: need >= 2 leaves");
  }

  int action_count() const override { return static_cast<int>(rewards_.size()); }
  int max_trajectory_length() const override { return 1; }
  int encoding_dim() const override { return action_count() + 1; }
  State initial_state() const override { return State{}; }
  bool is_terminal(const State& s) const override { return !s.items.empty(); }

  void encode(const State& s, std::span<double> out) const override {
    for (auto& v : out) v = 0.0;
    if (s.items.empty())
      out[action_count()] = 1.0;
    else
      out[s.items[0]] = 1.0;
  }

  std::vector<Edge> children(const State& s) const override {
    if (is_terminal(s)) throw std::invalid_argument("star: children of terminal");
    std::vector<Edge> out;
    for (int i = 0; i < action_count(); ++i) {
      Edge e;
      e.action = i;
      e.state.items = {i};
      e.state.terminal = true;
      out.push_back(std::move(e));
    }
    return out;
  }

  std::vector<Edge> parents(const State& s) const override {
    if (s.items.empty()) throw std::invalid_argument("star: parents of the initial state");
    Edge e;
    e.action = s.items[0];
    e.state = State{};
    return {e};
  }

  int rank(const State& s) const override { return static_cast<int>(s.items.size()); }

  std::string key(const State& s) const override {
    return s.items.empty() ? "root" : std::to_string(s.items[0]);
  }

  double log_expected_reward(const State& terminal) const override {
    return std::log(rewards_[terminal.items[0]]);
  }

  bool has_intermediate_energy() const override { return false; }
  double terminal_space_size() const override { return static_cast<double>(rewards_.size()); }
  double default_mode_threshold() const override { return 0.0; }

 private:
  std::vector<double> rewards_;
};

inline EnvSpec star_env(std::vector<double> rewards, double beta = 1.0) {
  EnvSpec spec;
  spec.env = std::make_shared<StarEnv>(std::move(rewards));
  spec.beta = beta;
  spec.mode_threshold = 0.0;
  spec.intermediate_energy_enabled = false;
  return spec;
}

/// Single path of fixed length; exactly one action everywhere.
class ChainEnv : public Environment {
 public:
  ChainEnv(int length, double reward) : length_(length), reward_(reward) { name_ = "chain"; }

  int action_count() const override { return 1; }
  int max_trajectory_length() const override { return length_; }
  int encoding_dim() const override { return 2; }
  State initial_state() const override { return State{{0}, false}; }
  bool is_terminal(const State& s) const override { return s.items[0] == length_; }

  void encode(const State& s, std::span<double> out) const override {
    out[0] = static_cast<double>(s.items[0]) / length_;
    out[1] = 1.0;
  }

  std::vector<Edge> children(const State& s) const override {
    if (is_terminal(s)) throw std::invalid_argument("chain: children of terminal");
    Edge e;
    e.action = 0;
    e.state.items = {s.items[0] + 1};
    e.state.terminal = e.state.items[0] == length_;
    return {e};
  }

  std::vector<Edge> parents(const State& s) const override {
    if (s.items[0] == 0) throw std::invalid_argument("chain: parents of the initial state");
    Edge e;
    e.action = 0;
    e.state.items = {s.items[0] - 1};
    e.state.terminal = false;
    return {e};
  }

  int rank(const State& s) const override { return s.items[0]; }
  std::string key(const State& s) const override { return std::to_string(s.items[0]); }
  double log_expected_reward(const State&) const override { return std::log(reward_); }
  bool has_intermediate_energy() const override { return false; }
  double terminal_space_size() const override { return 1.0; }
  double default_mode_threshold() const override { return 0.0; }

 private:
  int length_;
  double reward_;
};

inline EnvSpec chain_env(int length, double reward) {
  EnvSpec spec;
  spec.env = std::make_shared<ChainEnv>(length, reward);
  spec.beta = 1.0;
  spec.intermediate_energy_enabled = false;
  return spec;
}

/// Violates the environment contract: a non-terminal state with no actions.
class DeadEndEnv : public ChainEnv {
 public:
  DeadEndEnv() : ChainEnv(2, 1.0) { name_ = "dead-end"; }
  std::vector<Edge> children(const State& s) const override {
    if (s.items[0] == 1) return {};
    return ChainEnv::children(s);
  }
};

}  // namespace gfn::testenv
