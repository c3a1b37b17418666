#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "gfn/env.hpp"
#include "gfn/errors.hpp"

namespace gfn::envs {

namespace {

constexpr double kSpecialExpectedReward = 15.0;  // 0.75 * 10 + 0.25 * 30
constexpr double kBaseReward = 0.1;

/// Multiset construction: one add action per entity type plus a stop action
/// that is valid at any non-empty bag and forced at capacity.
class BagEnv : public Environment {
 public:
  BagEnv(int types, int capacity, int special_repeat)
      : types_(types), capacity_(capacity), special_repeat_(special_repeat) {
    name_ = "bag";
    if (types < 2) throw ConfigError("bag: entity_types must be >= 2");
    if (special_repeat > capacity) throw ConfigError("bag: capacity < special_repeat");
    if (capacity < 1) throw ConfigError("bag: capacity must be >= 1");
  }

  int action_count() const override { return types_ + 1; }
  int max_trajectory_length() const override { return capacity_ + 1; }
  int encoding_dim() const override { return types_ + 1; }

  State initial_state() const override {
    State s;
    s.items.assign(types_, 0);
    return s;
  }

  bool is_terminal(const State& s) const override { return s.terminal; }

  void encode(const State& s, std::span<double> out) const override {
    for (int i = 0; i < types_; ++i) out[i] = static_cast<double>(s.items[i]) / capacity_;
    out[types_] = static_cast<double>(size_of(s)) / capacity_;
  }

  std::vector<Edge> children(const State& s) const override {
    if (s.terminal) throw std::invalid_argument("bag: children of a terminal state");
    std::vector<Edge> out;
    const int sz = size_of(s);
    if (sz < capacity_) {
      for (int i = 0; i < types_; ++i) {
        Edge e;
        e.action = i;
        e.state = s;
        e.state.items[i] += 1;
        out.push_back(std::move(e));
      }
    }
    if (sz >= 1) {
      Edge e;
      e.action = types_;
      e.state = s;
      e.state.terminal = true;
      out.push_back(std::move(e));
    }
    return out;
  }

  std::vector<Edge> parents(const State& s) const override {
    if (!s.terminal && size_of(s) == 0)
      throw std::invalid_argument("bag: parents of the initial state");
    std::vector<Edge> out;
    if (s.terminal) {
      Edge e;
      e.action = types_;
      e.state = s;
      e.state.terminal = false;
      out.push_back(std::move(e));
      return out;
    }
    for (int i = 0; i < types_; ++i) {
      if (s.items[i] > 0) {
        Edge e;
        e.action = i;
        e.state = s;
        e.state.items[i] -= 1;
        out.push_back(std::move(e));
      }
    }
    return out;
  }

  int rank(const State& s) const override { return 2 * size_of(s) + (s.terminal ? 1 : 0); }

  std::string key(const State& s) const override {
    std::string k;
    for (int i = 0; i < types_; ++i) {
      if (i) k += ',';
      k += std::to_string(s.items[i]);
    }
    return k;
  }

  double log_expected_reward(const State& terminal) const override {
    return std::log(is_special(terminal) ? kSpecialExpectedReward : kBaseReward);
  }

  double realized_reward(const State& terminal, diff::SeededRng& rng) const override {
    if (!is_special(terminal)) return kBaseReward;
    return rng.uniform() < 0.75 ? 10.0 : 30.0;
  }

  bool has_intermediate_energy() const override { return true; }

  double intermediate_log_reward(const State& s) const override {
    if (s.terminal) return log_expected_reward(s);
    return is_special(s) ? std::log(kSpecialExpectedReward) : 0.0;
  }

  double terminal_space_size() const override {
    // Non-empty multisets of size <= capacity over types_ entity types.
    double total = 0.0;
    for (int k = 1; k <= capacity_; ++k) {
      double c = 1.0;
      for (int j = 1; j < types_; ++j) c = c * (k + j) / j;
      total += c;
    }
    return total;
  }

  double default_mode_threshold() const override { return 30.0; }

 private:
  int size_of(const State& s) const {
    int n = 0;
    for (int c : s.items) n += c;
    return n;
  }

  bool is_special(const State& s) const {
    return *std::max_element(s.items.begin(), s.items.end()) >= special_repeat_;
  }

  int types_;
  int capacity_;
  int special_repeat_;
};

}  // namespace

EnvSpec bag_env(int entity_types, int capacity, int special_repeat) {
  EnvSpec spec;
  spec.env = std::make_shared<BagEnv>(entity_types, capacity, special_repeat);
  spec.beta = 1.0;
  spec.mode_threshold = spec.env->default_mode_threshold();
  return spec;
}

}  // namespace gfn::envs
