#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "gfn/env.hpp"
#include "gfn/errors.hpp"

namespace gfn::envs {

namespace {

/// Fixed-size subset selection. States hold sorted member ids; exactly the
/// not-yet-chosen entities are offered as actions, and a state is terminal
/// when the set reaches capacity.
class SetEnv : public Environment {
 public:
  SetEnv(int types, int capacity, std::uint64_t utility_seed)
      : types_(types), capacity_(capacity) {
    name_ = "set";
    if (types < 2) throw ConfigError("set: entity_types must be >= 2");
    if (capacity < 1 || capacity > types) throw ConfigError("set: capacity must be in [1, entity_types]");
    diff::SeededRng rng(utility_seed);
    utilities_.resize(types);
    for (auto& u : utilities_) u = rng.uniform(0.01, 1.0);
  }

  int action_count() const override { return types_; }
  int max_trajectory_length() const override { return capacity_; }
  int encoding_dim() const override { return types_ + 1; }

  State initial_state() const override { return State{}; }

  bool is_terminal(const State& s) const override {
    return static_cast<int>(s.items.size()) == capacity_;
  }

  void encode(const State& s, std::span<double> out) const override {
    for (int i = 0; i < types_; ++i) out[i] = 0.0;
    for (std::int32_t m : s.items) out[m] = 1.0;
    out[types_] = static_cast<double>(s.items.size()) / capacity_;
  }

  std::vector<Edge> children(const State& s) const override {
    if (is_terminal(s)) throw std::invalid_argument("set: children of a terminal state");
    std::vector<Edge> out;
    out.reserve(types_ - s.items.size());
    for (int i = 0; i < types_; ++i) {
      if (std::binary_search(s.items.begin(), s.items.end(), i)) continue;
      Edge e;
      e.action = i;
      e.state = s;
      e.state.items.insert(
          std::lower_bound(e.state.items.begin(), e.state.items.end(), i), i);
      e.state.terminal = static_cast<int>(e.state.items.size()) == capacity_;
      out.push_back(std::move(e));
    }
    return out;
  }

  std::vector<Edge> parents(const State& s) const override {
    if (s.items.empty()) throw std::invalid_argument("set: parents of the initial state");
    std::vector<Edge> out;
    out.reserve(s.items.size());
    for (std::int32_t m : s.items) {
      Edge e;
      e.action = m;
      e.state = s;
      e.state.items.erase(
          std::find(e.state.items.begin(), e.state.items.end(), m));
      e.state.terminal = false;
      out.push_back(std::move(e));
    }
    return out;
  }

  int rank(const State& s) const override { return static_cast<int>(s.items.size()); }

  std::string key(const State& s) const override {
    std::string k;
    for (std::size_t i = 0; i < s.items.size(); ++i) {
      if (i) k += ',';
      k += std::to_string(s.items[i]);
    }
    return k;
  }

  double log_expected_reward(const State& terminal) const override {
    return std::log(utility_sum(terminal) / capacity_);
  }

  bool has_intermediate_energy() const override { return true; }

  /// Accumulated member utilities, scaled by capacity so the final partial
  /// credit matches the mean-utility reward scale.
  double intermediate_log_reward(const State& s) const override {
    if (is_terminal(s)) return log_expected_reward(s);
    return utility_sum(s) / capacity_;
  }

  double terminal_space_size() const override {
    double c = 1.0;
    for (int j = 1; j <= capacity_; ++j) c = c * (types_ - capacity_ + j) / j;
    return c;
  }

  double default_mode_threshold() const override { return 0.25; }

 private:
  double utility_sum(const State& s) const {
    double total = 0.0;
    for (std::int32_t m : s.items) total += utilities_[m];
    return total;
  }

  int types_;
  int capacity_;
  std::vector<double> utilities_;
};

}  // namespace

EnvSpec set_env(int entity_types, int capacity, std::uint64_t utility_seed) {
  EnvSpec spec;
  spec.env = std::make_shared<SetEnv>(entity_types, capacity, utility_seed);
  spec.beta = 1.0;
  spec.mode_threshold = spec.env->default_mode_threshold();
  return spec;
}

}  // namespace gfn::envs
