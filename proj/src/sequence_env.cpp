#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "gfn/env.hpp"
#include "gfn/errors.hpp"

namespace gfn::envs {

namespace {

/// Fixed-length token strings grown by prepending (actions 0..vocab-1) or
/// appending (actions vocab..2*vocab-1). A state of length >= 1 has two
/// parent edges, drop-first and drop-last, which may reach the same parent
/// state through distinct actions.
class SequenceEnv : public Environment {
 public:
  SequenceEnv(int vocab, int length, std::uint64_t landscape_seed)
      : vocab_(vocab), length_(length) {
    name_ = "sequence";
    if (vocab < 2) throw ConfigError("sequence: vocab must be >= 2");
    if (length < 2) throw ConfigError("sequence: length must be >= 2");
    diff::SeededRng rng(landscape_seed);
    position_weights_.assign(static_cast<std::size_t>(length) * vocab, 0.0);
    for (auto& w : position_weights_) w = rng.uniform(-1.0, 1.0);
    pair_bonus_.assign(static_cast<std::size_t>(vocab) * vocab, 0.0);
    for (auto& m : pair_bonus_) m = rng.uniform(-0.5, 0.5);
  }

  int action_count() const override { return 2 * vocab_; }
  int max_trajectory_length() const override { return length_; }
  int encoding_dim() const override { return length_ * vocab_ + 1; }

  State initial_state() const override { return State{}; }

  bool is_terminal(const State& s) const override {
    return static_cast<int>(s.items.size()) == length_;
  }

  void encode(const State& s, std::span<double> out) const override {
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t i = 0; i < s.items.size(); ++i) out[i * vocab_ + s.items[i]] = 1.0;
    out[static_cast<std::size_t>(length_) * vocab_] =
        static_cast<double>(s.items.size()) / length_;
  }

  std::vector<Edge> children(const State& s) const override {
    if (is_terminal(s)) throw std::invalid_argument("sequence: children of a terminal state");
    std::vector<Edge> out;
    out.reserve(2 * vocab_);
    const bool full_next = static_cast<int>(s.items.size()) + 1 == length_;
    for (int t = 0; t < vocab_; ++t) {
      Edge e;
      e.action = t;
      e.state.items.reserve(s.items.size() + 1);
      e.state.items.push_back(t);
      e.state.items.insert(e.state.items.end(), s.items.begin(), s.items.end());
      e.state.terminal = full_next;
      out.push_back(std::move(e));
    }
    for (int t = 0; t < vocab_; ++t) {
      Edge e;
      e.action = vocab_ + t;
      e.state.items = s.items;
      e.state.items.push_back(t);
      e.state.terminal = full_next;
      out.push_back(std::move(e));
    }
    return out;
  }

  std::vector<Edge> parents(const State& s) const override {
    if (s.items.empty()) throw std::invalid_argument("sequence: parents of the initial state");
    std::vector<Edge> out;
    Edge drop_first;
    drop_first.action = s.items.front();
    drop_first.state.items.assign(s.items.begin() + 1, s.items.end());
    out.push_back(std::move(drop_first));
    Edge drop_last;
    drop_last.action = vocab_ + s.items.back();
    drop_last.state.items.assign(s.items.begin(), s.items.end() - 1);
    out.push_back(std::move(drop_last));
    return out;
  }

  int rank(const State& s) const override { return static_cast<int>(s.items.size()); }

  std::string key(const State& s) const override {
    std::string k;
    k.reserve(s.items.size());
    for (std::int32_t t : s.items) k += static_cast<char>('A' + t);
    return k;
  }

  double log_expected_reward(const State& terminal) const override { return score(terminal); }

  bool has_intermediate_energy() const override { return true; }

  double intermediate_log_reward(const State& s) const override { return score(s); }

  double terminal_space_size() const override {
    return std::pow(static_cast<double>(vocab_), length_);
  }

  double default_mode_threshold() const override { return mode_threshold_; }
  void set_mode_threshold(double t) { mode_threshold_ = t; }

  /// Landscape value of a (possibly partial) sequence laid out from position 0.
  double score(const State& s) const {
    double total = 0.0;
    for (std::size_t i = 0; i < s.items.size(); ++i)
      total += position_weights_[i * vocab_ + s.items[i]];
    for (std::size_t i = 0; i + 1 < s.items.size(); ++i)
      total += pair_bonus_[static_cast<std::size_t>(s.items[i]) * vocab_ + s.items[i + 1]];
    return total;
  }

 private:
  int vocab_;
  int length_;
  std::vector<double> position_weights_;
  std::vector<double> pair_bonus_;
  double mode_threshold_ = std::numeric_limits<double>::infinity();
};

/// 99.5th percentile of the full reward table; only for enumerable spaces.
double reward_quantile_threshold(const SequenceEnv& env, int vocab, int length) {
  std::vector<double> scores;
  scores.reserve(static_cast<std::size_t>(std::pow(vocab, length)));
  State s;
  s.items.assign(length, 0);
  s.terminal = true;
  while (true) {
    scores.push_back(env.score(s));
    int pos = length - 1;
    while (pos >= 0 && s.items[pos] == vocab - 1) {
      s.items[pos] = 0;
      --pos;
    }
    if (pos < 0) break;
    s.items[pos] += 1;
  }
  std::sort(scores.begin(), scores.end());
  const auto idx = static_cast<std::size_t>(0.995 * (scores.size() - 1));
  return std::exp(scores[idx]);
}

}  // namespace

EnvSpec sequence_env(int vocab, int length, std::uint64_t landscape_seed) {
  auto env = std::make_shared<SequenceEnv>(vocab, length, landscape_seed);
  if (env->terminal_space_size() <= 1e6)
    env->set_mode_threshold(reward_quantile_threshold(*env, vocab, length));
  EnvSpec spec;
  spec.env = env;
  spec.beta = 3.0;
  spec.mode_threshold = env->default_mode_threshold();
  return spec;
}

}  // namespace gfn::envs
