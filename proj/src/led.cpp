#include "gfn/led.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <stdexcept>

#include "gfn/errors.hpp"
#include "gfn/gradcheck.hpp"

namespace gfn::led {

using envs::Environment;
using envs::State;
using envs::Trajectory;

PotentialModel PotentialModel::make(const Environment& env, const std::vector<int>& hidden,
                                    diff::SeededRng& rng, diff::Activation act) {
  PotentialModel m;
  std::vector<int> sizes;
  sizes.push_back(env.encoding_dim() + env.action_count());
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(1);
  m.net = diff::Mlp::make(std::move(sizes), act, rng);
  return m;
}

Redistribution parse_redistribution(const std::string& name) {
  if (name == "uniform_error") return Redistribution::kUniformError;
  if (name == "led_star") return Redistribution::kLedStarCorrection;
  if (name == "none") return Redistribution::kNone;
  throw ConfigError("unknown redistribution '" + name + "' (expected uniform_error|led_star|none)");
}

std::string redistribution_name(Redistribution r) {
  switch (r) {
    case Redistribution::kUniformError: return "uniform_error";
    case Redistribution::kLedStarCorrection: return "led_star";
    case Redistribution::kNone: return "none";
  }
  return "?";
}

PotentialSource parse_potential_source(const std::string& name) {
  if (name == "least_squares") return PotentialSource::kLeastSquares;
  if (name == "proxy_diff") return PotentialSource::kProxyDiff;
  throw ConfigError("unknown potential source '" + name +
                    "' (expected least_squares|proxy_diff)");
}

std::string potential_source_name(PotentialSource s) {
  return s == PotentialSource::kLeastSquares ? "least_squares" : "proxy_diff";
}

void DecompositionConfig::validate() const {
  if (keep_prob <= 0.0 || keep_prob > 1.0)
    throw ConfigError("led.keep_prob must be in (0, 1]");
  if (inner_steps < 1) throw ConfigError("led.inner_steps must be >= 1");
  if (batch_size < 1) throw ConfigError("led.batch_size must be >= 1");
  if (learning_rate <= 0.0) throw ConfigError("led.learning_rate must be positive");
  if (buffer_capacity < 1) throw ConfigError("led.buffer_capacity must be >= 1");
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity < 1) throw std::invalid_argument("ReplayBuffer: capacity must be >= 1");
}

void ReplayBuffer::push(Trajectory traj) {
  if (storage_.size() == capacity_) storage_.pop_front();
  storage_.push_back(std::move(traj));
}

const Trajectory& ReplayBuffer::sample(diff::SeededRng& rng) const {
  if (storage_.empty()) throw std::logic_error("ReplayBuffer: sample from empty buffer");
  return storage_[rng.uniform_int(storage_.size())];
}

diff::Tensor potential_input(const Environment& env, const State& s, int action) {
  const int enc = env.encoding_dim();
  diff::Tensor x = diff::Tensor::zeros({enc + env.action_count()});
  env.encode(s, std::span<double>(x.data).subspan(0, enc));
  x.data[enc + action] = 1.0;
  return x;
}

namespace {

/// Stacks the whole trajectory's (s_t, a_t) inputs into one matrix.
diff::Tensor trajectory_inputs(const Environment& env, const Trajectory& traj) {
  const int enc = env.encoding_dim();
  const int width = enc + env.action_count();
  const int steps = traj.length();
  diff::Tensor x = diff::Tensor::zeros({steps, width});
  for (int t = 0; t < steps; ++t) {
    auto row = std::span<double>(x.data).subspan(static_cast<std::size_t>(t) * width, width);
    env.encode(traj.states[t], row.subspan(0, enc));
    row[enc + traj.actions[t]] = 1.0;
  }
  return x;
}

/// Taped per-transition potentials for one trajectory.
std::vector<Tape::NodeId> potential_nodes(Tape& tape, PotentialModel& model,
                                          const Environment& env, const Trajectory& traj) {
  const Tape::NodeId out = model.net.forward(tape, tape.input(trajectory_inputs(env, traj)));
  std::vector<Tape::NodeId> phis;
  phis.reserve(traj.length());
  for (int t = 0; t < traj.length(); ++t) phis.push_back(tape.pick2(out, t, 0));
  return phis;
}

Tape::NodeId ls_loss_from_nodes(Tape& tape, const std::vector<Tape::NodeId>& phis,
                                double terminal_energy, const std::vector<std::int32_t>& mask) {
  const int steps = static_cast<int>(phis.size());
  int kept = 0;
  for (std::int32_t z : mask) kept += z;
  std::vector<std::pair<double, Tape::NodeId>> terms;
  terms.reserve(kept);
  for (int t = 0; t < steps; ++t)
    if (mask[t]) terms.emplace_back(-1.0 / kept, phis[t]);
  const Tape::NodeId r = tape.affine_combine(terms, terminal_energy / steps);
  return tape.square(r);
}

}  // namespace

std::vector<double> raw_potentials(const PotentialModel& model, const Environment& env,
                                   const Trajectory& traj) {
  const diff::Tensor out = model.net.eval(trajectory_inputs(env, traj));
  std::vector<double> phis(out.data.begin(), out.data.end());
  return phis;
}

Tape::NodeId ls_loss(Tape& tape, PotentialModel& model, const Environment& env,
                     const Trajectory& traj, double keep_prob, diff::SeededRng& mask_rng) {
  if (traj.length() < 1) throw std::invalid_argument("ls_loss: empty trajectory");
  if (keep_prob <= 0.0 || keep_prob > 1.0)
    throw std::invalid_argument("ls_loss: keep_prob must be in (0, 1]");
  // All-dropped masks leave the estimator undefined (C = 0); reject and redraw.
  std::vector<std::int32_t> mask;
  do {
    mask = diff::bernoulli_mask(mask_rng, traj.length(), keep_prob);
  } while (std::none_of(mask.begin(), mask.end(), [](std::int32_t z) { return z != 0; }));
  const auto phis = potential_nodes(tape, model, env, traj);
  return ls_loss_from_nodes(tape, phis, traj.terminal_energy, mask);
}

double ls_loss_exact(const PotentialModel& model, const Environment& env, const Trajectory& traj,
                     double keep_prob) {
  const int steps = traj.length();
  if (steps < 1) throw std::invalid_argument("ls_loss_exact: empty trajectory");
  if (steps > 16)
    throw std::invalid_argument("ls_loss_exact: refusing mask enumeration for T > 16");
  if (keep_prob <= 0.0 || keep_prob > 1.0)
    throw std::invalid_argument("ls_loss_exact: keep_prob must be in (0, 1]");

  const auto phis = raw_potentials(model, env, traj);
  const double target = traj.terminal_energy / steps;
  double total = 0.0;
  double weight_sum = 0.0;
  for (std::uint32_t bits = 1; bits < (1u << steps); ++bits) {
    double weight = 1.0;
    double kept_sum = 0.0;
    int kept = 0;
    for (int t = 0; t < steps; ++t) {
      if (bits & (1u << t)) {
        weight *= keep_prob;
        kept_sum += phis[t];
        ++kept;
      } else {
        weight *= 1.0 - keep_prob;
      }
    }
    const double r = target - kept_sum / kept;
    total += weight * r * r;
    weight_sum += weight;
  }
  return total / weight_sum;
}

std::optional<double> train_potentials(PotentialModel& model, const Environment& env,
                                       const ReplayBuffer& buffer,
                                       const DecompositionConfig& config, diff::AdamState& opt,
                                       diff::SeededRng& mask_rng, diff::SeededRng& sample_rng) {
  if (buffer.empty()) {
    std::cerr << "warning: decomposition buffer empty; skipping potential update\n";
    return std::nullopt;
  }
  const auto params = model.params();
  double loss_sum = 0.0;
  for (int step = 0; step < config.inner_steps; ++step) {
    Tape tape;
    std::vector<Tape::NodeId> losses;
    losses.reserve(config.batch_size);
    for (int b = 0; b < config.batch_size; ++b) {
      const Trajectory& traj = buffer.sample(sample_rng);
      losses.push_back(ls_loss(tape, model, env, traj, config.keep_prob, mask_rng));
    }
    const Tape::NodeId loss = tape.mean_scalars(losses);
    tape.backward(loss);
    const auto grads = diff::collect_grads(tape, params);
    diff::adam_step(params, grads, opt);
    loss_sum += tape.value(loss).scalar_value();
  }
  return loss_sum / config.inner_steps;
}

std::vector<double> redistribute(std::vector<double> raw, double terminal_energy,
                                 Redistribution mode) {
  if (raw.empty()) throw std::invalid_argument("redistribute: empty potential list");
  double sum = 0.0;
  for (double p : raw) sum += p;
  const double error = terminal_energy - sum;
  switch (mode) {
    case Redistribution::kUniformError: {
      const double delta = error / static_cast<double>(raw.size());
      for (double& p : raw) p += delta;
      break;
    }
    case Redistribution::kLedStarCorrection:
      raw.back() += error;
      break;
    case Redistribution::kNone:
      break;
  }
  return raw;
}

std::vector<double> assign_potentials(const PotentialModel& model, const Environment& env,
                                      const Trajectory& traj, Redistribution mode) {
  return redistribute(raw_potentials(model, env, traj), traj.terminal_energy, mode);
}

std::vector<double> proxy_difference_potentials(const diff::Mlp& proxy, const Environment& env,
                                                const Trajectory& traj) {
  const int enc = env.encoding_dim();
  const int n = static_cast<int>(traj.states.size());
  diff::Tensor x = diff::Tensor::zeros({n, enc});
  for (int t = 0; t < n; ++t)
    env.encode(traj.states[t],
               std::span<double>(x.data).subspan(static_cast<std::size_t>(t) * enc, enc));
  const diff::Tensor values = proxy.eval(x);
  std::vector<double> phis;
  phis.reserve(traj.length());
  for (int t = 0; t < traj.length(); ++t) phis.push_back(values.data[t + 1] - values.data[t]);
  return phis;
}

std::optional<double> train_proxy(diff::Mlp& proxy, const Environment& env,
                                  const ReplayBuffer& buffer, const DecompositionConfig& config,
                                  diff::AdamState& opt, diff::SeededRng& sample_rng) {
  if (buffer.empty()) {
    std::cerr << "warning: decomposition buffer empty; skipping proxy update\n";
    return std::nullopt;
  }
  const auto params = proxy.params();
  const int enc = env.encoding_dim();
  double loss_sum = 0.0;
  for (int step = 0; step < config.inner_steps; ++step) {
    Tape tape;
    diff::Tensor x = diff::Tensor::zeros({config.batch_size, enc});
    std::vector<double> targets(config.batch_size);
    for (int b = 0; b < config.batch_size; ++b) {
      const Trajectory& traj = buffer.sample(sample_rng);
      env.encode(traj.states.back(),
                 std::span<double>(x.data).subspan(static_cast<std::size_t>(b) * enc, enc));
      targets[b] = traj.terminal_energy;
    }
    const Tape::NodeId out = proxy.forward(tape, tape.input(std::move(x)));
    std::vector<Tape::NodeId> squares;
    squares.reserve(config.batch_size);
    for (int b = 0; b < config.batch_size; ++b) {
      const Tape::NodeId r =
          tape.affine_combine({{1.0, tape.pick2(out, b, 0)}}, -targets[b]);
      squares.push_back(tape.square(r));
    }
    const Tape::NodeId loss = tape.mean_scalars(squares);
    tape.backward(loss);
    const auto grads = diff::collect_grads(tape, params);
    diff::adam_step(params, grads, opt);
    loss_sum += tape.value(loss).scalar_value();
  }
  return loss_sum / config.inner_steps;
}

}  // namespace gfn::led
