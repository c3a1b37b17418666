#include "gfn/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "gfn/errors.hpp"

namespace gfn {

using envs::Edge;
using envs::EnergyOracle;
using envs::Environment;
using envs::EnvSpec;
using envs::State;
using envs::Trajectory;

ObjectiveKind parse_objective(const std::string& name) {
  if (name == "db") return ObjectiveKind::kDb;
  if (name == "tb") return ObjectiveKind::kTb;
  if (name == "subtb") return ObjectiveKind::kSubTb;
  if (name == "fl_db") return ObjectiveKind::kFlDb;
  if (name == "fl_subtb") return ObjectiveKind::kFlSubTb;
  if (name == "led_db") return ObjectiveKind::kLedDb;
  if (name == "led_subtb") return ObjectiveKind::kLedSubTb;
  throw ConfigError("unknown objective '" + name +
                    "' (expected db|tb|subtb|fl_db|fl_subtb|led_db|led_subtb)");
}

std::string objective_name(ObjectiveKind kind) {
  switch (kind) {
    case ObjectiveKind::kDb: return "db";
    case ObjectiveKind::kTb: return "tb";
    case ObjectiveKind::kSubTb: return "subtb";
    case ObjectiveKind::kFlDb: return "fl_db";
    case ObjectiveKind::kFlSubTb: return "fl_subtb";
    case ObjectiveKind::kLedDb: return "led_db";
    case ObjectiveKind::kLedSubTb: return "led_subtb";
  }
  return "?";
}

bool objective_is_led(ObjectiveKind kind) {
  return kind == ObjectiveKind::kLedDb || kind == ObjectiveKind::kLedSubTb;
}

bool objective_is_fl(ObjectiveKind kind) {
  return kind == ObjectiveKind::kFlDb || kind == ObjectiveKind::kFlSubTb;
}

bool objective_is_subtb_family(ObjectiveKind kind) {
  return kind == ObjectiveKind::kSubTb || kind == ObjectiveKind::kFlSubTb ||
         kind == ObjectiveKind::kLedSubTb;
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

Trajectory sample_trajectory(const EnvSpec& spec, const PolicyModel& model,
                             const ExplorationPolicy& exploration, diff::SeededRng& rng,
                             EnergyOracle& oracle) {
  const Environment& env = *spec.env;
  Trajectory traj;
  State s = env.initial_state();
  traj.states.push_back(s);
  while (!env.is_terminal(s)) {
    const auto kids = env.children(s);
    if (kids.empty())
      throw RuntimeAbort(env.name() + ": dead end at non-terminal state '" + env.key(s) + "'");
    const bool explore = rng.uniform() < exploration.epsilon;
    std::size_t idx;
    if (explore) {
      idx = rng.uniform_int(kids.size());
    } else {
      const auto probs = forward_action_probs(model, env, s, kids);
      const double u = rng.uniform();
      double acc = 0.0;
      idx = probs.size() - 1;
      for (std::size_t i = 0; i < probs.size(); ++i) {
        acc += probs[i];
        if (u < acc) {
          idx = i;
          break;
        }
      }
    }
    traj.actions.push_back(kids[idx].action);
    s = kids[idx].state;
    traj.states.push_back(s);
    if (traj.length() > env.max_trajectory_length())
      throw RuntimeAbort(env.name() + ": trajectory exceeded the maximum length");
  }
  traj.terminal_energy = oracle.terminal_energy(s, &traj.terminal_reward);
  return traj;
}

// ---------------------------------------------------------------------------
// Node evaluation shared by the transition- and trajectory-level objectives
// ---------------------------------------------------------------------------

Tape::NodeId transition_residual(Tape& tape, Tape::NodeId log_flow_s, Tape::NodeId log_pf,
                                 Tape::NodeId log_flow_s2, Tape::NodeId log_pb, double bonus) {
  const Tape::NodeId r = tape.affine_combine(
      {{1.0, log_flow_s}, {1.0, log_pf}, {-1.0, log_flow_s2}, {-1.0, log_pb}}, bonus);
  return tape.square(r);
}

namespace {

std::vector<std::int32_t> child_actions(const Environment& env, const State& s) {
  std::vector<std::int32_t> out;
  for (const auto& e : env.children(s)) out.push_back(e.action);
  return out;
}

std::vector<std::int32_t> parent_actions(const Environment& env, const State& s) {
  std::vector<std::int32_t> out;
  for (const auto& e : env.parents(s)) out.push_back(e.action);
  return out;
}

double flow_clamp(FlowMode mode, double terminal_energy) {
  return mode == FlowMode::kPlain ? -terminal_energy : 0.0;
}

struct TermNodes {
  std::vector<std::vector<Tape::NodeId>> log_pf;    // [i][t], t < T_i
  std::vector<std::vector<Tape::NodeId>> log_pb;    // [i][t], t < T_i
  std::vector<std::vector<Tape::NodeId>> log_flow;  // [i][t], t <= T_i (terminal = clamp)
};

/// Evaluates every state of the batch through the trunk and heads in one
/// pass and exposes per-step scalar nodes.
TermNodes eval_batch_terms(Tape& tape, PolicyModel& model, const Environment& env,
                           std::span<const Trajectory> batch, FlowMode mode, bool need_flow) {
  const int enc_dim = env.encoding_dim();
  std::size_t total_states = 0;
  for (const auto& traj : batch) total_states += traj.states.size();

  diff::Tensor encodings = diff::Tensor::zeros({static_cast<int>(total_states), enc_dim});
  std::vector<std::vector<std::int32_t>> fwd_masks(total_states);
  std::vector<std::vector<std::int32_t>> bwd_masks(total_states);
  std::size_t row = 0;
  for (const auto& traj : batch) {
    const std::size_t n = traj.states.size();
    for (std::size_t t = 0; t < n; ++t, ++row) {
      const State& s = traj.states[t];
      env.encode(s, std::span<double>(encodings.data).subspan(row * enc_dim, enc_dim));
      if (t + 1 < n) fwd_masks[row] = child_actions(env, s);
      if (t > 0) bwd_masks[row] = parent_actions(env, s);
    }
  }

  const Tape::NodeId features = model.trunk.forward(tape, tape.input(std::move(encodings)));
  const Tape::NodeId fwd_logp = tape.row_masked_log_softmax(
      model.forward_head.forward(tape, features), std::move(fwd_masks));
  const Tape::NodeId bwd_logp = tape.row_masked_log_softmax(
      model.backward_head.forward(tape, features), std::move(bwd_masks));
  const Tape::NodeId flows = need_flow ? model.flow_head.forward(tape, features) : -1;

  TermNodes out;
  out.log_pf.resize(batch.size());
  out.log_pb.resize(batch.size());
  if (need_flow) out.log_flow.resize(batch.size());
  row = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Trajectory& traj = batch[i];
    const int steps = traj.length();
    out.log_pf[i].reserve(steps);
    out.log_pb[i].reserve(steps);
    for (int t = 0; t < steps; ++t) {
      out.log_pf[i].push_back(tape.pick2(fwd_logp, static_cast<int>(row) + t, traj.actions[t]));
      out.log_pb[i].push_back(
          tape.pick2(bwd_logp, static_cast<int>(row) + t + 1, traj.actions[t]));
    }
    if (need_flow) {
      out.log_flow[i].reserve(steps + 1);
      for (int t = 0; t < steps; ++t)
        out.log_flow[i].push_back(tape.pick2(flows, static_cast<int>(row) + t, 0));
      out.log_flow[i].push_back(tape.constant(flow_clamp(mode, traj.terminal_energy)));
    }
    row += traj.states.size();
  }
  return out;
}

struct TransitionNodes {
  Tape::NodeId log_flow_s;
  Tape::NodeId log_pf;
  Tape::NodeId log_flow_s2;
  Tape::NodeId log_pb;
};

/// Evaluates one transition (s -a-> s2), validating it against the
/// environment. A terminal s2 gets the clamped flow constant.
TransitionNodes eval_transition(Tape& tape, PolicyModel& model, const Environment& env,
                                const State& s, int action, const State& s2, FlowMode mode,
                                std::optional<double> terminal_energy) {
  const auto kids = env.children(s);
  bool valid = false;
  for (const auto& e : kids)
    if (e.action == action && e.state == s2) {
      valid = true;
      break;
    }
  if (!valid)
    throw std::invalid_argument("loss: (" + env.key(s) + ", action " + std::to_string(action) +
                                ") is not a valid transition to " + env.key(s2));

  const int enc_dim = env.encoding_dim();
  diff::Tensor encodings = diff::Tensor::zeros({2, enc_dim});
  env.encode(s, std::span<double>(encodings.data).subspan(0, enc_dim));
  env.encode(s2, std::span<double>(encodings.data).subspan(enc_dim, enc_dim));

  std::vector<std::int32_t> fwd_mask;
  for (const auto& e : kids) fwd_mask.push_back(e.action);
  const bool s2_terminal = env.is_terminal(s2);

  const Tape::NodeId features = model.trunk.forward(tape, tape.input(std::move(encodings)));
  const Tape::NodeId fwd_logp = tape.row_masked_log_softmax(
      model.forward_head.forward(tape, features), {fwd_mask, {}});
  const Tape::NodeId bwd_logp = tape.row_masked_log_softmax(
      model.backward_head.forward(tape, features), {{}, parent_actions(env, s2)});
  const Tape::NodeId flows = model.flow_head.forward(tape, features);

  TransitionNodes out;
  out.log_pf = tape.pick2(fwd_logp, 0, action);
  out.log_pb = tape.pick2(bwd_logp, 1, action);
  out.log_flow_s = tape.pick2(flows, 0, 0);
  if (s2_terminal) {
    if (mode == FlowMode::kPlain && !terminal_energy.has_value())
      throw std::invalid_argument("loss: terminal transition requires the terminal energy");
    out.log_flow_s2 = tape.constant(flow_clamp(mode, terminal_energy.value_or(0.0)));
  } else {
    out.log_flow_s2 = tape.pick2(flows, 1, 0);
  }
  return out;
}

/// Sub-trajectory weights proportional to lambda^length, normalized over all
/// sub-trajectories of one trajectory.
std::vector<double> subtb_weights(int steps, double lambda) {
  if (lambda <= 0.0 || lambda > 1.0)
    throw std::invalid_argument("subtb: lambda must be in (0, 1]");
  double norm = 0.0;
  for (int len = 1; len <= steps; ++len)
    norm += static_cast<double>(steps - len + 1) * std::pow(lambda, len);
  std::vector<double> w(steps + 1, 0.0);
  for (int len = 1; len <= steps; ++len) w[len] = std::pow(lambda, len) / norm;
  return w;
}

Tape::NodeId subtb_trajectory_loss(Tape& tape, const TermNodes& terms, std::size_t i,
                                   double lambda, const std::vector<double>* bonus) {
  const int steps = static_cast<int>(terms.log_pf[i].size());
  const auto weights = subtb_weights(steps, lambda);

  std::vector<double> bonus_prefix(steps + 1, 0.0);
  if (bonus != nullptr)
    for (int t = 0; t < steps; ++t) bonus_prefix[t + 1] = bonus_prefix[t] + (*bonus)[t];

  std::vector<std::pair<double, Tape::NodeId>> weighted_squares;
  weighted_squares.reserve(static_cast<std::size_t>(steps) * (steps + 1) / 2);
  for (int u = 0; u < steps; ++u) {
    for (int v = u + 1; v <= steps; ++v) {
      std::vector<std::pair<double, Tape::NodeId>> residual_terms;
      residual_terms.reserve(2 * (v - u) + 2);
      residual_terms.emplace_back(1.0, terms.log_flow[i][u]);
      residual_terms.emplace_back(-1.0, terms.log_flow[i][v]);
      for (int t = u; t < v; ++t) {
        residual_terms.emplace_back(1.0, terms.log_pf[i][t]);
        residual_terms.emplace_back(-1.0, terms.log_pb[i][t]);
      }
      const Tape::NodeId r =
          tape.affine_combine(residual_terms, bonus_prefix[v] - bonus_prefix[u]);
      weighted_squares.emplace_back(weights[v - u], tape.square(r));
    }
  }
  return tape.affine_combine(weighted_squares, 0.0);
}

}  // namespace

// ---------------------------------------------------------------------------
// Batched objectives
// ---------------------------------------------------------------------------

Tape::NodeId db_family_batch_loss(Tape& tape, PolicyModel& model, const Environment& env,
                                  std::span<const Trajectory> batch, FlowMode mode,
                                  const std::vector<std::vector<double>>* bonus) {
  if (batch.empty()) throw std::invalid_argument("db loss: empty batch");
  const TermNodes terms = eval_batch_terms(tape, model, env, batch, mode, /*need_flow=*/true);
  std::vector<Tape::NodeId> squares;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const int steps = batch[i].length();
    for (int t = 0; t < steps; ++t) {
      const double b = bonus != nullptr ? (*bonus)[i][t] : 0.0;
      squares.push_back(transition_residual(tape, terms.log_flow[i][t], terms.log_pf[i][t],
                                            terms.log_flow[i][t + 1], terms.log_pb[i][t], b));
    }
  }
  return tape.mean_scalars(squares);
}

Tape::NodeId subtb_family_batch_loss(Tape& tape, PolicyModel& model, const Environment& env,
                                     std::span<const Trajectory> batch, double subtb_lambda,
                                     FlowMode mode, const std::vector<std::vector<double>>* bonus) {
  if (batch.empty()) throw std::invalid_argument("subtb loss: empty batch");
  const TermNodes terms = eval_batch_terms(tape, model, env, batch, mode, /*need_flow=*/true);
  std::vector<Tape::NodeId> per_traj;
  per_traj.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i)
    per_traj.push_back(subtb_trajectory_loss(tape, terms, i, subtb_lambda,
                                             bonus != nullptr ? &(*bonus)[i] : nullptr));
  return tape.mean_scalars(per_traj);
}

Tape::NodeId tb_batch_loss(Tape& tape, PolicyModel& model, const Environment& env,
                           std::span<const Trajectory> batch) {
  if (batch.empty()) throw std::invalid_argument("tb loss: empty batch");
  const TermNodes terms = eval_batch_terms(tape, model, env, batch, FlowMode::kPlain,
                                           /*need_flow=*/false);
  const Tape::NodeId log_z = tape.param(&model.log_z);
  std::vector<Tape::NodeId> squares;
  squares.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    std::vector<std::pair<double, Tape::NodeId>> residual_terms;
    residual_terms.emplace_back(1.0, log_z);
    for (const Tape::NodeId n : terms.log_pf[i]) residual_terms.emplace_back(1.0, n);
    for (const Tape::NodeId n : terms.log_pb[i]) residual_terms.emplace_back(-1.0, n);
    const Tape::NodeId r = tape.affine_combine(residual_terms, batch[i].terminal_energy);
    squares.push_back(tape.square(r));
  }
  return tape.mean_scalars(squares);
}

// ---------------------------------------------------------------------------
// Single-transition / single-trajectory objectives
// ---------------------------------------------------------------------------

Tape::NodeId db_loss(Tape& tape, PolicyModel& model, const Environment& env, const State& s,
                     int action, const State& s2, std::optional<double> terminal_energy) {
  const auto nodes =
      eval_transition(tape, model, env, s, action, s2, FlowMode::kPlain, terminal_energy);
  return transition_residual(tape, nodes.log_flow_s, nodes.log_pf, nodes.log_flow_s2,
                             nodes.log_pb, 0.0);
}

Tape::NodeId tb_loss(Tape& tape, PolicyModel& model, const Environment& env,
                     const Trajectory& traj) {
  validate_trajectory(env, traj);
  return tb_batch_loss(tape, model, env, std::span<const Trajectory>(&traj, 1));
}

Tape::NodeId subtb_loss(Tape& tape, PolicyModel& model, const Environment& env,
                        const Trajectory& traj, double subtb_lambda) {
  validate_trajectory(env, traj);
  return subtb_family_batch_loss(tape, model, env, std::span<const Trajectory>(&traj, 1),
                                 subtb_lambda, FlowMode::kPlain);
}

std::vector<double> trajectory_energies(const Environment& env, const Trajectory& traj,
                                        EnergyOracle& oracle, EnergyMemo* memo) {
  std::vector<double> energies;
  energies.reserve(traj.states.size());
  for (const State& s : traj.states) {
    if (memo != nullptr) {
      std::string k = env.key(s);
      if (s.terminal) k += "#t";
      auto it = memo->cache.find(k);
      if (it != memo->cache.end()) {
        energies.push_back(it->second);
        continue;
      }
      const double e = oracle.intermediate_energy(s);
      memo->cache.emplace(std::move(k), e);
      energies.push_back(e);
    } else {
      energies.push_back(oracle.intermediate_energy(s));
    }
  }
  return energies;
}

namespace {

double memoized_intermediate(const Environment& env, const State& s, EnergyOracle& oracle,
                             EnergyMemo* memo) {
  if (memo == nullptr) return oracle.intermediate_energy(s);
  std::string k = env.key(s);
  if (s.terminal) k += "#t";
  auto it = memo->cache.find(k);
  if (it != memo->cache.end()) return it->second;
  const double e = oracle.intermediate_energy(s);
  memo->cache.emplace(std::move(k), e);
  return e;
}

}  // namespace

Tape::NodeId fl_db_loss(Tape& tape, PolicyModel& model, const Environment& env, const State& s,
                        int action, const State& s2, EnergyOracle& oracle, EnergyMemo* memo) {
  const double gain = memoized_intermediate(env, s2, oracle, memo) -
                      memoized_intermediate(env, s, oracle, memo);
  const auto nodes =
      eval_transition(tape, model, env, s, action, s2, FlowMode::kReparam, std::nullopt);
  return transition_residual(tape, nodes.log_flow_s, nodes.log_pf, nodes.log_flow_s2,
                             nodes.log_pb, gain);
}

Tape::NodeId fl_subtb_loss(Tape& tape, PolicyModel& model, const Environment& env,
                           const Trajectory& traj, EnergyOracle& oracle, double subtb_lambda,
                           EnergyMemo* memo) {
  validate_trajectory(env, traj);
  const auto energies = trajectory_energies(env, traj, oracle, memo);
  std::vector<std::vector<double>> bonus(1);
  bonus[0].reserve(traj.length());
  for (int t = 0; t < traj.length(); ++t) bonus[0].push_back(energies[t + 1] - energies[t]);
  return subtb_family_batch_loss(tape, model, env, std::span<const Trajectory>(&traj, 1),
                                 subtb_lambda, FlowMode::kReparam, &bonus);
}

Tape::NodeId led_db_loss(Tape& tape, PolicyModel& model, const Environment& env, const State& s,
                         int action, const State& s2, double potential) {
  const auto nodes =
      eval_transition(tape, model, env, s, action, s2, FlowMode::kReparam, std::nullopt);
  return transition_residual(tape, nodes.log_flow_s, nodes.log_pf, nodes.log_flow_s2,
                             nodes.log_pb, potential);
}

Tape::NodeId led_subtb_loss(Tape& tape, PolicyModel& model, const Environment& env,
                            const Trajectory& traj, std::span<const double> potentials,
                            double subtb_lambda) {
  validate_trajectory(env, traj);
  if (static_cast<int>(potentials.size()) != traj.length())
    throw std::invalid_argument("led_subtb_loss: one potential per transition required");
  std::vector<std::vector<double>> bonus(1);
  bonus[0].assign(potentials.begin(), potentials.end());
  return subtb_family_batch_loss(tape, model, env, std::span<const Trajectory>(&traj, 1),
                                 subtb_lambda, FlowMode::kReparam, &bonus);
}

// ---------------------------------------------------------------------------
// Exact terminal distribution
// ---------------------------------------------------------------------------

std::map<std::string, double> exact_policy_distribution(const EnvSpec& spec,
                                                        const PolicyModel& model,
                                                        double max_objects) {
  const Environment& env = *spec.env;
  const double est = env.terminal_space_size();
  if (est > max_objects)
    throw ConfigError(env.name() + ": terminal space too large to enumerate (about " +
                      std::to_string(est) + " objects, guard " + std::to_string(max_objects) +
                      ")");

  std::map<int, std::map<std::string, std::pair<State, double>>> levels;
  std::map<std::string, double> terminal_mass;

  const State s0 = env.initial_state();
  levels[env.rank(s0)].emplace(env.key(s0), std::make_pair(s0, 1.0));
  while (!levels.empty()) {
    auto level_it = levels.begin();
    const auto level = std::move(level_it->second);
    levels.erase(level_it);
    for (const auto& [k, entry] : level) {
      const auto& [s, mass] = entry;
      const auto kids = env.children(s);
      const auto probs = forward_action_probs(model, env, s, kids);
      for (std::size_t i = 0; i < kids.size(); ++i) {
        const double m = mass * probs[i];
        if (env.is_terminal(kids[i].state)) {
          terminal_mass[env.key(kids[i].state)] += m;
        } else {
          auto& slot = levels[env.rank(kids[i].state)];
          auto it = slot.find(env.key(kids[i].state));
          if (it == slot.end())
            slot.emplace(env.key(kids[i].state), std::make_pair(kids[i].state, m));
          else
            it->second.second += m;
        }
      }
    }
  }
  return terminal_mass;
}

}  // namespace gfn
