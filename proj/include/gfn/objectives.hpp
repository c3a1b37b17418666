#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "gfn/env.hpp"
#include "gfn/policy.hpp"
#include "gfn/tape.hpp"

namespace gfn {

using diff::Tape;

enum class ObjectiveKind { kDb, kTb, kSubTb, kFlDb, kFlSubTb, kLedDb, kLedSubTb };

ObjectiveKind parse_objective(const std::string& name);
std::string objective_name(ObjectiveKind kind);
bool objective_is_led(ObjectiveKind kind);
bool objective_is_fl(ObjectiveKind kind);
bool objective_is_subtb_family(ObjectiveKind kind);

/// How the flow head is read in DB/subTB-style residuals: kPlain clamps the
/// terminal flow to -E(x); kReparam (energy-gain and potential objectives)
/// clamps it to 0.
enum class FlowMode { kPlain, kReparam };

/// Batch-level memo of intermediate energies keyed by canonical state key.
struct EnergyMemo {
  std::unordered_map<std::string, double> cache;
};

/// Rolls out one episode from the initial state; the terminal energy is
/// evaluated exactly once through the oracle.
envs::Trajectory sample_trajectory(const envs::EnvSpec& spec, const PolicyModel& model,
                                   const ExplorationPolicy& exploration, diff::SeededRng& rng,
                                   envs::EnergyOracle& oracle);

// ---------------------------------------------------------------------------
// Residual seam shared by every transition-level objective:
//   r = log_flow_s + log_pf + bonus - log_flow_s2 - log_pb,    loss = r^2.
// ---------------------------------------------------------------------------
Tape::NodeId transition_residual(Tape& tape, Tape::NodeId log_flow_s, Tape::NodeId log_pf,
                                 Tape::NodeId log_flow_s2, Tape::NodeId log_pb, double bonus);

// Single-transition / single-trajectory objectives.
Tape::NodeId db_loss(Tape& tape, PolicyModel& model, const envs::Environment& env,
                     const envs::State& s, int action, const envs::State& s2,
                     std::optional<double> terminal_energy = std::nullopt);
Tape::NodeId tb_loss(Tape& tape, PolicyModel& model, const envs::Environment& env,
                     const envs::Trajectory& traj);
Tape::NodeId subtb_loss(Tape& tape, PolicyModel& model, const envs::Environment& env,
                        const envs::Trajectory& traj, double subtb_lambda);
Tape::NodeId fl_db_loss(Tape& tape, PolicyModel& model, const envs::Environment& env,
                        const envs::State& s, int action, const envs::State& s2,
                        envs::EnergyOracle& oracle, EnergyMemo* memo = nullptr);
Tape::NodeId fl_subtb_loss(Tape& tape, PolicyModel& model, const envs::Environment& env,
                           const envs::Trajectory& traj, envs::EnergyOracle& oracle,
                           double subtb_lambda, EnergyMemo* memo = nullptr);
Tape::NodeId led_db_loss(Tape& tape, PolicyModel& model, const envs::Environment& env,
                         const envs::State& s, int action, const envs::State& s2,
                         double potential);
Tape::NodeId led_subtb_loss(Tape& tape, PolicyModel& model, const envs::Environment& env,
                            const envs::Trajectory& traj, std::span<const double> potentials,
                            double subtb_lambda);

// Batched objectives used by the training loop. bonus, when given, holds one
// constant per transition of each trajectory (energy gains or assigned
// potentials) added into every residual that covers the transition.
Tape::NodeId db_family_batch_loss(Tape& tape, PolicyModel& model, const envs::Environment& env,
                                  std::span<const envs::Trajectory> batch, FlowMode mode,
                                  const std::vector<std::vector<double>>* bonus = nullptr);
Tape::NodeId subtb_family_batch_loss(Tape& tape, PolicyModel& model, const envs::Environment& env,
                                     std::span<const envs::Trajectory> batch, double subtb_lambda,
                                     FlowMode mode,
                                     const std::vector<std::vector<double>>* bonus = nullptr);
Tape::NodeId tb_batch_loss(Tape& tape, PolicyModel& model, const envs::Environment& env,
                           std::span<const envs::Trajectory> batch);

/// Per-state intermediate energies E(s_0..s_T) for one trajectory, through
/// the counted oracle (one call per state unless memoized).
std::vector<double> trajectory_energies(const envs::Environment& env, const envs::Trajectory& traj,
                                        envs::EnergyOracle& oracle, EnergyMemo* memo);

/// Exact terminal distribution induced by the forward policy: a dynamic
/// program that pushes unit mass from the initial state through the masked
/// softmax. Keys are canonical object keys; values sum to 1.
std::map<std::string, double> exact_policy_distribution(const envs::EnvSpec& spec,
                                                        const PolicyModel& model,
                                                        double max_objects = 1e6);

}  // namespace gfn
