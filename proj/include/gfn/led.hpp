#pragma once

#include <deque>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gfn/adam.hpp"
#include "gfn/env.hpp"
#include "gfn/mlp.hpp"
#include "gfn/tape.hpp"

namespace gfn::led {

using diff::Tape;

/// Learnable transition potential: a net over (state encoding, one-hot
/// action) whose trajectory sum approximates the terminal energy.
struct PotentialModel {
  diff::Mlp net;
  double learning_rate = 0.001;

  static PotentialModel make(const envs::Environment& env, const std::vector<int>& hidden,
                             diff::SeededRng& rng,
                             diff::Activation act = diff::Activation::kLeakyRelu);

  std::vector<diff::Tensor*> params() { return net.params(); }
};

enum class Redistribution { kUniformError, kLedStarCorrection, kNone };

Redistribution parse_redistribution(const std::string& name);
std::string redistribution_name(Redistribution r);

enum class PotentialSource { kLeastSquares, kProxyDiff };

PotentialSource parse_potential_source(const std::string& name);
std::string potential_source_name(PotentialSource s);

/// Hyper-parameters of the decomposition learner (inner loop of each round).
struct DecompositionConfig {
  double keep_prob = 0.9;
  int inner_steps = 8;
  int batch_size = 32;
  Redistribution redistribution = Redistribution::kUniformError;
  PotentialSource source = PotentialSource::kLeastSquares;
  double learning_rate = 0.001;
  std::size_t buffer_capacity = 10000;

  void validate() const;
};

/// FIFO ring of trajectories with uniform sampling.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(envs::Trajectory traj);
  std::size_t size() const { return storage_.size(); }
  bool empty() const { return storage_.empty(); }
  std::size_t capacity() const { return capacity_; }
  const envs::Trajectory& at(std::size_t i) const { return storage_[i]; }
  const envs::Trajectory& sample(diff::SeededRng& rng) const;

 private:
  std::size_t capacity_;
  std::deque<envs::Trajectory> storage_;
};

/// Net input for the transition (s, a): state encoding concatenated with the
/// one-hot action.
diff::Tensor potential_input(const envs::Environment& env, const envs::State& s, int action);

/// Raw per-transition potentials of a trajectory (no tape).
std::vector<double> raw_potentials(const PotentialModel& model, const envs::Environment& env,
                                   const envs::Trajectory& traj);

/// Single-draw Monte-Carlo estimate of the dropout-regularized least-squares
/// decomposition loss
///   E_z [ (E(x)/T - (1/C) sum_t z_t phi_t)^2 ],  z ~ Bern(keep_prob),
/// rejecting and redrawing all-zero masks.
Tape::NodeId ls_loss(Tape& tape, PotentialModel& model, const envs::Environment& env,
                     const envs::Trajectory& traj, double keep_prob, diff::SeededRng& mask_rng);

/// Exact expectation over all masks with C > 0 (renormalized Bernoulli
/// weights). Guarded to T <= 16.
double ls_loss_exact(const PotentialModel& model, const envs::Environment& env,
                     const envs::Trajectory& traj, double keep_prob);

/// Inner decomposition loop: inner_steps Adam updates, each on the mean
/// ls_loss over a fresh uniform batch from the buffer. Returns the mean batch
/// loss, or nothing when the buffer is empty (warned and skipped).
std::optional<double> train_potentials(PotentialModel& model, const envs::Environment& env,
                                       const ReplayBuffer& buffer,
                                       const DecompositionConfig& config, diff::AdamState& opt,
                                       diff::SeededRng& mask_rng, diff::SeededRng& sample_rng);

/// Applies the configured error correction to raw potentials so they can be
/// used as local credits:
///   kUniformError spreads E(x) - sum(phi) equally over transitions,
///   kLedStarCorrection concentrates it on the final transition,
///   kNone returns the raw values.
std::vector<double> redistribute(std::vector<double> raw, double terminal_energy,
                                 Redistribution mode);

/// Raw potentials of the trajectory followed by redistribution.
std::vector<double> assign_potentials(const PotentialModel& model, const envs::Environment& env,
                                      const envs::Trajectory& traj, Redistribution mode);

/// Telescoping potentials from a terminal-energy proxy over states:
/// phi_t = proxy(s_{t+1}) - proxy(s_t).
std::vector<double> proxy_difference_potentials(const diff::Mlp& proxy,
                                                const envs::Environment& env,
                                                const envs::Trajectory& traj);

/// Squared-error regression of the stored terminal energies on terminal-state
/// encodings; same loop shape as train_potentials.
std::optional<double> train_proxy(diff::Mlp& proxy, const envs::Environment& env,
                                  const ReplayBuffer& buffer, const DecompositionConfig& config,
                                  diff::AdamState& opt, diff::SeededRng& sample_rng);

}  // namespace gfn::led
