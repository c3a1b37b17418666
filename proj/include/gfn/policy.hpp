#pragma once

#include <vector>

#include "gfn/env.hpp"
#include "gfn/mlp.hpp"

namespace gfn {

/// Shared-trunk policy network: one feature extractor feeding a forward-logit
/// head, a backward-logit head and a scalar flow head, plus a learnable
/// log-partition scalar used by the trajectory-level objective. Under the
/// reparameterized objectives the flow head is read as the adjusted flow.
struct PolicyModel {
  diff::Mlp trunk;
  diff::Mlp forward_head;
  diff::Mlp backward_head;
  diff::Mlp flow_head;
  diff::Tensor log_z = diff::Tensor::scalar(0.0);

  static PolicyModel make(int enc_dim, const std::vector<int>& hidden, int action_count,
                          diff::SeededRng& rng,
                          diff::Activation act = diff::Activation::kLeakyRelu);

  std::vector<diff::Tensor*> params();
  std::int64_t param_count() const;
};

/// Epsilon-uniform mixture over valid actions during rollout.
struct ExplorationPolicy {
  double epsilon = 0.0;

  ExplorationPolicy() = default;
  explicit ExplorationPolicy(double eps);
};

/// Forward-policy probabilities over the given child edges (masked softmax,
/// no exploration), aligned with the edge order.
std::vector<double> forward_action_probs(const PolicyModel& model, const envs::Environment& env,
                                         const envs::State& s, const std::vector<envs::Edge>& kids);

}  // namespace gfn
