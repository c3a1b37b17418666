#include "gfn/policy.hpp"

#include <cmath>
#include <stdexcept>

namespace gfn {

PolicyModel PolicyModel::make(int enc_dim, const std::vector<int>& hidden, int action_count,
                              diff::SeededRng& rng, diff::Activation act) {
  if (hidden.empty()) throw std::invalid_argument("PolicyModel: need at least one hidden layer");
  PolicyModel m;
  std::vector<int> trunk_sizes;
  trunk_sizes.push_back(enc_dim);
  trunk_sizes.insert(trunk_sizes.end(), hidden.begin(), hidden.end());
  m.trunk = diff::Mlp::make(trunk_sizes, act, rng, /*activate_output=*/true);
  const int features = hidden.back();
  m.forward_head = diff::Mlp::make({features, action_count}, diff::Activation::kIdentity, rng);
  m.backward_head = diff::Mlp::make({features, action_count}, diff::Activation::kIdentity, rng);
  m.flow_head = diff::Mlp::make({features, 1}, diff::Activation::kIdentity, rng);
  m.log_z = diff::Tensor::scalar(0.0);
  return m;
}

std::vector<diff::Tensor*> PolicyModel::params() {
  std::vector<diff::Tensor*> ps;
  for (auto* m : {&trunk, &forward_head, &backward_head, &flow_head}) {
    auto sub = m->params();
    ps.insert(ps.end(), sub.begin(), sub.end());
  }
  ps.push_back(&log_z);
  return ps;
}

std::int64_t PolicyModel::param_count() const {
  return trunk.param_count() + forward_head.param_count() + backward_head.param_count() +
         flow_head.param_count() + 1;
}

ExplorationPolicy::ExplorationPolicy(double eps) : epsilon(eps) {
  if (eps < 0.0 || eps > 1.0)
    throw std::invalid_argument("ExplorationPolicy: epsilon outside [0, 1]");
}

std::vector<double> forward_action_probs(const PolicyModel& model, const envs::Environment& env,
                                         const envs::State& s,
                                         const std::vector<envs::Edge>& kids) {
  if (kids.empty()) throw std::invalid_argument("forward_action_probs: no valid actions");
  diff::Tensor enc = diff::Tensor::zeros({env.encoding_dim()});
  env.encode(s, enc.data);
  const diff::Tensor features = model.trunk.eval(enc);
  const diff::Tensor logits = model.forward_head.eval(features);

  double mx = logits.data[kids[0].action];
  for (const auto& e : kids) mx = std::max(mx, logits.data[e.action]);
  double sum = 0.0;
  std::vector<double> probs(kids.size());
  for (std::size_t i = 0; i < kids.size(); ++i) {
    probs[i] = std::exp(logits.data[kids[i].action] - mx);
    sum += probs[i];
  }
  for (auto& p : probs) p /= sum;
  return probs;
}

}  // namespace gfn
