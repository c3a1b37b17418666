#include "gfn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

#include "gfn/objectives.hpp"

namespace gfn::metrics {

using envs::EnvSpec;
using envs::Trajectory;

void TopKTracker::offer(const std::string& key, double reward) {
  auto it = best.find(key);
  if (it != best.end()) {
    it->second = std::max(it->second, reward);
    return;
  }
  if (static_cast<int>(best.size()) < k) {
    best.emplace(key, reward);
    return;
  }
  // Evict the minimum (ties broken by key) only for a strictly better entry.
  auto min_it = best.begin();
  for (auto cur = best.begin(); cur != best.end(); ++cur)
    if (cur->second < min_it->second) min_it = cur;
  if (reward > min_it->second) {
    best.erase(min_it);
    best.emplace(key, reward);
  }
}

double TopKTracker::mean() const {
  if (best.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& [key, r] : best) sum += r;
  return sum / static_cast<double>(best.size());
}

void record_round(ModeTracker& modes, TopKTracker& topk, const envs::Environment& env,
                  std::span<const Trajectory> batch) {
  for (const Trajectory& traj : batch) {
    const std::string key = env.key(traj.states.back());
    if (traj.terminal_reward >= modes.threshold) modes.discovered.insert(key);
    topk.offer(key, traj.terminal_reward);
  }
  modes.history.push_back(modes.count());
}

namespace {

FitReport fit_against_target(const EnvSpec& spec, const std::map<std::string, double>& empirical,
                             std::int64_t sample_count) {
  const auto target = envs::enumerate_terminals(spec);
  double l1 = 0.0;
  double mean_hat = 0.0;
  double mean_star = 0.0;
  double covered = 0.0;
  for (const auto& entry : target) {
    const auto it = empirical.find(entry.key);
    const double p_hat = it == empirical.end() ? 0.0 : it->second;
    covered += p_hat;
    l1 += std::fabs(p_hat - entry.probability);
    mean_hat += p_hat * entry.expected_reward;
    mean_star += entry.probability * entry.expected_reward;
  }
  // Empirical mass on keys outside the enumerated space would indicate an
  // environment bug; it still contributes to l1.
  l1 += std::max(0.0, 1.0 - covered);
  FitReport report;
  report.l1_distance = l1;
  report.relative_mean_error = std::fabs(mean_hat - mean_star) / mean_star;
  report.sample_count = sample_count;
  return report;
}

}  // namespace

FitReport goodness_of_fit(const EnvSpec& spec, const PolicyModel& model, std::int64_t n_samples,
                          std::uint64_t eval_seed) {
  if (n_samples < 1) throw std::invalid_argument("goodness_of_fit: need at least one sample");
  diff::SeededRng rng(eval_seed);
  envs::EnergyOracle eval_oracle(spec, rng.fork(1).seed());
  const ExplorationPolicy no_exploration(0.0);
  std::unordered_map<std::string, std::int64_t> counts;
  for (std::int64_t i = 0; i < n_samples; ++i) {
    const Trajectory traj = sample_trajectory(spec, model, no_exploration, rng, eval_oracle);
    counts[spec.env->key(traj.states.back())] += 1;
  }
  std::map<std::string, double> empirical;
  for (const auto& [key, c] : counts)
    empirical[key] = static_cast<double>(c) / static_cast<double>(n_samples);
  return fit_against_target(spec, empirical, n_samples);
}

FitReport goodness_of_fit_exact(const EnvSpec& spec, const PolicyModel& model) {
  return fit_against_target(spec, exact_policy_distribution(spec, model), 0);
}

std::pair<std::int64_t, std::int64_t> oracle_report(const envs::EnergyOracle& oracle) {
  return {oracle.terminal_calls(), oracle.intermediate_calls()};
}

}  // namespace gfn::metrics
