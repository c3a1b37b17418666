#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gfn/env.hpp"
#include "gfn/policy.hpp"

namespace gfn::metrics {

/// Counts distinct objects whose realized reward clears the threshold; each
/// object is counted at most once and the count never decreases.
struct ModeTracker {
  double threshold = 0.0;
  std::set<std::string> discovered;
  std::vector<std::int64_t> history;

  explicit ModeTracker(double thr) : threshold(thr) {}
  std::int64_t count() const { return static_cast<std::int64_t>(discovered.size()); }
};

/// Best unique (object, reward) pairs seen so far, capped at k entries; a
/// re-seen key keeps its maximum reward.
struct TopKTracker {
  int k = 100;
  std::map<std::string, double> best;

  explicit TopKTracker(int k_) : k(k_) {}
  void offer(const std::string& key, double reward);
  double mean() const;
  std::size_t size() const { return best.size(); }
};

/// Distance between a generative distribution and the exact target.
struct FitReport {
  double l1_distance = 0.0;
  double relative_mean_error = 0.0;
  std::int64_t sample_count = 0;
};

/// Folds one round's batch into the trackers and appends to the mode history.
void record_round(ModeTracker& modes, TopKTracker& topk, const envs::Environment& env,
                  std::span<const envs::Trajectory> batch);

/// Goodness of fit from n exploration-free rollouts against the enumerated
/// target. Uses a private oracle, so training counters are untouched.
FitReport goodness_of_fit(const envs::EnvSpec& spec, const PolicyModel& model,
                          std::int64_t n_samples, std::uint64_t eval_seed);

/// Exact variant: the policy's marginal terminal distribution instead of
/// samples.
FitReport goodness_of_fit_exact(const envs::EnvSpec& spec, const PolicyModel& model);

std::pair<std::int64_t, std::int64_t> oracle_report(const envs::EnergyOracle& oracle);

}  // namespace gfn::metrics
