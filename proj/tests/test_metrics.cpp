#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "env_fixtures.hpp"
#include "gfn/metrics.hpp"
#include "gfn/objectives.hpp"

using namespace gfn;
using diff::SeededRng;
using envs::EnvSpec;
using envs::Trajectory;

namespace {

Trajectory leaf_trajectory(const envs::Environment& env, int leaf, double reward) {
  Trajectory t;
  t.states.push_back(env.initial_state());
  t.actions.push_back(leaf);
  t.states.push_back(env.children(t.states[0])[leaf].state);
  t.terminal_reward = reward;
  t.terminal_energy = -std::log(reward);
  return t;
}

PolicyModel zeroed_model(const envs::Environment& env) {
  SeededRng rng(0);
  PolicyModel m = PolicyModel::make(env.encoding_dim(), {4}, env.action_count(), rng);
  for (auto* p : m.params()) p->data.assign(p->data.size(), 0.0);
  return m;
}

}  // namespace

TEST_CASE("mode and top-k tracking") {
  const EnvSpec spec = testenv::star_env({1, 1, 1, 1, 1});
  const auto& env = *spec.env;
  metrics::ModeTracker modes(30.0);
  metrics::TopKTracker topk(2);

  SUBCASE("threshold rule counts rewards at or above the bar") {
    std::vector<Trajectory> batch = {leaf_trajectory(env, 0, 31.0), leaf_trajectory(env, 1, 30.0),
                                     leaf_trajectory(env, 2, 29.0)};
    metrics::record_round(modes, topk, env, batch);
    CHECK(modes.count() == 2);
    CHECK(modes.history.back() == 2);
  }

  SUBCASE("re-seen objects never increment the count; top-k keeps the max") {
    std::vector<Trajectory> batch = {leaf_trajectory(env, 0, 31.0)};
    metrics::record_round(modes, topk, env, batch);
    CHECK(modes.count() == 1);
    batch = {leaf_trajectory(env, 0, 35.0)};
    metrics::record_round(modes, topk, env, batch);
    CHECK(modes.count() == 1);
    CHECK(topk.best.at("0") == doctest::Approx(35.0));
  }

  SUBCASE("an empty batch changes nothing") {
    metrics::record_round(modes, topk, env, {});
    CHECK(modes.count() == 0);
    CHECK(topk.size() == 0);
  }

  SUBCASE("counts and means are invariant to within-batch order") {
    std::vector<Trajectory> batch = {leaf_trajectory(env, 0, 31.0), leaf_trajectory(env, 1, 33.0),
                                     leaf_trajectory(env, 2, 29.0), leaf_trajectory(env, 3, 50.0),
                                     leaf_trajectory(env, 4, 30.0)};
    metrics::ModeTracker m1(30.0), m2(30.0);
    metrics::TopKTracker k1(2), k2(2);
    metrics::record_round(m1, k1, env, batch);
    std::reverse(batch.begin(), batch.end());
    metrics::record_round(m2, k2, env, batch);
    CHECK(m1.count() == m2.count());
    CHECK(k1.mean() == doctest::Approx(k2.mean()));
  }

  SUBCASE("top-k evicts the minimum only for strictly better entries") {
    metrics::TopKTracker k(2);
    k.offer("a", 1.0);
    k.offer("b", 2.0);
    k.offer("c", 0.5);  // rejected
    CHECK(k.size() == 2);
    CHECK(k.mean() == doctest::Approx(1.5));
    k.offer("d", 3.0);  // evicts a
    CHECK(k.mean() == doctest::Approx(2.5));
    CHECK_FALSE(k.best.contains("a"));
  }

  SUBCASE("mode count is monotone over rounds") {
    SeededRng rng(3);
    metrics::ModeTracker m(30.0);
    metrics::TopKTracker k(3);
    for (int round = 0; round < 50; ++round) {
      std::vector<Trajectory> batch;
      for (int b = 0; b < 4; ++b)
        batch.push_back(leaf_trajectory(env, static_cast<int>(rng.uniform_int(5)),
                                        rng.uniform(0.0, 60.0)));
      metrics::record_round(m, k, env, batch);
    }
    for (std::size_t i = 1; i < m.history.size(); ++i) CHECK(m.history[i] >= m.history[i - 1]);
  }
}

TEST_CASE("goodness of fit") {
  SUBCASE("a policy matching the target has zero error in the exact variant") {
    // Equal rewards make the target uniform; a zeroed model is uniform too.
    const EnvSpec spec = testenv::star_env({2.0, 2.0, 2.0, 2.0});
    const PolicyModel model = zeroed_model(*spec.env);
    const auto fit = metrics::goodness_of_fit_exact(spec, model);
    CHECK(fit.l1_distance < 1e-12);
    CHECK(fit.relative_mean_error < 1e-12);
  }

  SUBCASE("uniform policy against the tiny set target, by hand") {
    const EnvSpec spec = envs::set_env(4, 2, 123);
    const PolicyModel model = zeroed_model(*spec.env);

    SeededRng util_rng(123);
    std::vector<double> u;
    for (int i = 0; i < 4; ++i) u.push_back(util_rng.uniform(0.01, 1.0));
    std::vector<double> rewards;
    double z = 0.0;
    for (int i = 0; i < 4; ++i)
      for (int j = i + 1; j < 4; ++j) {
        rewards.push_back((u[i] + u[j]) / 2.0);
        z += rewards.back();
      }
    double expected_l1 = 0.0;
    for (double r : rewards) expected_l1 += std::fabs(1.0 / 6.0 - r / z);

    const auto fit = metrics::goodness_of_fit_exact(spec, model);
    CHECK(fit.l1_distance == doctest::Approx(expected_l1).epsilon(1e-9));
  }

  SUBCASE("sampled variant concentrates around the target") {
    const EnvSpec spec = testenv::star_env({1.0, 1.0, 1.0, 1.0, 1.0, 1.0});
    const PolicyModel model = zeroed_model(*spec.env);
    const auto fit = metrics::goodness_of_fit(spec, model, 1000000, 7);
    CHECK(fit.l1_distance < 0.02);
    CHECK(fit.sample_count == 1000000);
  }

  SUBCASE("larger samples get closer to the exact value (9 of 10 seeds)") {
    // 10-object environment with a non-uniform policy.
    const EnvSpec spec =
        testenv::star_env({1, 2, 3, 4, 5, 6, 7, 8, 9, 10});
    SeededRng rng(11);
    const PolicyModel model =
        PolicyModel::make(spec.env->encoding_dim(), {8}, spec.env->action_count(), rng);
    const double exact_l1 = metrics::goodness_of_fit_exact(spec, model).l1_distance;
    int closer = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const double small =
          std::fabs(metrics::goodness_of_fit(spec, model, 10000, seed).l1_distance - exact_l1);
      const double large =
          std::fabs(metrics::goodness_of_fit(spec, model, 1000000, seed).l1_distance - exact_l1);
      if (large <= small) ++closer;
    }
    CHECK(closer >= 9);
  }

  SUBCASE("exact variant is bit-stable across repeated evaluation") {
    const EnvSpec spec = envs::set_env(4, 2, 123);
    SeededRng rng(31);
    const PolicyModel model =
        PolicyModel::make(spec.env->encoding_dim(), {8}, spec.env->action_count(), rng);
    const auto a = metrics::goodness_of_fit_exact(spec, model);
    const auto b = metrics::goodness_of_fit_exact(spec, model);
    CHECK(a.l1_distance == b.l1_distance);
    CHECK(a.relative_mean_error == b.relative_mean_error);
  }
}

TEST_CASE("oracle report") {
  const EnvSpec spec = envs::set_env(4, 2, 1);
  envs::EnergyOracle oracle(spec, 1);
  auto [terminal, intermediate] = metrics::oracle_report(oracle);
  CHECK(terminal == 0);
  CHECK(intermediate == 0);

  const auto& env = *spec.env;
  const auto s1 = env.children(env.initial_state())[0].state;
  oracle.intermediate_energy(s1);
  oracle.terminal_energy(env.children(s1)[0].state);
  std::tie(terminal, intermediate) = metrics::oracle_report(oracle);
  CHECK(terminal == 1);
  CHECK(intermediate == 1);
}
