#include "gfn/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <stdexcept>
#include <thread>

#include "gfn/errors.hpp"
#include "gfn/gradcheck.hpp"
#include "gfn/objectives.hpp"

namespace gfn::harness {

using envs::EnergyOracle;
using envs::EnvSpec;
using envs::Trajectory;

const char* const kCsvSchemaHeader =
    "# schema=gfn-metrics-v1 "
    "round,samples,modes,topk_mean,loss_policy,loss_potential,oracle_terminal,"
    "oracle_intermediate,wall_ms";

std::string resolve_out_dir(const std::string& out_dir) {
  if (!out_dir.empty() && out_dir.front() == '/') return out_dir;
  const char* root = std::getenv("GFN_OUT_ROOT");
  if (root == nullptr || *root == '\0') return out_dir;
  return std::string(root) + "/" + out_dir;
}

std::string csv_path_for(const RunConfig& config, std::uint64_t seed, bool resumed) {
  return resolve_out_dir(config.out_dir) + "/" + config.objective + "-seed" +
         std::to_string(seed) + (resumed ? "-resume" : "") + ".csv";
}

std::string checkpoint_path_for(const RunConfig& config, std::uint64_t seed, int round) {
  return resolve_out_dir(config.out_dir) + "/" + config.objective + "-seed" +
         std::to_string(seed) + "-round" + std::to_string(round) + ".ckpt";
}

TrainState init_train_state(const RunConfig& config, const EnvSpec& spec, std::uint64_t seed) {
  const ObjectiveKind kind = config.objective_kind();
  diff::SeededRng root(seed);
  diff::SeededRng policy_rng = root.fork(1);

  TrainState state;
  state.policy = PolicyModel::make(spec.env->encoding_dim(), config.hidden,
                                   spec.env->action_count(), policy_rng);
  state.policy_opt = diff::AdamState(config.learning_rate);
  state.modes = metrics::ModeTracker(spec.mode_threshold);
  state.topk = metrics::TopKTracker(config.topk);
  state.sample_rng = root.fork(4);
  state.mask_rng = root.fork(6);
  state.buffer_rng = root.fork(7);
  state.oracle_rng_seed = root.fork(5).seed();

  if (objective_is_led(kind)) {
    const led::DecompositionConfig dcfg = config.led->to_decomposition();
    state.buffer = led::ReplayBuffer(dcfg.buffer_capacity);
    if (dcfg.source == led::PotentialSource::kLeastSquares) {
      diff::SeededRng pot_rng = root.fork(2);
      state.potential = led::PotentialModel::make(*spec.env, config.hidden, pot_rng);
      state.potential->learning_rate = dcfg.learning_rate;
      state.potential_opt = diff::AdamState(dcfg.learning_rate);
    } else {
      diff::SeededRng proxy_rng = root.fork(3);
      std::vector<int> sizes;
      sizes.push_back(spec.env->encoding_dim());
      sizes.insert(sizes.end(), config.hidden.begin(), config.hidden.end());
      sizes.push_back(1);
      state.proxy = diff::Mlp::make(sizes, diff::Activation::kLeakyRelu, proxy_rng);
      state.proxy_opt = diff::AdamState(dcfg.learning_rate);
    }
  }
  return state;
}

namespace {

struct CsvFile {
  std::FILE* f = nullptr;

  explicit CsvFile(const std::string& path) {
    f = std::fopen(path.c_str(), "w");
    if (f == nullptr) throw RuntimeAbort("cannot open metrics file '" + path + "'");
  }
  ~CsvFile() {
    if (f != nullptr) std::fclose(f);
  }
  CsvFile(const CsvFile&) = delete;
  CsvFile& operator=(const CsvFile&) = delete;

  void header() { std::fprintf(f, "%s\n", kCsvSchemaHeader); }

  void row(const RunRow& r) {
    std::fprintf(f, "%d,%lld,%lld,%.17g,%.17g,%.17g,%lld,%lld,%lld\n", r.round,
                 static_cast<long long>(r.samples), static_cast<long long>(r.modes), r.topk_mean,
                 r.loss_policy, r.loss_potential, static_cast<long long>(r.oracle_terminal),
                 static_cast<long long>(r.oracle_intermediate),
                 static_cast<long long>(r.wall_ms));
    std::fflush(f);
  }
};

RunRecord run_loop(const RunConfig& config, std::uint64_t seed, TrainState state, bool resumed) {
  const EnvSpec spec = config.build_env();
  const envs::Environment& env = *spec.env;
  const ObjectiveKind kind = config.objective_kind();
  const bool is_led = objective_is_led(kind);
  const bool is_fl = objective_is_fl(kind);

  std::filesystem::create_directories(resolve_out_dir(config.out_dir));

  RunRecord record;
  record.seed = seed;
  record.csv_path = csv_path_for(config, seed, resumed);
  if (!resumed && state.potential.has_value())
    record.events.emplace_back(0, RunEvent::kPotentialModelConstructed);

  EnergyOracle oracle(spec, state.oracle_rng_seed);
  oracle.restore_counters(state.oracle_terminal, state.oracle_intermediate);
  oracle.reward_rng().set_counter(state.oracle_rng_counter);

  const ExplorationPolicy exploration(config.epsilon);
  const auto params = state.policy.params();
  led::DecompositionConfig dcfg;
  if (is_led) dcfg = config.led->to_decomposition();

  CsvFile csv(record.csv_path);
  csv.header();

  const auto started = std::chrono::steady_clock::now();
  auto wall_ms = [&]() -> std::int64_t {
    if (config.deterministic_timing) return 0;
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::steady_clock::now() - started)
        .count();
  };
  auto sync_oracle = [&]() {
    state.oracle_terminal = oracle.terminal_calls();
    state.oracle_intermediate = oracle.intermediate_calls();
    state.oracle_rng_counter = oracle.reward_rng().counter();
  };

  for (int round = state.round + 1; round <= config.rounds; ++round) {
    std::vector<Trajectory> batch;
    batch.reserve(config.batch_size);
    for (int b = 0; b < config.batch_size; ++b)
      batch.push_back(sample_trajectory(spec, state.policy, exploration, state.sample_rng, oracle));
    state.cum_samples += config.batch_size;
    record.events.emplace_back(round, RunEvent::kSampled);
    metrics::record_round(state.modes, state.topk, env, batch);

    double potential_loss = 0.0;
    std::vector<std::vector<double>> bonus;
    if (is_led) {
      for (const Trajectory& traj : batch) state.buffer.push(traj);
      record.events.emplace_back(round, RunEvent::kBufferUpdated);
      if (dcfg.source == led::PotentialSource::kLeastSquares) {
        potential_loss = led::train_potentials(*state.potential, env, state.buffer, dcfg,
                                               *state.potential_opt, state.mask_rng,
                                               state.buffer_rng)
                             .value_or(0.0);
      } else {
        potential_loss =
            led::train_proxy(*state.proxy, env, state.buffer, dcfg, *state.proxy_opt,
                             state.buffer_rng)
                .value_or(0.0);
      }
      record.events.emplace_back(round, RunEvent::kPotentialUpdate);
      bonus.reserve(batch.size());
      for (const Trajectory& traj : batch) {
        std::vector<double> raw =
            dcfg.source == led::PotentialSource::kLeastSquares
                ? led::raw_potentials(*state.potential, env, traj)
                : led::proxy_difference_potentials(*state.proxy, env, traj);
        bonus.push_back(led::redistribute(std::move(raw), traj.terminal_energy,
                                          dcfg.redistribution));
      }
      record.events.emplace_back(round, RunEvent::kPotentialsAssigned);
    } else if (is_fl) {
      EnergyMemo memo;
      EnergyMemo* memo_ptr = config.fl_memoize ? &memo : nullptr;
      bonus.reserve(batch.size());
      for (const Trajectory& traj : batch) {
        const auto energies = trajectory_energies(env, traj, oracle, memo_ptr);
        std::vector<double> gains;
        gains.reserve(traj.length());
        for (int t = 0; t < traj.length(); ++t) gains.push_back(energies[t + 1] - energies[t]);
        bonus.push_back(std::move(gains));
      }
    }

    diff::Tape tape;
    Tape::NodeId loss = -1;
    switch (kind) {
      case ObjectiveKind::kDb:
        loss = db_family_batch_loss(tape, state.policy, env, batch, FlowMode::kPlain);
        break;
      case ObjectiveKind::kTb:
        loss = tb_batch_loss(tape, state.policy, env, batch);
        break;
      case ObjectiveKind::kSubTb:
        loss = subtb_family_batch_loss(tape, state.policy, env, batch, *config.subtb_lambda,
                                       FlowMode::kPlain);
        break;
      case ObjectiveKind::kFlDb:
      case ObjectiveKind::kLedDb:
        loss = db_family_batch_loss(tape, state.policy, env, batch, FlowMode::kReparam, &bonus);
        break;
      case ObjectiveKind::kFlSubTb:
      case ObjectiveKind::kLedSubTb:
        loss = subtb_family_batch_loss(tape, state.policy, env, batch, *config.subtb_lambda,
                                       FlowMode::kReparam, &bonus);
        break;
    }
    tape.backward(loss);
    const double loss_value = tape.value(loss).scalar_value();
    if (!std::isfinite(loss_value)) {
      sync_oracle();
      state.round = round - 1;
      const std::string diag =
          resolve_out_dir(config.out_dir) + "/" + config.objective + "-seed" +
          std::to_string(seed) + "-diagnostic.ckpt";
      write_checkpoint(diag, config, seed, state);
      throw RuntimeAbort("non-finite policy loss at round " + std::to_string(round) +
                         "; diagnostic checkpoint written to " + diag);
    }
    const auto grads = diff::collect_grads(tape, params);
    diff::adam_step(params, grads, state.policy_opt);
    record.events.emplace_back(round, RunEvent::kPolicyUpdate);
    state.round = round;

    if (round % config.eval_every == 0) {
      RunRow row;
      row.round = round;
      row.samples = state.cum_samples;
      row.modes = state.modes.count();
      row.topk_mean = state.topk.mean();
      row.loss_policy = loss_value;
      row.loss_potential = potential_loss;
      row.oracle_terminal = oracle.terminal_calls();
      row.oracle_intermediate = oracle.intermediate_calls();
      row.wall_ms = wall_ms();
      csv.row(row);
      record.rows.push_back(row);
    }
    if (config.checkpoint_every > 0 && round % config.checkpoint_every == 0) {
      sync_oracle();
      write_checkpoint(checkpoint_path_for(config, seed, round), config, seed, state);
      record.events.emplace_back(round, RunEvent::kCheckpointWritten);
    }
  }

  if (config.rounds > 0 && spec.env->terminal_space_size() <= 1e6) {
    record.final_fit = metrics::goodness_of_fit_exact(spec, state.policy);
    const std::string fit_path = resolve_out_dir(config.out_dir) + "/" + config.objective +
                                 "-seed" + std::to_string(seed) + "-fit.csv";
    if (std::FILE* f = std::fopen(fit_path.c_str(), "w")) {
      std::fprintf(f, "# schema=gfn-fit-v1 l1_distance,relative_mean_error\n");
      std::fprintf(f, "%.17g,%.17g\n", record.final_fit->l1_distance,
                   record.final_fit->relative_mean_error);
      std::fclose(f);
    }
  }
  return record;
}

}  // namespace

RunRecord run_seed(const RunConfig& config, std::uint64_t seed) {
  config.validate();
  const EnvSpec spec = config.build_env();
  return run_loop(config, seed, init_train_state(config, spec, seed), /*resumed=*/false);
}

RunRecord resume_seed(const RunConfig& config, const std::string& checkpoint_path) {
  config.validate();
  const auto [ckpt_config, seed] = checkpoint_config(checkpoint_path);
  TrainState state = read_checkpoint(checkpoint_path, config, seed);
  return run_loop(config, seed, std::move(state), /*resumed=*/true);
}

std::vector<RunRecord> run(const RunConfig& config) {
  config.validate();
  std::vector<RunRecord> records(config.seeds.size());
  if (config.parallel_seeds && config.seeds.size() > 1) {
    std::vector<std::thread> workers;
    std::vector<std::exception_ptr> failures(config.seeds.size());
    for (std::size_t i = 0; i < config.seeds.size(); ++i) {
      workers.emplace_back([&, i]() {
        try {
          records[i] = run_seed(config, config.seeds[i]);
        } catch (...) {
          failures[i] = std::current_exception();
        }
      });
    }
    for (auto& w : workers) w.join();
    for (const auto& failure : failures)
      if (failure) std::rethrow_exception(failure);
  } else {
    for (std::size_t i = 0; i < config.seeds.size(); ++i)
      records[i] = run_seed(config, config.seeds[i]);
  }
  return records;
}

// ---------------------------------------------------------------------------
// Comparison
// ---------------------------------------------------------------------------

ComparisonTable compare(const std::vector<RunConfig>& configs, const std::string& out_csv) {
  if (configs.size() < 2) throw ConfigError("compare: need at least two configurations");
  for (std::size_t i = 1; i < configs.size(); ++i) {
    if (!(configs[i].env == configs[0].env))
      throw ConfigError("compare: configuration " + std::to_string(i) +
                        " uses a different environment");
    if (configs[i].seeds != configs[0].seeds)
      throw ConfigError("compare: configuration " + std::to_string(i) +
                        " uses a different seed list");
    if (configs[i].rounds != configs[0].rounds || configs[i].eval_every != configs[0].eval_every)
      throw ConfigError("compare: configuration " + std::to_string(i) +
                        " uses a different round budget or eval cadence");
  }

  ComparisonTable table;
  for (const auto& cfg : configs) {
    std::string label = cfg.objective;
    int suffix = 2;
    while (std::find(table.labels.begin(), table.labels.end(), label) != table.labels.end())
      label = cfg.objective + "#" + std::to_string(suffix++);
    table.labels.push_back(label);
  }

  std::vector<std::vector<RunRecord>> results;
  results.reserve(configs.size());
  for (const auto& cfg : configs) results.push_back(run(cfg));

  const std::size_t n_rows = results[0][0].rows.size();
  for (const auto& arm : results)
    for (const auto& rec : arm)
      if (rec.rows.size() != n_rows) throw RuntimeAbort("compare: misaligned metric rows");

  std::FILE* f = std::fopen(out_csv.c_str(), "w");
  if (f == nullptr) throw RuntimeAbort("cannot open comparison file '" + out_csv + "'");
  std::fprintf(f, "# schema=gfn-compare-v1\n");
  std::fprintf(f, "round,samples");
  for (const auto& label : table.labels)
    std::fprintf(f,
                 ",%s:modes_mean,%s:modes_std,%s:topk_mean,%s:topk_std,%s:oracle_terminal_mean,"
                 "%s:oracle_intermediate_mean",
                 label.c_str(), label.c_str(), label.c_str(), label.c_str(), label.c_str(),
                 label.c_str());
  std::fprintf(f, "\n");

  auto mean_std = [](const std::vector<double>& xs) {
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    return std::make_pair(mean, std::sqrt(var / static_cast<double>(xs.size())));
  };

  for (std::size_t r = 0; r < n_rows; ++r) {
    std::fprintf(f, "%d,%lld", results[0][0].rows[r].round,
                 static_cast<long long>(results[0][0].rows[r].samples));
    for (const auto& arm : results) {
      std::vector<double> modes, topk, oterm, ointer;
      for (const auto& rec : arm) {
        modes.push_back(static_cast<double>(rec.rows[r].modes));
        topk.push_back(rec.rows[r].topk_mean);
        oterm.push_back(static_cast<double>(rec.rows[r].oracle_terminal));
        ointer.push_back(static_cast<double>(rec.rows[r].oracle_intermediate));
      }
      const auto [m_mean, m_std] = mean_std(modes);
      const auto [t_mean, t_std] = mean_std(topk);
      std::fprintf(f, ",%.17g,%.17g,%.17g,%.17g,%.17g,%.17g", m_mean, m_std, t_mean, t_std,
                   mean_std(oterm).first, mean_std(ointer).first);
    }
    std::fprintf(f, "\n");
  }
  std::fclose(f);
  table.csv_path = out_csv;
  return table;
}

}  // namespace gfn::harness
