#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gfn/adam.hpp"
#include "gfn/config.hpp"
#include "gfn/led.hpp"
#include "gfn/metrics.hpp"
#include "gfn/policy.hpp"

namespace gfn::harness {

/// Ordered milestones of one training round; the log makes the
/// potentials-before-policy ordering assertable.
enum class RunEvent {
  kSampled,
  kBufferUpdated,
  kPotentialModelConstructed,
  kPotentialUpdate,
  kPotentialsAssigned,
  kPolicyUpdate,
  kCheckpointWritten,
};

struct RunRow {
  int round = 0;
  std::int64_t samples = 0;
  std::int64_t modes = 0;
  double topk_mean = 0.0;
  double loss_policy = 0.0;
  double loss_potential = 0.0;
  std::int64_t oracle_terminal = 0;
  std::int64_t oracle_intermediate = 0;
  std::int64_t wall_ms = 0;
};

struct RunRecord {
  std::uint64_t seed = 0;
  std::vector<RunRow> rows;
  std::optional<metrics::FitReport> final_fit;
  std::vector<std::pair<int, RunEvent>> events;
  std::string csv_path;
};

/// Versioned CSV schema; the first line of every metrics file.
extern const char* const kCsvSchemaHeader;

/// Full mutable training state; everything a checkpoint must capture for a
/// bit-exact resume.
struct TrainState {
  int round = 0;
  std::int64_t cum_samples = 0;
  PolicyModel policy;
  diff::AdamState policy_opt{1e-3};
  std::optional<led::PotentialModel> potential;
  std::optional<diff::AdamState> potential_opt;
  std::optional<diff::Mlp> proxy;
  std::optional<diff::AdamState> proxy_opt;
  led::ReplayBuffer buffer{1};
  metrics::ModeTracker modes{0.0};
  metrics::TopKTracker topk{100};
  diff::SeededRng sample_rng{0};
  diff::SeededRng mask_rng{0};
  diff::SeededRng buffer_rng{0};
  std::uint64_t oracle_rng_seed = 0;
  std::uint64_t oracle_rng_counter = 0;
  std::int64_t oracle_terminal = 0;
  std::int64_t oracle_intermediate = 0;
};

/// Fresh state for (config, seed): seeded model initializations and derived
/// rng streams.
TrainState init_train_state(const RunConfig& config, const envs::EnvSpec& spec,
                            std::uint64_t seed);

void write_checkpoint(const std::string& path, const RunConfig& config, std::uint64_t seed,
                      const TrainState& state);

/// Restores state for the given (config, seed); refuses on a config-hash
/// mismatch or any integrity failure (naming the corrupt section).
TrainState read_checkpoint(const std::string& path, const RunConfig& config, std::uint64_t seed);

/// Reads the embedded config and seed without needing the original config.
std::pair<RunConfig, std::uint64_t> checkpoint_config(const std::string& path);

/// Trains every configured seed (in parallel when configured) and writes one
/// metrics CSV per seed under the resolved output directory.
std::vector<RunRecord> run(const RunConfig& config);

RunRecord run_seed(const RunConfig& config, std::uint64_t seed);

/// Continues a checkpointed run to the configured round budget; the CSV
/// contains only the rows after the checkpoint.
RunRecord resume_seed(const RunConfig& config, const std::string& checkpoint_path);

/// Prefixes relative output directories with $GFN_OUT_ROOT when set.
std::string resolve_out_dir(const std::string& out_dir);

std::string csv_path_for(const RunConfig& config, std::uint64_t seed, bool resumed = false);
std::string checkpoint_path_for(const RunConfig& config, std::uint64_t seed, int round);

/// Runs every configuration (sharing env and seeds) and writes one wide CSV
/// of per-round mean and standard deviation per arm.
struct ComparisonTable {
  std::vector<std::string> labels;
  std::string csv_path;
};
ComparisonTable compare(const std::vector<RunConfig>& configs, const std::string& out_csv);

}  // namespace gfn::harness
