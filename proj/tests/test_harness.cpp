#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gfn/errors.hpp"
#include "gfn/runner.hpp"

using namespace gfn;
using harness::RunConfig;
using harness::RunEvent;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string fresh_dir(const std::string& tag) {
  const std::string dir = "harness_test_runs/" + tag;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

RunConfig tiny_config(const std::string& tag, const std::string& objective = "tb") {
  RunConfig cfg = harness::preset_with_overrides(
      "tiny-exact", {"run.objective=" + objective, "run.rounds=60", "run.seeds=0",
                     "run.eval_every=5", "run.deterministic_timing=true",
                     "run.out_dir=" + fresh_dir(tag)});
  return cfg;
}

}  // namespace

TEST_CASE("config text round-trips losslessly for every preset") {
  for (const auto& name : harness::preset_names()) {
    const RunConfig cfg = harness::preset(name);
    const RunConfig back = RunConfig::from_text(cfg.to_text());
    CHECK(back == cfg);
    CHECK(back.to_text() == cfg.to_text());
  }
}

TEST_CASE("config validation fails fast with the offending field") {
  const std::string base = harness::preset("tiny-exact").to_text();

  SUBCASE("unknown keys are rejected") {
    CHECK_THROWS_WITH_AS(RunConfig::from_text(base + "\n[run]\nbogus_key = 1\n"),
                         doctest::Contains("bogus_key"), ConfigError);
  }
  SUBCASE("unknown sections are rejected") {
    CHECK_THROWS_WITH_AS(RunConfig::from_text(base + "\n[mystery]\nx = 1\n"),
                         doctest::Contains("mystery"), ConfigError);
  }
  SUBCASE("led section requires an led objective") {
    CHECK_THROWS_WITH_AS(RunConfig::from_text(base + "\n[led]\nkeep_prob = 0.9\n"),
                         doctest::Contains("[led]"), ConfigError);
  }
  SUBCASE("led objectives require the led section") {
    std::string text = base;
    const auto pos = text.find("objective = tb");
    text.replace(pos, 14, "objective = led_db");
    CHECK_THROWS_WITH_AS(RunConfig::from_text(text), doctest::Contains("[led]"), ConfigError);
  }
  SUBCASE("subtb section is only for subtb-family objectives") {
    CHECK_THROWS_WITH_AS(RunConfig::from_text(base + "\n[subtb]\nlambda = 0.9\n"),
                         doctest::Contains("subtb"), ConfigError);
  }
  SUBCASE("energy-gain objectives need intermediate energy") {
    RunConfig cfg = harness::preset_with_overrides("tiny-exact", {"run.objective=fl_db"});
    cfg.env.intermediate_energy = false;
    CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("intermediate"), ConfigError);
  }
  SUBCASE("env parameter errors surface at validation") {
    RunConfig cfg = harness::preset("tiny-exact");
    cfg.env.special_repeat = 10;  // above capacity
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
}

TEST_CASE("presets") {
  SUBCASE("unknown names list the valid presets") {
    CHECK_THROWS_WITH_AS(harness::preset("nope"), doctest::Contains("tiny-exact"), ConfigError);
  }
  SUBCASE("sequence preset carries the stated exponent and widths") {
    const RunConfig cfg = harness::preset("sequence-subtb");
    CHECK(cfg.build_env().beta == doctest::Approx(3.0));
    CHECK(cfg.hidden == std::vector<int>{128, 128});
    CHECK(cfg.batch_size == 16);
    CHECK(cfg.epsilon == doctest::Approx(0.01));
  }
  SUBCASE("set preset matches its stated sizes") {
    const RunConfig cfg = harness::preset("set-db");
    CHECK(cfg.env.entity_types == 30);
    CHECK(cfg.env.capacity == 20);
    CHECK(cfg.hidden == std::vector<int>{256, 256});
    CHECK(cfg.learning_rate == doctest::Approx(1e-3));
  }
  SUBCASE("bag preset matches its stated sizes") {
    const RunConfig cfg = harness::preset("bag-db");
    CHECK(cfg.batch_size == 32);
    CHECK(cfg.hidden == std::vector<int>{16, 16});
    CHECK(cfg.learning_rate == doctest::Approx(1e-4));
    CHECK(cfg.build_env().mode_threshold == doctest::Approx(30.0));
  }
  SUBCASE("overrides switch objectives and inject dependent sections") {
    const RunConfig cfg = harness::preset_with_overrides(
        "bag-db", {"run.objective=led_subtb", "led.inner_steps=4"});
    REQUIRE(cfg.led.has_value());
    CHECK(cfg.led->keep_prob == doctest::Approx(0.8));  // long trajectories
    CHECK(cfg.led->inner_steps == 4);
    REQUIRE(cfg.subtb_lambda.has_value());
    CHECK(*cfg.subtb_lambda == doctest::Approx(0.9));
  }
  SUBCASE("bad override syntax is rejected") {
    CHECK_THROWS_AS(harness::preset_with_overrides("bag-db", {"run.rounds"}), ConfigError);
  }
}

TEST_CASE("determinism: identical runs produce byte-identical metric CSVs") {
  RunConfig a = tiny_config("det-a");
  const auto rec_a = harness::run_seed(a, 0);
  RunConfig b = tiny_config("det-b");
  const auto rec_b = harness::run_seed(b, 0);
  CHECK(slurp(rec_a.csv_path) == slurp(rec_b.csv_path));
  CHECK(rec_a.rows.size() == 12);
}

TEST_CASE("rounds = 0 yields an empty record at initialization") {
  RunConfig cfg = tiny_config("zero");
  cfg.rounds = 0;
  const auto rec = harness::run_seed(cfg, 0);
  CHECK(rec.rows.empty());
  CHECK_FALSE(rec.final_fit.has_value());
  // Header-only CSV.
  const std::string text = slurp(rec.csv_path);
  CHECK(text.find("schema=gfn-metrics") != std::string::npos);
  CHECK(std::count(text.begin(), text.end(), '\n') == 1);
}

TEST_CASE("checkpoint and resume reproduce the uninterrupted run") {
  RunConfig full = tiny_config("ckpt-full", "led_db");
  full.checkpoint_every = 30;
  const auto rec_full = harness::run_seed(full, 0);
  const std::string ckpt = harness::checkpoint_path_for(full, 0, 30);
  REQUIRE(std::filesystem::exists(ckpt));

  const auto rec_resumed = harness::resume_seed(full, ckpt);
  REQUIRE(rec_resumed.rows.size() * 2 == rec_full.rows.size());
  // Rows after the checkpoint agree exactly.
  for (std::size_t i = 0; i < rec_resumed.rows.size(); ++i) {
    const auto& r1 = rec_full.rows[rec_full.rows.size() / 2 + i];
    const auto& r2 = rec_resumed.rows[i];
    CHECK(r1.round == r2.round);
    CHECK(r1.modes == r2.modes);
    CHECK(r1.topk_mean == r2.topk_mean);
    CHECK(r1.loss_policy == r2.loss_policy);
    CHECK(r1.loss_potential == r2.loss_potential);
    CHECK(r1.oracle_terminal == r2.oracle_terminal);
  }
  // The resumed CSV is the byte-exact tail of the full CSV.
  const std::string full_csv = slurp(rec_full.csv_path);
  const std::string tail_csv = slurp(rec_resumed.csv_path);
  const auto header_end = tail_csv.find('\n') + 1;
  CHECK(full_csv.ends_with(tail_csv.substr(header_end)));
}

TEST_CASE("restore refuses mismatched configs and corrupt files") {
  RunConfig cfg = tiny_config("ckpt-guard");
  cfg.checkpoint_every = 30;
  harness::run_seed(cfg, 0);
  const std::string ckpt = harness::checkpoint_path_for(cfg, 0, 30);

  SUBCASE("config hash mismatch names both hashes") {
    RunConfig other = cfg;
    other.learning_rate = 0.5;
    try {
      harness::read_checkpoint(ckpt, other, 0);
      FAIL("expected refusal");
    } catch (const RuntimeAbort& e) {
      const std::string msg = e.what();
      CHECK(msg.find(std::to_string(cfg.hash(0))) != std::string::npos);
      CHECK(msg.find(std::to_string(other.hash(0))) != std::string::npos);
    }
  }

  SUBCASE("flipping one payload byte names the corrupt section") {
    std::string bytes = slurp(ckpt);
    // Corrupt a byte inside the policy parameters.
    const auto pos = bytes.find("policy");
    REQUIRE(pos != std::string::npos);
    bytes[pos + 40] ^= 0x01;
    const std::string bad = std::filesystem::path(ckpt).parent_path() / "corrupt.ckpt";
    std::ofstream(bad, std::ios::binary) << bytes;
    try {
      harness::read_checkpoint(bad, cfg, 0);
      FAIL("expected integrity error");
    } catch (const RuntimeAbort& e) {
      CHECK(std::string(e.what()).find("section") != std::string::npos);
    }
  }
}

TEST_CASE("event log proves the round ordering") {
  RunConfig cfg = tiny_config("events", "led_db");
  cfg.rounds = 3;
  const auto rec = harness::run_seed(cfg, 0);

  bool constructed = false;
  for (const auto& [round, event] : rec.events)
    if (event == RunEvent::kPotentialModelConstructed) constructed = true;
  CHECK(constructed);

  for (int round = 1; round <= 3; ++round) {
    int potential_at = -1, policy_at = -1;
    for (std::size_t i = 0; i < rec.events.size(); ++i) {
      if (rec.events[i].first != round) continue;
      if (rec.events[i].second == RunEvent::kPotentialUpdate) potential_at = static_cast<int>(i);
      if (rec.events[i].second == RunEvent::kPolicyUpdate) policy_at = static_cast<int>(i);
    }
    REQUIRE(potential_at >= 0);
    REQUIRE(policy_at >= 0);
    CHECK(potential_at < policy_at);
  }

  // Baselines never construct a potential model.
  RunConfig baseline = tiny_config("events-base", "db");
  baseline.rounds = 3;
  const auto rec2 = harness::run_seed(baseline, 0);
  for (const auto& [round, event] : rec2.events) {
    CHECK(event != RunEvent::kPotentialModelConstructed);
    CHECK(event != RunEvent::kPotentialUpdate);
  }
}

TEST_CASE("oracle accounting of full runs") {
  SUBCASE("potential-based training never touches intermediate energies") {
    RunConfig cfg = tiny_config("oracle-led", "led_db");
    cfg.rounds = 10;
    cfg.eval_every = 1;
    const auto rec = harness::run_seed(cfg, 0);
    CHECK(rec.rows.back().oracle_terminal == 10 * cfg.batch_size);
    CHECK(rec.rows.back().oracle_intermediate == 0);
  }

  SUBCASE("energy-gain training on a fixed-length env counts every state") {
    RunConfig cfg = harness::preset_with_overrides(
        "set-db",
        {"run.objective=fl_db", "run.rounds=2", "run.seeds=0", "run.eval_every=1",
         "run.fl_memoize=false", "run.deterministic_timing=true", "policy.hidden=8,8",
         "env.entity_types=6", "env.capacity=4", "run.out_dir=" + fresh_dir("oracle-fl")});
    const auto rec = harness::run_seed(cfg, 0);
    // T = 4 transitions, so 5 states per trajectory.
    CHECK(rec.rows.back().oracle_intermediate == 2 * cfg.batch_size * 5);
    CHECK(rec.rows.back().oracle_terminal == 2 * cfg.batch_size);
  }
}

TEST_CASE("comparison table") {
  RunConfig a = tiny_config("cmp-a", "tb");
  a.rounds = 20;
  a.eval_every = 10;
  a.seeds = {0, 1};
  RunConfig b = harness::preset_with_overrides(
      "tiny-exact", {"run.objective=led_db", "run.rounds=20", "run.eval_every=10",
                     "run.seeds=0,1", "run.deterministic_timing=true",
                     "run.out_dir=" + fresh_dir("cmp-b")});

  SUBCASE("aligned wide CSV with one block per arm") {
    const std::string out = fresh_dir("cmp-out") + "/table.csv";
    const auto table = harness::compare({a, b}, out);
    CHECK(table.labels == std::vector<std::string>{"tb", "led_db"});
    const std::string text = slurp(out);
    CHECK(text.find("tb:modes_mean") != std::string::npos);
    CHECK(text.find("led_db:oracle_intermediate_mean") != std::string::npos);
    // Two data rows for rounds 10 and 20.
    CHECK(std::count(text.begin(), text.end(), '\n') == 4);
    // The potential-based arm reports zero intermediate calls in every row.
    std::istringstream lines(text);
    std::string line;
    std::getline(lines, line);
    std::getline(lines, line);
    while (std::getline(lines, line)) {
      const auto last_comma = line.find_last_of(',');
      CHECK(line.substr(last_comma + 1) == "0");
    }
  }

  SUBCASE("duplicate objectives get disambiguated labels") {
    RunConfig a2 = a;
    a2.out_dir = fresh_dir("cmp-a2");
    const auto table = harness::compare({a, a2}, fresh_dir("cmp-out2") + "/t.csv");
    CHECK(table.labels == std::vector<std::string>{"tb", "tb#2"});
  }

  SUBCASE("mismatched environments are refused") {
    RunConfig c = b;
    c.env.capacity = 3;
    CHECK_THROWS_WITH_AS(harness::compare({a, c}, "unused.csv"),
                         doctest::Contains("environment"), ConfigError);
  }

  SUBCASE("mismatched seed lists are refused") {
    RunConfig c = b;
    c.seeds = {0};
    CHECK_THROWS_WITH_AS(harness::compare({a, c}, "unused.csv"), doctest::Contains("seed"),
                         ConfigError);
  }

  SUBCASE("fewer than two arms is refused") {
    CHECK_THROWS_AS(harness::compare({a}, "unused.csv"), ConfigError);
  }
}

TEST_CASE("single-seed comparisons have zero standard deviation") {
  RunConfig a = tiny_config("cmp-s1", "tb");
  a.rounds = 10;
  a.eval_every = 10;
  RunConfig b = tiny_config("cmp-s2", "db");
  b.rounds = 10;
  b.eval_every = 10;
  const std::string out = fresh_dir("cmp-s-out") + "/table.csv";
  harness::compare({a, b}, out);
  std::istringstream lines(slurp(out));
  std::string line;
  std::getline(lines, line);
  std::getline(lines, line);  // header
  std::getline(lines, line);  // single data row
  std::stringstream row(line);
  std::vector<std::string> cells;
  std::string cell;
  while (std::getline(row, cell, ',')) cells.push_back(cell);
  // Layout: round, samples, then 6 cells per arm; std columns are offsets 1, 3.
  REQUIRE(cells.size() == 2 + 12);
  for (std::size_t arm = 0; arm < 2; ++arm) {
    CHECK(cells[2 + 6 * arm + 1] == "0");
    CHECK(cells[2 + 6 * arm + 3] == "0");
  }
}

TEST_CASE("output root environment variable prefixes relative paths") {
  CHECK(harness::resolve_out_dir("/abs/path") == "/abs/path");
  setenv("GFN_OUT_ROOT", "/tmp/gfn-root", 1);
  CHECK(harness::resolve_out_dir("rel/path") == "/tmp/gfn-root/rel/path");
  CHECK(harness::resolve_out_dir("/abs/path") == "/abs/path");
  unsetenv("GFN_OUT_ROOT");
  CHECK(harness::resolve_out_dir("rel/path") == "rel/path");
}

TEST_CASE("eval cadence controls the row count") {
  RunConfig cfg = tiny_config("cadence");
  cfg.rounds = 100;
  cfg.eval_every = 25;
  const auto rec = harness::run_seed(cfg, 0);
  REQUIRE(rec.rows.size() == 4);
  CHECK(rec.rows.front().round == 25);
  CHECK(rec.rows.back().round == 100);
  CHECK(rec.rows.back().samples == 100 * cfg.batch_size);
  CHECK(rec.final_fit.has_value());  // tiny env is enumerable
}
