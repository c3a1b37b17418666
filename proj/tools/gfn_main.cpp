#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gfn/config.hpp"
#include "gfn/errors.hpp"
#include "gfn/metrics.hpp"
#include "gfn/objectives.hpp"
#include "gfn/runner.hpp"

namespace {

using namespace gfn;

int cmd_run(const std::string& config_path) {
  const harness::RunConfig config = harness::RunConfig::load(config_path);
  const auto records = harness::run(config);
  for (const auto& rec : records) {
    std::printf("seed %llu: %zu metric rows -> %s\n", static_cast<unsigned long long>(rec.seed),
                rec.rows.size(), rec.csv_path.c_str());
    if (!rec.rows.empty()) {
      const auto& last = rec.rows.back();
      std::printf("  round %d  modes %lld  topk_mean %.6g  loss %.6g\n", last.round,
                  static_cast<long long>(last.modes), last.topk_mean, last.loss_policy);
    }
    if (rec.final_fit)
      std::printf("  exact fit: l1 %.6g  relative_mean_error %.6g\n", rec.final_fit->l1_distance,
                  rec.final_fit->relative_mean_error);
  }
  return 0;
}

int cmd_preset(const std::string& name, const std::vector<std::string>& overrides,
               const std::string& out_path) {
  const harness::RunConfig config = harness::preset_with_overrides(name, overrides);
  const std::string text = config.to_text();
  if (out_path.empty()) {
    std::fputs(text.c_str(), stdout);
  } else {
    std::ofstream out(out_path);
    if (!out) throw RuntimeAbort("cannot write '" + out_path + "'");
    out << text;
    std::printf("wrote %s\n", out_path.c_str());
  }
  return 0;
}

int cmd_compare(const std::vector<std::string>& config_paths, const std::string& out_csv) {
  std::vector<harness::RunConfig> configs;
  configs.reserve(config_paths.size());
  for (const auto& p : config_paths) configs.push_back(harness::RunConfig::load(p));
  const auto table = harness::compare(configs, out_csv);
  std::printf("compared %zu arms -> %s\n", table.labels.size(), table.csv_path.c_str());
  return 0;
}

int cmd_enumerate(const std::string& config_path, const std::string& out_path) {
  const harness::RunConfig config = harness::RunConfig::load(config_path);
  const auto entries = envs::enumerate_terminals(config.build_env());
  std::FILE* f = out_path.empty() ? stdout : std::fopen(out_path.c_str(), "w");
  if (f == nullptr) throw RuntimeAbort("cannot write '" + out_path + "'");
  std::fprintf(f, "# schema=gfn-enumerate-v1 object,reward,probability\n");
  for (const auto& e : entries)
    std::fprintf(f, "%s,%.17g,%.17g\n", e.key.c_str(), e.expected_reward, e.probability);
  if (f != stdout) {
    std::fclose(f);
    std::printf("wrote %zu objects to %s\n", entries.size(), out_path.c_str());
  }
  return 0;
}

int cmd_eval(const std::string& checkpoint_path) {
  const auto [config, seed] = harness::checkpoint_config(checkpoint_path);
  const harness::TrainState state = harness::read_checkpoint(checkpoint_path, config, seed);
  std::printf("checkpoint: %s\n", checkpoint_path.c_str());
  std::printf("objective %s  env %s  seed %llu  round %d  samples %lld\n",
              config.objective.c_str(), config.env.kind.c_str(),
              static_cast<unsigned long long>(seed), state.round,
              static_cast<long long>(state.cum_samples));
  std::printf("modes %lld  topk_mean %.6g\n", static_cast<long long>(state.modes.count()),
              state.topk.mean());
  const envs::EnvSpec spec = config.build_env();
  if (spec.env->terminal_space_size() <= 1e6) {
    const auto fit = metrics::goodness_of_fit_exact(spec, state.policy);
    std::printf("exact fit: l1 %.6g  relative_mean_error %.6g\n", fit.l1_distance,
                fit.relative_mean_error);
  } else {
    std::printf("exact fit: environment not enumerable\n");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GFlowNet training harness"};
  app.require_subcommand(1);

  std::string run_config;
  auto* run_cmd = app.add_subcommand("run", "train every seed of a config file");
  run_cmd->add_option("config", run_config, "config file")->required();

  std::string preset_name, preset_out;
  std::vector<std::string> preset_overrides;
  auto* preset_cmd = app.add_subcommand("preset", "materialize a named experiment config");
  preset_cmd->add_option("name", preset_name, "preset name")->required();
  preset_cmd->add_option("--override", preset_overrides, "section.key=value patches");
  preset_cmd->add_option("--out", preset_out, "write the config here instead of stdout");

  std::vector<std::string> compare_configs;
  std::string compare_out = "compare.csv";
  auto* compare_cmd = app.add_subcommand("compare", "run several configs and tabulate them");
  compare_cmd->add_option("configs", compare_configs, "config files")->required()->expected(-2);
  compare_cmd->add_option("--out", compare_out, "comparison CSV path");

  std::string enum_config, enum_out;
  auto* enum_cmd = app.add_subcommand("enumerate", "exact target distribution of an environment");
  enum_cmd->add_option("config", enum_config, "config file")->required();
  enum_cmd->add_option("--out", enum_out, "CSV path (stdout when omitted)");

  std::string eval_ckpt;
  auto* eval_cmd = app.add_subcommand("eval", "inspect a checkpoint and report metrics");
  eval_cmd->add_option("checkpoint", eval_ckpt, "checkpoint file")->required();

  try {
    app.parse(argc, argv);
    if (run_cmd->parsed()) return cmd_run(run_config);
    if (preset_cmd->parsed()) return cmd_preset(preset_name, preset_overrides, preset_out);
    if (compare_cmd->parsed()) return cmd_compare(compare_configs, compare_out);
    if (enum_cmd->parsed()) return cmd_enumerate(enum_config, enum_out);
    if (eval_cmd->parsed()) return cmd_eval(eval_ckpt);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const gfn::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
