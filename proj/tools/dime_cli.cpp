// SPDX-License-Identifier: Apache-2.0

// Command-line front end: run, ablate, sweep and selftest.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dime/checkpoint.hpp"
#include "dime/config.hpp"
#include "dime/harness.hpp"
#include "dime/selftest.hpp"

namespace {

struct CommonOptions {
  std::string config_path;
  std::string out_dir;
  std::string seeds;
  std::vector<std::string> settings;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("--config", opts.config_path, "key=value configuration file")->check(CLI::ExistingFile);
  cmd->add_option("--out", opts.out_dir, "output directory");
  cmd->add_option("--seeds", opts.seeds, "comma separated seed list");
  cmd->add_option("--set", opts.settings, "override a config key (key=value)")->take_all();
}

dime::RunConfig resolve(const CommonOptions& opts) {
  dime::RunConfig cfg = opts.config_path.empty() ? dime::RunConfig{} : dime::load_config_file(opts.config_path);
  for (const std::string& kv : opts.settings) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
    dime::apply_setting(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!opts.seeds.empty()) cfg.seed_list = dime::parse_seed_list(opts.seeds);
  if (!opts.out_dir.empty()) cfg.output_dir = opts.out_dir;
  cfg.validate();
  return cfg;
}

void print_result(const char* label, const dime::RunResult& r) {
  std::printf("%-12s A_T %.4f +- %.4f  Abar %.4f +- %.4f  wAbar %.4f +- %.4f\n", label, r.a_final.mean,
              r.a_final.stddev, r.a_bar.mean, r.a_bar.stddev, r.wa_bar.mean, r.wa_bar.stddev);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual-imbalance continual learning with spectral adapter merging"};
  app.require_subcommand(1);

  CommonOptions run_opts;
  std::string save_model;
  CLI::App* run = app.add_subcommand("run", "train and evaluate one variant over the seed list");
  add_common(run, run_opts);
  run->add_option("--save-model", save_model, "write the first seed's final model checkpoint here");

  CommonOptions ablate_opts;
  CLI::App* ablate = app.add_subcommand("ablate", "run the five-variant ablation ladder");
  add_common(ablate, ablate_opts);

  CommonOptions sweep_opts;
  std::string sweep_param;
  std::string sweep_values;
  CLI::App* sweep = app.add_subcommand("sweep", "sensitivity sweep over one parameter");
  add_common(sweep, sweep_opts);
  sweep->add_option("--param", sweep_param, "head_ratio, gamma_head, gamma_tail or rho")->required();
  sweep->add_option("--values", sweep_values, "comma separated values")->required();

  CLI::App* selftest = app.add_subcommand("selftest", "run the analytic invariant checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*run) {
      const dime::RunConfig cfg = resolve(run_opts);
      const dime::RunResult result = dime::run_seeds(cfg);
      dime::emit_results(result, cfg.output_dir);
      print_result(std::string(dime::variant_name(cfg.variant)).c_str(), result);
      if (!save_model.empty()) {
        std::ofstream out(save_model);
        if (!out) throw std::runtime_error("cannot write " + save_model);
        dime::write_checkpoint(out, result.runs.front().final_state);
      }
    } else if (*ablate) {
      const dime::RunConfig cfg = resolve(ablate_opts);
      const auto rows = dime::run_ablation(cfg);
      dime::emit_ablation(rows, cfg.output_dir);
      for (const auto& row : rows) print_result(std::string(dime::variant_name(row.variant)).c_str(), row.result);
    } else if (*sweep) {
      const dime::RunConfig cfg = resolve(sweep_opts);
      const auto values = dime::parse_value_list(sweep_values);
      const auto rows = dime::run_sensitivity(cfg, sweep_param, values);
      dime::emit_sweep(rows, cfg.output_dir);
      for (const auto& row : rows) {
        const std::string label = row.parameter + "=" + CLI::detail::to_string(row.value);
        print_result(label.c_str(), row.result);
      }
    } else if (*selftest) {
      bool all = true;
      for (const auto& check : dime::run_selftest()) {
        std::printf("[%s] %s: %s\n", check.passed ? "PASS" : "FAIL", check.name.c_str(), check.detail.c_str());
        all = all && check.passed;
      }
      return all ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "dime: %s\n", e.what());
    return 1;
  }
  return 0;
}
