// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "dime/config.hpp"
#include "dime/metrics.hpp"
#include "dime/stream.hpp"

namespace dime {

/// Everything one (config, seed) run produces.
struct SeedRun {
  std::uint64_t seed = 0;
  MetricsReport report;
  StreamProtocol protocol;
  /// Loss trace over all steps; epochs are numbered consecutively across steps.
  std::vector<LossRecord> loss_trace;
  /// Model after the last step: backbone, merged adapter and full head.
  ModelState final_state;
  double seconds = 0.0;
};

struct Aggregate {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation; 0 for a single seed
};

Aggregate aggregate(std::span<const double> values);

struct RunResult {
  RunConfig config;
  std::vector<SeedRun> runs;
  Aggregate a_final;
  Aggregate a_bar;
  Aggregate wa_bar;
};

struct AblationRow {
  Variant variant;
  RunResult result;
};

struct SweepRow {
  std::string parameter;
  double value = 0.0;
  RunResult result;
};

inline constexpr std::string_view kSweepParameters[] = {"head_ratio", "gamma_head", "gamma_tail", "rho"};

/// Train-merge-evaluate loop over one stream. The first step installs its
/// adapter as the base; later steps merge according to cfg.variant.
SeedRun run_continual(const RunConfig& cfg, std::uint64_t seed);

/// run_continual over cfg.seed_list, seeds fanned out across threads.
RunResult run_seeds(const RunConfig& cfg);

std::vector<AblationRow> run_ablation(const RunConfig& cfg);

std::vector<SweepRow> run_sensitivity(const RunConfig& cfg, std::string_view parameter,
                                      std::span<const double> values);

/// Writes per-seed metrics CSVs, loss logs and protocol dumps plus summary.csv,
/// config.txt and timing.txt into `dir` (created if missing). Files are
/// written to a temporary name and renamed into place.
void emit_results(const RunResult& result, const std::filesystem::path& dir);
void emit_ablation(std::span<const AblationRow> rows, const std::filesystem::path& dir);
void emit_sweep(std::span<const SweepRow> rows, const std::filesystem::path& dir);

/// Atomic text write: temp file in the same directory, then rename.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

std::string summary_csv(const RunResult& result);
std::string ablation_csv(std::span<const AblationRow> rows);
std::string sweep_csv(std::span<const SweepRow> rows);

}  // namespace dime
