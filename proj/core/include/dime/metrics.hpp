// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "dime/adapter.hpp"
#include "dime/stream.hpp"

namespace dime {

struct ClassTally {
  std::size_t correct = 0;
  std::size_t total = 0;

  friend bool operator==(const ClassTally&, const ClassTally&) = default;
};

using Tallies = std::map<ClassId, ClassTally>;

struct Prediction {
  ClassId predicted = 0;
  ClassId truth = 0;
};

struct StepRecord {
  int step_index = 0;
  std::size_t accumulated_classes = 0;
  double accuracy = 0.0;
  Tallies per_class;
  /// Adapter parameter sets held by the evaluated model and their total size.
  std::size_t adapter_sets = 0;
  std::size_t adapter_parameters = 0;

  friend bool operator==(const StepRecord&, const StepRecord&) = default;
};

enum class SizeTier { kLarge, kMiddle, kSmall };

/// Accuracy per task-size tier; empty tiers are std::nullopt.
struct TierAccuracies {
  std::optional<double> large;
  std::optional<double> middle;
  std::optional<double> small;

  friend bool operator==(const TierAccuracies&, const TierAccuracies&) = default;
};

struct MetricsReport {
  std::vector<StepRecord> records;
  double a_final = 0.0;
  double a_bar = 0.0;
  double wa_bar = 0.0;
  TierAccuracies tiers;

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

struct StepAccuracy {
  double accuracy = 0.0;
  Tallies per_class;
};

StepAccuracy step_accuracy(std::span<const Prediction> predictions);

/// Mean of A_t.
double average_accuracy(std::span<const StepRecord> records);
double average_accuracy(std::span<const double> accuracies);

/// sum(w_t A_t) / sum(w_t), w_t = (sum_{i<=t} |C_i|) / (C t / T).
double weighted_average_accuracy(std::span<const double> accuracies,
                                 std::span<const std::size_t> class_counts);

/// Tier of each step (by position in `step_sizes`): the top third of sizes is
/// large, the bottom third small, the rest middle; a step tied in size with a
/// larger tier joins that tier.
std::vector<SizeTier> size_tiers(std::span<const std::size_t> step_sizes);

TierAccuracies group_by_task_size(const Tallies& final_tallies, const StreamProtocol& protocol);

MetricsReport summarize(std::vector<StepRecord> records, const StreamProtocol& protocol);

/// Metrics CSV: per-step rows then the summary block, 6 decimal places.
void write_metrics_csv(std::ostream& out, const MetricsReport& report);

}  // namespace dime
