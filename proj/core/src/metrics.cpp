// SPDX-License-Identifier: Apache-2.0

#include "dime/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>

namespace dime {

StepAccuracy step_accuracy(std::span<const Prediction> predictions) {
  if (predictions.empty()) throw std::invalid_argument("step_accuracy: no predictions");
  StepAccuracy out;
  std::size_t correct = 0;
  for (const Prediction& p : predictions) {
    ClassTally& t = out.per_class[p.truth];
    ++t.total;
    if (p.predicted == p.truth) {
      ++t.correct;
      ++correct;
    }
  }
  out.accuracy = static_cast<double>(correct) / static_cast<double>(predictions.size());
  return out;
}

double average_accuracy(std::span<const double> accuracies) {
  if (accuracies.empty()) throw std::invalid_argument("average_accuracy: no records");
  double sum = 0.0;
  for (double a : accuracies) sum += a;
  return sum / static_cast<double>(accuracies.size());
}

double average_accuracy(std::span<const StepRecord> records) {
  std::vector<double> acc;
  acc.reserve(records.size());
  for (const StepRecord& r : records) acc.push_back(r.accuracy);
  return average_accuracy(acc);
}

double weighted_average_accuracy(std::span<const double> accuracies,
                                 std::span<const std::size_t> class_counts) {
  if (accuracies.empty()) throw std::invalid_argument("weighted_average_accuracy: no records");
  if (accuracies.size() != class_counts.size()) {
    throw std::invalid_argument("weighted_average_accuracy: " + std::to_string(accuracies.size()) +
                                " accuracies for " + std::to_string(class_counts.size()) + " steps");
  }
  if (std::ranges::find(class_counts, std::size_t{0}) != class_counts.end()) {
    throw std::invalid_argument("weighted_average_accuracy: zero class count");
  }
  const double t_steps = static_cast<double>(class_counts.size());
  const double total = static_cast<double>(
      std::accumulate(class_counts.begin(), class_counts.end(), std::size_t{0}));
  double num = 0.0;
  double den = 0.0;
  std::size_t seen = 0;
  for (std::size_t t = 0; t < accuracies.size(); ++t) {
    seen += class_counts[t];
    const double step = static_cast<double>(t + 1);
    const double w = static_cast<double>(seen) / (total * step / t_steps);
    num += w * accuracies[t];
    den += w;
  }
  return num / den;
}

std::vector<SizeTier> size_tiers(std::span<const std::size_t> step_sizes) {
  const std::size_t n = step_sizes.size();
  const std::size_t third = n / 3;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::ranges::stable_sort(order, [&](std::size_t a, std::size_t b) { return step_sizes[a] > step_sizes[b]; });

  std::vector<SizeTier> tier(n, SizeTier::kMiddle);
  for (std::size_t rank = 0; rank < n; ++rank) {
    if (rank < third) {
      tier[order[rank]] = SizeTier::kLarge;
    } else if (rank >= n - third) {
      tier[order[rank]] = SizeTier::kSmall;
    }
  }
  // Equal sizes share the larger tier.
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (step_sizes[i] == step_sizes[j] && tier[j] < tier[i]) tier[i] = tier[j];
    }
  }
  return tier;
}

TierAccuracies group_by_task_size(const Tallies& final_tallies, const StreamProtocol& protocol) {
  const auto tally_of = [&](const StepSpec& step, ClassTally& acc) {
    for (ClassId c : step.class_ids) {
      const auto it = final_tallies.find(c);
      if (it == final_tallies.end() || it->second.total == 0) {
        throw std::invalid_argument("group_by_task_size: no final tally for class " + std::to_string(c));
      }
      acc.correct += it->second.correct;
      acc.total += it->second.total;
    }
  };
  const auto ratio = [](const ClassTally& t) -> std::optional<double> {
    if (t.total == 0) return std::nullopt;
    return static_cast<double>(t.correct) / static_cast<double>(t.total);
  };

  const std::vector<std::size_t> sizes = protocol.step_sizes();
  TierAccuracies out;
  if (sizes.size() < 3) {
    // Too few steps for three tiers; only the middle tier is populated.
    ClassTally all;
    for (const StepSpec& s : protocol.steps) tally_of(s, all);
    out.middle = ratio(all);
    return out;
  }
  if (std::ranges::adjacent_find(sizes, std::ranges::not_equal_to{}) == sizes.end()) {
    ClassTally all;
    for (const StepSpec& s : protocol.steps) tally_of(s, all);
    out.large = out.middle = out.small = ratio(all);
    return out;
  }

  const std::vector<SizeTier> tiers = size_tiers(sizes);
  ClassTally large;
  ClassTally middle;
  ClassTally small;
  for (std::size_t t = 0; t < tiers.size(); ++t) {
    switch (tiers[t]) {
      case SizeTier::kLarge: tally_of(protocol.steps[t], large); break;
      case SizeTier::kMiddle: tally_of(protocol.steps[t], middle); break;
      case SizeTier::kSmall: tally_of(protocol.steps[t], small); break;
    }
  }
  out.large = ratio(large);
  out.middle = ratio(middle);
  out.small = ratio(small);
  return out;
}

MetricsReport summarize(std::vector<StepRecord> records, const StreamProtocol& protocol) {
  if (records.empty()) throw std::invalid_argument("summarize: no step records");
  if (records.size() != protocol.steps.size()) {
    throw std::invalid_argument("summarize: record count does not match protocol steps");
  }
  MetricsReport r;
  r.records = std::move(records);
  std::vector<double> acc;
  for (const StepRecord& s : r.records) acc.push_back(s.accuracy);
  r.a_final = acc.back();
  r.a_bar = average_accuracy(acc);
  r.wa_bar = weighted_average_accuracy(acc, protocol.step_sizes());
  r.tiers = group_by_task_size(r.records.back().per_class, protocol);
  return r;
}

namespace {

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string fixed6(const std::optional<double>& v) { return v ? fixed6(*v) : std::string("NA"); }

}  // namespace

void write_metrics_csv(std::ostream& out, const MetricsReport& report) {
  out << "step,acc,accum_classes\n";
  for (const StepRecord& r : report.records) {
    out << r.step_index << ',' << fixed6(r.accuracy) << ',' << r.accumulated_classes << '\n';
  }
  out << "A_T,Abar,wAbar,large,middle,small\n";
  out << fixed6(report.a_final) << ',' << fixed6(report.a_bar) << ',' << fixed6(report.wa_bar) << ','
      << fixed6(report.tiers.large) << ',' << fixed6(report.tiers.middle) << ','
      << fixed6(report.tiers.small) << '\n';
}

}  // namespace dime
