// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "dime/adapter.hpp"

namespace dime {

struct StepSpec {
  int step_index = 0;  // 1-based
  std::vector<ClassId> class_ids;
  std::vector<std::size_t> train_counts;  // parallel to class_ids

  friend bool operator==(const StepSpec&, const StepSpec&) = default;
};

struct StreamProtocol {
  std::size_t total_classes = 0;
  std::size_t num_steps = 0;
  double rho = 1.0;
  std::uint64_t permutation_seed = 0;
  std::vector<StepSpec> steps;

  std::vector<std::size_t> step_sizes() const;
  /// Throws std::logic_error if step class sets overlap or miss classes.
  void validate() const;

  friend bool operator==(const StreamProtocol&, const StreamProtocol&) = default;
};

struct SyntheticDataset {
  std::size_t input_dim = 0;
  double noise_scale = 1.0;
  double separation = 3.0;
  std::uint64_t seed = 0;
  std::vector<Vector> prototypes;  // indexed by class id
  std::vector<Sample> train;
  std::vector<Sample> test;

  friend bool operator==(const SyntheticDataset&, const SyntheticDataset&) = default;
};

struct StreamConfig {
  std::size_t total_classes = 40;
  std::size_t num_steps = 10;
  double rho = 0.01;
  double class_rho = 0.01;
  std::size_t n_max = 100;
  std::size_t input_dim = 24;
  double noise_scale = 1.0;
  double separation = 3.0;
  std::size_t test_per_class = 30;
  std::uint64_t seed = 0;
};

/// s_t = rho^((t-1)/(T-1)); a single step gets proportion 1.
std::vector<double> step_proportions(double rho, std::size_t t_steps);

/// Largest-remainder apportionment of `total_classes` with a floor of one
/// class per step.
std::vector<std::size_t> allocate_classes(std::span<const double> proportions,
                                          std::size_t total_classes);

std::vector<std::size_t> permute_steps(std::span<const std::size_t> counts, std::uint64_t seed);

/// Class of rank r gets max(1, round(n_max * class_rho^(r/(C-1)))).
std::vector<std::size_t> longtail_counts(std::size_t num_classes, std::size_t n_max,
                                         double class_rho);

struct Stream {
  StreamProtocol protocol;
  SyntheticDataset data;
};

Stream build_stream(const StreamConfig& cfg);

/// Training samples belonging to one step, in dataset order.
std::vector<Sample> step_train_samples(const Stream& s, const StepSpec& step);
/// Test samples of every class introduced up to and including `step_pos`
/// (0-based position in the protocol).
std::vector<Sample> accumulated_test_samples(const Stream& s, std::size_t step_pos);

/// One line per step: "step_index class_count class_ids...".
void write_protocol(std::ostream& out, const StreamProtocol& p);

}  // namespace dime
