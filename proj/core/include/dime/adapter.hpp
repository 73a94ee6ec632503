// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "dime/matrix.hpp"

namespace dime {

using ClassId = std::int32_t;

inline constexpr double kLayerNormEpsilon = 1e-5;

/// One labelled raw input.
struct Sample {
  Vector x;
  ClassId label = 0;

  friend bool operator==(const Sample&, const Sample&) = default;
};

/// Frozen feature extractor: tanh(projection * x + offset).
///
/// Projection and offset are a pure function of (input_dim, feature_dim, seed).
struct BackboneSpec {
  std::size_t input_dim = 0;
  std::size_t feature_dim = 0;
  std::uint64_t seed = 0;
  Matrix projection;  // feature_dim x input_dim
  Vector offset;      // feature_dim

  static BackboneSpec create(std::size_t input_dim, std::size_t feature_dim, std::uint64_t seed);
};

/// One residual bottleneck adapter:
///   out = x + scale * w_up * gelu(w_down * LN(x)).
struct AdapterParams {
  Matrix w_down;  // hidden x feature
  Matrix w_up;    // feature x hidden
  Vector ln_gain;
  Vector ln_bias;
  double scale = 1.0;

  std::size_t feature_dim() const noexcept { return w_down.cols(); }
  std::size_t hidden_dim() const noexcept { return w_down.rows(); }
  std::size_t parameter_count() const noexcept {
    return w_down.size() + w_up.size() + ln_gain.size() + ln_bias.size();
  }
  /// Throws std::invalid_argument on inconsistent shapes, a non-bottleneck
  /// hidden width, or non-finite entries.
  void validate() const;
  bool same_architecture(const AdapterParams& other) const noexcept;

  friend bool operator==(const AdapterParams&, const AdapterParams&) = default;
};

/// w_down ~ N(0, 1/feature_dim), w_up = 0, unit LN gain, zero LN bias.
AdapterParams init_adapter(std::size_t feature_dim, std::size_t hidden_dim, double scale,
                           std::uint64_t seed);

/// Task adapter for a new step: LN terms copied from `base`, fresh projections.
AdapterParams fresh_task_adapter(const AdapterParams& base, std::uint64_t seed);

/// Growing linear head over every class seen so far; one row per class.
struct ClassifierHead {
  Matrix weight;  // num_classes x feature_dim
  Vector bias;
  std::vector<ClassId> class_ids;

  explicit ClassifierHead(std::size_t feature_dim = 0) : weight(0, feature_dim) {}

  std::size_t num_classes() const noexcept { return class_ids.size(); }
  std::size_t feature_dim() const noexcept { return weight.cols(); }
  std::optional<std::size_t> row_of(ClassId id) const noexcept;

  /// Appends zero-initialised rows for ids not yet present.
  void add_classes(std::span<const ClassId> ids);
  void validate() const;
};

struct ModelState {
  BackboneSpec backbone;
  AdapterParams adapter;
  ClassifierHead head;

  /// The state carries a single merged adapter by construction.
  static constexpr std::size_t adapter_count() noexcept { return 1; }
  void validate() const;
};

Vector backbone_forward(const BackboneSpec& spec, std::span<const double> x);

/// Population-variance layer normalisation with kLayerNormEpsilon.
Vector layer_norm(std::span<const double> x, std::span<const double> gain,
                  std::span<const double> bias);

double gelu(double u) noexcept;
double gelu_derivative(double u) noexcept;

Vector adapter_forward(const AdapterParams& a, std::span<const double> x);

/// Intermediate values of one adapter pass, kept for backpropagation.
struct AdapterTrace {
  Vector input;
  Vector normalized;  // (x - mean) / sqrt(var + eps)
  double inv_std = 0.0;
  Vector ln_out;
  Vector pre_activation;
  Vector hidden;
  Vector output;
};

AdapterTrace adapter_forward_traced(const AdapterParams& a, std::span<const double> x);

Vector head_forward(const ClassifierHead& h, std::span<const double> features);

/// Index of the maximum entry; the lowest index wins ties.
std::size_t argmax(std::span<const double> v);

ClassId predict(const ModelState& m, std::span<const double> x);

}  // namespace dime
