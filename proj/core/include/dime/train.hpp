// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <vector>

#include "dime/adapter.hpp"

namespace dime {

/// Empirical class frequencies of one task's training labels.
struct ClassPriors {
  std::map<ClassId, double> pi;

  double at(ClassId id) const;
};

struct TrainConfig {
  double learning_rate = 0.07;
  int epochs = 20;
  std::size_t batch_size = 16;
  double weight_decay = 5e-4;
  bool use_balanced_softmax = true;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Gradient bundle shaped like the trainable parameters. Head gradients are
/// full-head shaped; only `head_rows` are nonzero and trainable.
struct Gradients {
  Matrix w_down;
  Matrix w_up;
  Vector ln_gain;
  Vector ln_bias;
  Matrix head_weight;
  Vector head_bias;
  std::vector<std::size_t> head_rows;
};

struct LossAndGradients {
  double loss = 0.0;
  Gradients grads;
};

struct LossRecord {
  int epoch = 0;
  std::size_t batch = 0;
  double loss = 0.0;
};

struct TrainResult {
  AdapterParams adapter;
  std::vector<LossRecord> trace;
  double final_epoch_loss = 0.0;
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(int epoch, std::size_t batch, double loss);
  int epoch() const noexcept { return epoch_; }
  std::size_t batch() const noexcept { return batch_; }

 private:
  int epoch_;
  std::size_t batch_;
};

ClassPriors class_priors(std::span<const ClassId> labels);

/// z_y + log(pi_y) for each class in `class_order`.
Vector balanced_logits(std::span<const double> z, const ClassPriors& priors,
                       std::span<const ClassId> class_order);

/// Mean cross-entropy over the batch on logits restricted to `task_classes`
/// (prior-adjusted when `use_bsm`), with exact gradients for the adapter and
/// the task rows of the head. The backbone and other head rows get none.
LossAndGradients loss_and_gradients(const ModelState& state, std::span<const Sample> batch,
                                    const ClassPriors& priors,
                                    std::span<const ClassId> task_classes, bool use_bsm);

/// Same as loss_and_gradients on precomputed backbone features.
LossAndGradients loss_and_gradients_on_features(const AdapterParams& adapter,
                                                const ClassifierHead& head,
                                                std::span<const Vector> features,
                                                std::span<const ClassId> labels,
                                                const ClassPriors& priors,
                                                std::span<const ClassId> task_classes,
                                                bool use_bsm);

/// p <- p - lr * (g + weight_decay * p). Weight decay covers the adapter
/// projections and head weights; layer-norm terms and biases are not decayed.
/// Head rows outside grads.head_rows are untouched.
void sgd_step(AdapterParams& adapter, ClassifierHead& head, const Gradients& grads, double lr,
              double weight_decay);

/// Trains `adapter` and the task rows of `head` on one task. The head must
/// already contain every class of `task_classes`.
TrainResult train_task(const BackboneSpec& backbone, AdapterParams adapter, ClassifierHead& head,
                       std::span<const Sample> data, std::span<const ClassId> task_classes,
                       const TrainConfig& cfg);

}  // namespace dime
