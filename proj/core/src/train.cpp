// SPDX-License-Identifier: Apache-2.0

#include "dime/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>

#include "dime/rng.hpp"

namespace dime {

namespace {

constexpr double kDivergenceLoss = 1e6;

std::string diverged_message(int epoch, std::size_t batch, double loss) {
  std::ostringstream msg;
  msg << "train_task: loss diverged to " << loss << " at epoch " << epoch << ", batch " << batch;
  return msg.str();
}

Gradients zero_gradients(const AdapterParams& a, const ClassifierHead& h) {
  Gradients g;
  g.w_down = Matrix(a.w_down.rows(), a.w_down.cols());
  g.w_up = Matrix(a.w_up.rows(), a.w_up.cols());
  g.ln_gain.assign(a.ln_gain.size(), 0.0);
  g.ln_bias.assign(a.ln_bias.size(), 0.0);
  g.head_weight = Matrix(h.weight.rows(), h.weight.cols());
  g.head_bias.assign(h.bias.size(), 0.0);
  return g;
}

std::vector<std::size_t> task_rows(const ClassifierHead& head, std::span<const ClassId> task_classes) {
  std::vector<std::size_t> rows;
  rows.reserve(task_classes.size());
  for (ClassId c : task_classes) {
    const auto row = head.row_of(c);
    if (!row) {
      throw std::invalid_argument("task class " + std::to_string(c) + " has no head row");
    }
    rows.push_back(*row);
  }
  return rows;
}

}  // namespace

double ClassPriors::at(ClassId id) const {
  const auto it = pi.find(id);
  if (it == pi.end()) throw std::invalid_argument("ClassPriors: no prior for class " + std::to_string(id));
  return it->second;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("TrainConfig: learning_rate must be positive");
  if (epochs < 0) throw std::invalid_argument("TrainConfig: epochs must be nonnegative");
  if (batch_size == 0) throw std::invalid_argument("TrainConfig: batch_size must be positive");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("TrainConfig: weight_decay must be nonnegative");
}

TrainingDiverged::TrainingDiverged(int epoch, std::size_t batch, double loss)
    : std::runtime_error(diverged_message(epoch, batch, loss)), epoch_(epoch), batch_(batch) {}

ClassPriors class_priors(std::span<const ClassId> labels) {
  if (labels.empty()) throw std::invalid_argument("class_priors: empty label list");
  std::map<ClassId, std::size_t> counts;
  for (ClassId c : labels) ++counts[c];
  ClassPriors priors;
  const double total = static_cast<double>(labels.size());
  for (const auto& [c, n] : counts) priors.pi[c] = static_cast<double>(n) / total;
  return priors;
}

Vector balanced_logits(std::span<const double> z, const ClassPriors& priors,
                       std::span<const ClassId> class_order) {
  if (z.size() != class_order.size()) {
    throw std::invalid_argument("balanced_logits: " + std::to_string(z.size()) + " logits for " +
                                std::to_string(class_order.size()) + " classes");
  }
  Vector out(z.size());
  for (std::size_t k = 0; k < z.size(); ++k) out[k] = z[k] + std::log(priors.at(class_order[k]));
  return out;
}

LossAndGradients loss_and_gradients_on_features(const AdapterParams& adapter,
                                                const ClassifierHead& head,
                                                std::span<const Vector> features,
                                                std::span<const ClassId> labels,
                                                const ClassPriors& priors,
                                                std::span<const ClassId> task_classes,
                                                bool use_bsm) {
  if (features.empty()) throw std::invalid_argument("loss_and_gradients: empty batch");
  if (features.size() != labels.size()) throw std::invalid_argument("loss_and_gradients: label count mismatch");
  if (task_classes.empty()) throw std::invalid_argument("loss_and_gradients: no task classes");

  const std::vector<std::size_t> rows = task_rows(head, task_classes);
  const std::size_t k_classes = rows.size();
  const std::size_t d = adapter.feature_dim();
  const std::size_t hidden = adapter.hidden_dim();

  Vector log_prior(k_classes, 0.0);
  if (use_bsm) {
    for (std::size_t k = 0; k < k_classes; ++k) log_prior[k] = std::log(priors.at(task_classes[k]));
  }

  LossAndGradients out;
  out.grads = zero_gradients(adapter, head);
  out.grads.head_rows = rows;
  Gradients& g = out.grads;

  Vector logits(k_classes);
  Vector dlogits(k_classes);
  Vector dfeat(d);
  Vector dhidden(hidden);
  Vector dpre(hidden);
  Vector dln(d);
  double total_loss = 0.0;

  for (std::size_t s = 0; s < features.size(); ++s) {
    const auto target_it = std::ranges::find(task_classes, labels[s]);
    if (target_it == task_classes.end()) {
      throw std::invalid_argument("loss_and_gradients: label " + std::to_string(labels[s]) +
                                  " is not a task class");
    }
    const auto target = static_cast<std::size_t>(target_it - task_classes.begin());

    const AdapterTrace t = adapter_forward_traced(adapter, features[s]);

    for (std::size_t k = 0; k < k_classes; ++k) {
      auto w = head.weight.row(rows[k]);
      double z = head.bias[rows[k]];
      for (std::size_t i = 0; i < d; ++i) z += w[i] * t.output[i];
      logits[k] = z + log_prior[k];
    }
    const double zmax = *std::ranges::max_element(logits);
    double denom = 0.0;
    for (std::size_t k = 0; k < k_classes; ++k) {
      dlogits[k] = std::exp(logits[k] - zmax);
      denom += dlogits[k];
    }
    const double log_denom = std::log(denom);
    total_loss += -(logits[target] - zmax - log_denom);
    for (std::size_t k = 0; k < k_classes; ++k) dlogits[k] /= denom;
    dlogits[target] -= 1.0;

    // Head rows and gradient w.r.t. adapter output.
    std::ranges::fill(dfeat, 0.0);
    for (std::size_t k = 0; k < k_classes; ++k) {
      const double dz = dlogits[k];
      auto gw = g.head_weight.row(rows[k]);
      auto w = head.weight.row(rows[k]);
      for (std::size_t i = 0; i < d; ++i) {
        gw[i] += dz * t.output[i];
        dfeat[i] += dz * w[i];
      }
      g.head_bias[rows[k]] += dz;
    }

    // out = x + scale * w_up * gelu(pre).
    std::ranges::fill(dhidden, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
      const double du = adapter.scale * dfeat[i];
      if (du == 0.0) continue;
      auto gup = g.w_up.row(i);
      auto up = adapter.w_up.row(i);
      for (std::size_t j = 0; j < hidden; ++j) {
        gup[j] += du * t.hidden[j];
        dhidden[j] += du * up[j];
      }
    }
    for (std::size_t j = 0; j < hidden; ++j) dpre[j] = dhidden[j] * gelu_derivative(t.pre_activation[j]);

    // pre = w_down * ln_out.
    std::ranges::fill(dln, 0.0);
    for (std::size_t j = 0; j < hidden; ++j) {
      const double dp = dpre[j];
      if (dp == 0.0) continue;
      auto gdown = g.w_down.row(j);
      auto down = adapter.w_down.row(j);
      for (std::size_t i = 0; i < d; ++i) {
        gdown[i] += dp * t.ln_out[i];
        dln[i] += dp * down[i];
      }
    }
    for (std::size_t i = 0; i < d; ++i) {
      g.ln_gain[i] += dln[i] * t.normalized[i];
      g.ln_bias[i] += dln[i];
    }
  }

  const double inv_n = 1.0 / static_cast<double>(features.size());
  out.loss = total_loss * inv_n;
  for (double& v : g.w_down.data()) v *= inv_n;
  for (double& v : g.w_up.data()) v *= inv_n;
  for (double& v : g.ln_gain) v *= inv_n;
  for (double& v : g.ln_bias) v *= inv_n;
  for (double& v : g.head_weight.data()) v *= inv_n;
  for (double& v : g.head_bias) v *= inv_n;

  if (!std::isfinite(out.loss)) {
    throw std::runtime_error("loss_and_gradients: non-finite loss over a batch of " +
                             std::to_string(features.size()));
  }
  return out;
}

LossAndGradients loss_and_gradients(const ModelState& state, std::span<const Sample> batch,
                                    const ClassPriors& priors,
                                    std::span<const ClassId> task_classes, bool use_bsm) {
  std::vector<Vector> features;
  std::vector<ClassId> labels;
  features.reserve(batch.size());
  labels.reserve(batch.size());
  for (const Sample& s : batch) {
    features.push_back(backbone_forward(state.backbone, s.x));
    labels.push_back(s.label);
  }
  return loss_and_gradients_on_features(state.adapter, state.head, features, labels, priors,
                                        task_classes, use_bsm);
}

void sgd_step(AdapterParams& adapter, ClassifierHead& head, const Gradients& grads, double lr,
              double weight_decay) {
  if (!grads.w_down.same_shape(adapter.w_down) || !grads.w_up.same_shape(adapter.w_up) ||
      grads.ln_gain.size() != adapter.ln_gain.size() ||
      grads.ln_bias.size() != adapter.ln_bias.size() ||
      !grads.head_weight.same_shape(head.weight) || grads.head_bias.size() != head.bias.size()) {
    throw std::invalid_argument("sgd_step: gradient shapes do not match parameters");
  }
  const auto decayed = [&](std::span<double> p, std::span<const double> g) {
    for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * (g[i] + weight_decay * p[i]);
  };
  const auto plain = [&](std::span<double> p, std::span<const double> g) {
    for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * g[i];
  };
  decayed(adapter.w_down.data(), grads.w_down.data());
  decayed(adapter.w_up.data(), grads.w_up.data());
  plain(adapter.ln_gain, grads.ln_gain);
  plain(adapter.ln_bias, grads.ln_bias);
  for (std::size_t r : grads.head_rows) {
    if (r >= head.num_classes()) throw std::invalid_argument("sgd_step: head row out of range");
    decayed(head.weight.row(r), grads.head_weight.row(r));
    head.bias[r] -= lr * grads.head_bias[r];
  }
}

TrainResult train_task(const BackboneSpec& backbone, AdapterParams adapter, ClassifierHead& head,
                       std::span<const Sample> data, std::span<const ClassId> task_classes,
                       const TrainConfig& cfg) {
  cfg.validate();
  adapter.validate();
  if (data.empty()) throw std::invalid_argument("train_task: empty training set");
  (void)task_rows(head, task_classes);

  std::vector<Vector> features;
  std::vector<ClassId> labels;
  features.reserve(data.size());
  labels.reserve(data.size());
  for (const Sample& s : data) {
    if (std::ranges::find(task_classes, s.label) == task_classes.end()) {
      throw std::invalid_argument("train_task: label " + std::to_string(s.label) +
                                  " is not a task class");
    }
    features.push_back(backbone_forward(backbone, s.x));
    labels.push_back(s.label);
  }
  const ClassPriors priors = class_priors(labels);

  TrainResult result;
  std::vector<std::size_t> order(data.size());
  std::vector<Vector> batch_features;
  std::vector<ClassId> batch_labels;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(cfg.seed, seed_purpose::kShuffle, static_cast<std::uint64_t>(epoch)));
    fisher_yates(std::span<std::size_t>(order), rng);

    double epoch_loss = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_index) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      batch_features.clear();
      batch_labels.clear();
      for (std::size_t i = start; i < stop; ++i) {
        batch_features.push_back(features[order[i]]);
        batch_labels.push_back(labels[order[i]]);
      }
      LossAndGradients lg;
      try {
        lg = loss_and_gradients_on_features(adapter, head, batch_features, batch_labels, priors,
                                            task_classes, cfg.use_balanced_softmax);
      } catch (const std::runtime_error&) {
        throw TrainingDiverged(epoch, batch_index, std::numeric_limits<double>::quiet_NaN());
      }
      if (!std::isfinite(lg.loss) || lg.loss > kDivergenceLoss) {
        throw TrainingDiverged(epoch, batch_index, lg.loss);
      }
      result.trace.push_back({epoch, batch_index, lg.loss});
      epoch_loss += lg.loss * static_cast<double>(stop - start);
      sgd_step(adapter, head, lg.grads, cfg.learning_rate, cfg.weight_decay);
    }
    result.final_epoch_loss = epoch_loss / static_cast<double>(order.size());
  }
  result.adapter = std::move(adapter);
  return result;
}

}  // namespace dime
