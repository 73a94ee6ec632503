// SPDX-License-Identifier: Apache-2.0

#include "dime/adapter.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "dime/rng.hpp"

namespace dime {

namespace {

// Scale of the frozen backbone offset.
constexpr double kBackboneOffsetStd = 0.1;

void require_length(std::span<const double> v, std::size_t n, const char* what) {
  if (v.size() != n) {
    throw std::invalid_argument(std::string(what) + ": expected length " + std::to_string(n) +
                                ", got " + std::to_string(v.size()));
  }
}

}  // namespace

BackboneSpec BackboneSpec::create(std::size_t input_dim, std::size_t feature_dim,
                                  std::uint64_t seed) {
  if (input_dim == 0 || feature_dim == 0) {
    throw std::invalid_argument("BackboneSpec: dimensions must be positive");
  }
  BackboneSpec spec;
  spec.input_dim = input_dim;
  spec.feature_dim = feature_dim;
  spec.seed = seed;
  Rng rng(derive_seed(seed, seed_purpose::kBackbone));
  spec.projection = Matrix(feature_dim, input_dim);
  const double std_dev = 1.0 / std::sqrt(static_cast<double>(input_dim));
  for (double& v : spec.projection.data()) v = std_dev * standard_normal(rng);
  spec.offset.resize(feature_dim);
  for (double& v : spec.offset) v = kBackboneOffsetStd * standard_normal(rng);
  return spec;
}

void AdapterParams::validate() const {
  const std::size_t d = w_down.cols();
  const std::size_t h = w_down.rows();
  if (d == 0 || h == 0) throw std::invalid_argument("AdapterParams: empty projection");
  if (h >= d) {
    throw std::invalid_argument("AdapterParams: hidden width " + std::to_string(h) +
                                " must be smaller than feature width " + std::to_string(d));
  }
  if (w_up.rows() != d || w_up.cols() != h) {
    throw std::invalid_argument("AdapterParams: w_up must be " + std::to_string(d) + "x" +
                                std::to_string(h));
  }
  if (ln_gain.size() != d || ln_bias.size() != d) {
    throw std::invalid_argument("AdapterParams: layer-norm terms must have length " +
                                std::to_string(d));
  }
  require_finite(w_down, "AdapterParams.w_down");
  require_finite(w_up, "AdapterParams.w_up");
  require_finite(ln_gain, "AdapterParams.ln_gain");
  require_finite(ln_bias, "AdapterParams.ln_bias");
  if (!std::isfinite(scale)) throw std::invalid_argument("AdapterParams: non-finite scale");
}

bool AdapterParams::same_architecture(const AdapterParams& other) const noexcept {
  return w_down.same_shape(other.w_down) && w_up.same_shape(other.w_up) &&
         ln_gain.size() == other.ln_gain.size() && ln_bias.size() == other.ln_bias.size();
}

AdapterParams init_adapter(std::size_t feature_dim, std::size_t hidden_dim, double scale,
                           std::uint64_t seed) {
  AdapterParams a;
  a.w_down = Matrix(hidden_dim, feature_dim);
  a.w_up = Matrix(feature_dim, hidden_dim);
  a.ln_gain.assign(feature_dim, 1.0);
  a.ln_bias.assign(feature_dim, 0.0);
  a.scale = scale;
  Rng rng(derive_seed(seed, seed_purpose::kAdapterInit));
  const double std_dev = 1.0 / std::sqrt(static_cast<double>(feature_dim));
  for (double& v : a.w_down.data()) v = std_dev * standard_normal(rng);
  a.validate();
  return a;
}

AdapterParams fresh_task_adapter(const AdapterParams& base, std::uint64_t seed) {
  AdapterParams a = init_adapter(base.feature_dim(), base.hidden_dim(), base.scale, seed);
  a.ln_gain = base.ln_gain;
  a.ln_bias = base.ln_bias;
  return a;
}

std::optional<std::size_t> ClassifierHead::row_of(ClassId id) const noexcept {
  const auto it = std::ranges::find(class_ids, id);
  if (it == class_ids.end()) return std::nullopt;
  return static_cast<std::size_t>(it - class_ids.begin());
}

void ClassifierHead::add_classes(std::span<const ClassId> ids) {
  std::vector<ClassId> fresh;
  for (ClassId id : ids) {
    if (!row_of(id) && std::ranges::find(fresh, id) == fresh.end()) fresh.push_back(id);
  }
  if (fresh.empty()) return;
  const std::size_t d = weight.cols();
  std::vector<double> data(weight.data().begin(), weight.data().end());
  data.resize(data.size() + fresh.size() * d, 0.0);
  weight = Matrix(class_ids.size() + fresh.size(), d, std::move(data));
  bias.resize(bias.size() + fresh.size(), 0.0);
  class_ids.insert(class_ids.end(), fresh.begin(), fresh.end());
}

void ClassifierHead::validate() const {
  if (weight.rows() != class_ids.size() || bias.size() != class_ids.size()) {
    throw std::invalid_argument("ClassifierHead: row count does not match class ids");
  }
  std::vector<ClassId> sorted = class_ids;
  std::ranges::sort(sorted);
  if (std::ranges::adjacent_find(sorted) != sorted.end()) {
    throw std::invalid_argument("ClassifierHead: duplicate class id");
  }
}

void ModelState::validate() const {
  adapter.validate();
  head.validate();
  if (adapter.feature_dim() != backbone.feature_dim) {
    throw std::invalid_argument("ModelState: adapter width does not match backbone features");
  }
  if (head.feature_dim() != backbone.feature_dim) {
    throw std::invalid_argument("ModelState: head width does not match backbone features");
  }
}

Vector backbone_forward(const BackboneSpec& spec, std::span<const double> x) {
  require_length(x, spec.input_dim, "backbone_forward");
  require_finite(x, "backbone_forward");
  Vector f = matvec(spec.projection, x);
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = std::tanh(f[i] + spec.offset[i]);
  return f;
}

Vector layer_norm(std::span<const double> x, std::span<const double> gain,
                  std::span<const double> bias) {
  if (x.size() < 2) throw std::invalid_argument("layer_norm: need at least 2 features");
  require_length(gain, x.size(), "layer_norm gain");
  require_length(bias, x.size(), "layer_norm bias");
  const double n = static_cast<double>(x.size());
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= n;
  const double inv_std = 1.0 / std::sqrt(var + kLayerNormEpsilon);
  Vector out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - mean) * inv_std * gain[i] + bias[i];
  return out;
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;
}  // namespace

double gelu(double u) noexcept {
  return 0.5 * u * (1.0 + std::tanh(kGeluC * (u + kGeluA * u * u * u)));
}

double gelu_derivative(double u) noexcept {
  const double inner = kGeluC * (u + kGeluA * u * u * u);
  const double t = std::tanh(inner);
  const double dinner = kGeluC * (1.0 + 3.0 * kGeluA * u * u);
  return 0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * dinner;
}

AdapterTrace adapter_forward_traced(const AdapterParams& a, std::span<const double> x) {
  const std::size_t d = a.feature_dim();
  require_length(x, d, "adapter_forward");
  if (d < 2) throw std::invalid_argument("adapter_forward: need at least 2 features");
  AdapterTrace t;
  t.input.assign(x.begin(), x.end());

  const double n = static_cast<double>(d);
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= n;
  t.inv_std = 1.0 / std::sqrt(var + kLayerNormEpsilon);
  t.normalized.resize(d);
  t.ln_out.resize(d);
  for (std::size_t i = 0; i < d; ++i) {
    t.normalized[i] = (x[i] - mean) * t.inv_std;
    t.ln_out[i] = t.normalized[i] * a.ln_gain[i] + a.ln_bias[i];
  }

  t.pre_activation = matvec(a.w_down, t.ln_out);
  t.hidden.resize(t.pre_activation.size());
  for (std::size_t k = 0; k < t.hidden.size(); ++k) t.hidden[k] = gelu(t.pre_activation[k]);

  const Vector up = matvec(a.w_up, t.hidden);
  t.output.resize(d);
  for (std::size_t i = 0; i < d; ++i) t.output[i] = x[i] + a.scale * up[i];
  return t;
}

Vector adapter_forward(const AdapterParams& a, std::span<const double> x) {
  return adapter_forward_traced(a, x).output;
}

Vector head_forward(const ClassifierHead& h, std::span<const double> features) {
  require_length(features, h.feature_dim(), "head_forward");
  Vector z = matvec(h.weight, features);
  for (std::size_t i = 0; i < z.size(); ++i) z[i] += h.bias[i];
  return z;
}

std::size_t argmax(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("argmax: empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

ClassId predict(const ModelState& m, std::span<const double> x) {
  if (m.head.num_classes() == 0) throw std::invalid_argument("predict: empty classifier head");
  const Vector features = adapter_forward(m.adapter, backbone_forward(m.backbone, x));
  return m.head.class_ids[argmax(head_forward(m.head, features))];
}

}  // namespace dime
