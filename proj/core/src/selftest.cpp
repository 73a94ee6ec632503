// SPDX-License-Identifier: Apache-2.0

#include "dime/selftest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>

#include "dime/metrics.hpp"
#include "dime/rng.hpp"
#include "dime/spectral_merge.hpp"
#include "dime/stream.hpp"
#include "dime/svd.hpp"
#include "dime/train.hpp"

namespace dime {

namespace {

std::string sci(const char* label, double v) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%s %.3e", label, v);
  return buf;
}

Matrix gaussian(std::size_t r, std::size_t c, Rng& rng) {
  Matrix m(r, c);
  for (double& v : m.data()) v = standard_normal(rng);
  return m;
}

CheckResult check_svd() {
  Rng rng(101);
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    const std::size_t r = 1 + uniform_index(rng, 40);
    const std::size_t c = 1 + uniform_index(rng, 40);
    const Matrix a = gaussian(r, c, rng);
    const SvdFactors f = thin_svd(a);
    worst = std::max({worst, relative_error(reconstruct(f), a),
                      max_abs_deviation_from_identity(matmul(transpose(f.u), f.u)),
                      max_abs_deviation_from_identity(matmul(f.vt, transpose(f.vt)))});
  }
  return {"svd round trip", worst <= 1e-10, sci("max error", worst)};
}

CheckResult check_merge() {
  Rng rng(202);
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    const Matrix mb = gaussian(16, 48, rng);
    const Matrix mt = gaussian(16, 48, rng);
    MergeConfig cfg{30, 10, 0.3, 0.2, 0.9};
    worst = std::max(worst, relative_error(merge_matrix(mb, mb, cfg), mb));
    cfg.gamma_head = cfg.gamma_tail = 0.0;
    worst = std::max(worst, relative_error(merge_matrix(mb, mt, cfg), mb));
    cfg.gamma_head = cfg.gamma_tail = 1.0;
    worst = std::max(worst, relative_error(merge_matrix(mb, mt, cfg), add(scaled(mb, 0.75), scaled(mt, 0.25))));
  }
  return {"merge identities", worst <= 1e-8, sci("max error", worst)};
}

ModelState toy_state(Rng& rng) {
  ModelState s{BackboneSpec::create(4, 6, 7), init_adapter(6, 3, 0.8, 11), ClassifierHead(6)};
  for (double& v : s.adapter.w_up.data()) v = 0.5 * standard_normal(rng);
  for (double& v : s.adapter.ln_gain) v = 1.0 + 0.2 * standard_normal(rng);
  for (double& v : s.adapter.ln_bias) v = 0.2 * standard_normal(rng);
  const ClassId ids[] = {0, 1, 2};
  s.head.add_classes(ids);
  for (double& v : s.head.weight.data()) v = standard_normal(rng);
  for (double& v : s.head.bias) v = 0.3 * standard_normal(rng);
  return s;
}

std::vector<Sample> toy_batch(Rng& rng, std::size_t n) {
  std::vector<Sample> batch(n);
  for (std::size_t i = 0; i < n; ++i) {
    batch[i].x.resize(4);
    for (double& v : batch[i].x) v = standard_normal(rng);
    batch[i].label = static_cast<ClassId>(i % 3);
  }
  return batch;
}

CheckResult check_gradients() {
  Rng rng(303);
  ModelState s = toy_state(rng);
  const auto batch = toy_batch(rng, 7);
  const ClassId task[] = {0, 1, 2};
  ClassPriors priors{{{0, 0.6}, {1, 0.3}, {2, 0.1}}};
  const auto analytic = loss_and_gradients(s, batch, priors, task, true);

  const std::vector<std::pair<std::span<double>, std::span<const double>>> blocks = {
      {s.adapter.w_down.data(), analytic.grads.w_down.data()},
      {s.adapter.w_up.data(), analytic.grads.w_up.data()},
      {s.adapter.ln_gain, analytic.grads.ln_gain},
      {s.adapter.ln_bias, analytic.grads.ln_bias},
      {s.head.weight.data(), analytic.grads.head_weight.data()},
      {s.head.bias, analytic.grads.head_bias}};
  double worst = 0.0;
  const double h = 1e-5;
  for (const auto& [param, grad] : blocks) {
    for (std::size_t i = 0; i < param.size(); ++i) {
      const double saved = param[i];
      param[i] = saved + h;
      const double up = loss_and_gradients(s, batch, priors, task, true).loss;
      param[i] = saved - h;
      const double down = loss_and_gradients(s, batch, priors, task, true).loss;
      param[i] = saved;
      const double fd = (up - down) / (2 * h);
      worst = std::max(worst, std::fabs(grad[i] - fd) / std::max(std::fabs(fd), 1e-8));
    }
  }
  return {"gradient vs finite differences", worst <= 1e-4, sci("max relative error", worst)};
}

CheckResult check_bsm_degeneracy() {
  Rng rng(404);
  const ModelState s = toy_state(rng);
  const auto batch = toy_batch(rng, 9);
  const ClassId task[] = {0, 1, 2};
  const ClassPriors uniform{{{0, 1.0 / 3}, {1, 1.0 / 3}, {2, 1.0 / 3}}};
  const auto a = loss_and_gradients(s, batch, uniform, task, true);
  const auto b = loss_and_gradients(s, batch, uniform, task, false);
  double worst = std::fabs(a.loss - b.loss);
  const auto cmp = [&](std::span<const double> x, std::span<const double> y) {
    for (std::size_t i = 0; i < x.size(); ++i) worst = std::max(worst, std::fabs(x[i] - y[i]));
  };
  cmp(a.grads.w_down.data(), b.grads.w_down.data());
  cmp(a.grads.w_up.data(), b.grads.w_up.data());
  cmp(a.grads.ln_gain, b.grads.ln_gain);
  cmp(a.grads.ln_bias, b.grads.ln_bias);
  cmp(a.grads.head_weight.data(), b.grads.head_weight.data());
  cmp(a.grads.head_bias, b.grads.head_bias);
  return {"balanced softmax with uniform priors", worst <= 1e-12, sci("max difference", worst)};
}

CheckResult check_metrics() {
  const double acc[] = {0.9, 0.5};
  const std::size_t counts[] = {3, 1};
  const double hand = weighted_average_accuracy(acc, counts);
  const double eq_acc[] = {0.3, 0.8, 0.6, 0.7};
  const std::size_t eq_counts[] = {5, 5, 5, 5};
  const double gap = std::fabs(weighted_average_accuracy(eq_acc, eq_counts) - average_accuracy(eq_acc));
  const bool ok = std::fabs(hand - 0.74) <= 1e-12 && gap <= 1e-12;
  return {"weighted average accuracy", ok, sci("hand case", hand) + ", " + sci("equal-split gap", gap)};
}

CheckResult check_protocol() {
  bool ok = true;
  for (double rho : {1.0, 0.1, 0.01, 0.001}) {
    StreamConfig cfg;
    cfg.rho = rho;
    cfg.total_classes = 40;
    cfg.num_steps = 10;
    cfg.seed = 5;
    const auto props = step_proportions(rho, 10);
    ok = ok && props.front() == 1.0 && std::fabs(props.back() - rho) <= 1e-15;
    const auto alloc = allocate_classes(props, 40);
    auto permuted = permute_steps(alloc, 9);
    auto sorted_alloc = alloc;
    std::ranges::sort(sorted_alloc);
    std::ranges::sort(permuted);
    ok = ok && sorted_alloc == permuted;
    try {
      build_stream(cfg).protocol.validate();
    } catch (const std::exception&) {
      ok = false;
    }
  }
  return {"stream protocol", ok, ok ? "all rho values" : "violation found"};
}

}  // namespace

std::vector<CheckResult> run_selftest() {
  const std::vector<std::function<CheckResult()>> checks = {
      check_svd, check_merge, check_gradients, check_bsm_degeneracy, check_metrics, check_protocol};
  std::vector<CheckResult> out;
  for (const auto& check : checks) {
    try {
      out.push_back(check());
    } catch (const std::exception& e) {
      out.push_back({"check raised", false, e.what()});
    }
  }
  return out;
}

}  // namespace dime
