// SPDX-License-Identifier: Apache-2.0

#include "dime/spectral_merge.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace dime {

void MergeConfig::validate() const {
  if (c_new == 0) throw std::invalid_argument("MergeConfig: c_new must be positive");
  if (!(head_ratio > 0.0 && head_ratio <= 1.0)) {
    throw std::invalid_argument("MergeConfig: head_ratio must lie in (0, 1]");
  }
  if (!(gamma_head >= 0.0 && gamma_head <= 1.0) || !(gamma_tail >= 0.0 && gamma_tail <= 1.0)) {
    throw std::invalid_argument("MergeConfig: gamma gains must lie in [0, 1]");
  }
}

MergeWeights class_count_weights(std::size_t c_old, std::size_t c_new) {
  const std::size_t total = c_old + c_new;
  if (total == 0) throw std::invalid_argument("class_count_weights: both class counts are zero");
  const double t = static_cast<double>(total);
  return {static_cast<double>(c_old) / t, static_cast<double>(c_new) / t};
}

std::pair<Matrix, Matrix> split_coefficients(const Matrix& vt, std::size_t left_cols) {
  if (left_cols == 0 || left_cols >= vt.cols()) {
    throw std::invalid_argument("split_coefficients: left_cols " + std::to_string(left_cols) +
                                " must lie in [1, " + std::to_string(vt.cols()) + ")");
  }
  return split_columns(vt, left_cols);
}

Matrix blend_coefficients(const Matrix& vb_t, const Matrix& vt_t, const MergeWeights& w) {
  if (!vb_t.same_shape(vt_t)) throw std::invalid_argument("blend_coefficients: shape mismatch");
  Matrix out(vb_t.rows(), vb_t.cols());
  auto o = out.data();
  auto b = vb_t.data();
  auto t = vt_t.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = w.base * b[i] + w.task * t[i];
  return out;
}

GatingMask make_gating_mask(std::size_t r, const MergeConfig& cfg) {
  if (r == 0) throw std::invalid_argument("make_gating_mask: rank must be positive");
  cfg.validate();
  const auto floored = static_cast<std::size_t>(std::floor(cfg.head_ratio * static_cast<double>(r)));
  GatingMask mask;
  mask.head_rank = std::min(r, std::max<std::size_t>(1, floored));
  mask.gains.assign(r, cfg.gamma_tail);
  for (std::size_t i = 0; i < mask.head_rank; ++i) mask.gains[i] = cfg.gamma_head;
  return mask;
}

Matrix apply_gated_update(const Matrix& vb_t, const Matrix& v_blend_t, const GatingMask& mask) {
  if (!vb_t.same_shape(v_blend_t)) throw std::invalid_argument("apply_gated_update: shape mismatch");
  if (mask.gains.size() != vb_t.rows()) {
    throw std::invalid_argument("apply_gated_update: mask length " +
                                std::to_string(mask.gains.size()) + " vs " +
                                std::to_string(vb_t.rows()) + " rows");
  }
  Matrix out(vb_t.rows(), vb_t.cols());
  for (std::size_t i = 0; i < vb_t.rows(); ++i) {
    // Convex form of base + g * (blend - base): exact at g = 0 and g = 1.
    const double g = mask.gains[i];
    auto base = vb_t.row(i);
    auto blend = v_blend_t.row(i);
    auto dst = out.row(i);
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] = (1.0 - g) * base[j] + g * blend[j];
  }
  return out;
}

MergeTrace merge_matrix_traced(const Matrix& m_base, const Matrix& m_new, const MergeConfig& cfg) {
  if (!m_base.same_shape(m_new)) {
    throw std::invalid_argument("merge_matrix: base " + std::to_string(m_base.rows()) + "x" +
                                std::to_string(m_base.cols()) + " vs new " +
                                std::to_string(m_new.rows()) + "x" + std::to_string(m_new.cols()));
  }
  cfg.validate();
  require_finite(m_base, "merge_matrix base");
  require_finite(m_new, "merge_matrix new");

  MergeTrace t;
  t.joint = thin_svd(concat_columns(m_base, m_new));
  auto [vb, vn] = split_coefficients(t.joint.vt, m_base.cols());
  t.vb_t = std::move(vb);
  t.vt_t = std::move(vn);
  t.weights = class_count_weights(cfg.c_old, cfg.c_new);
  t.v_blend_t = blend_coefficients(t.vb_t, t.vt_t, t.weights);
  t.mask = make_gating_mask(t.joint.rank(), cfg);
  t.v_final_t = apply_gated_update(t.vb_t, t.v_blend_t, t.mask);
  t.merged = reconstruct(SvdFactors{t.joint.u, t.joint.sigma, t.v_final_t});
  return t;
}

Matrix merge_matrix(const Matrix& m_base, const Matrix& m_new, const MergeConfig& cfg) {
  return merge_matrix_traced(m_base, m_new, cfg).merged;
}

Vector merge_vector(std::span<const double> v_base, std::span<const double> v_new,
                    const MergeConfig& cfg) {
  if (v_base.size() != v_new.size()) {
    throw std::invalid_argument("merge_vector: length mismatch " + std::to_string(v_base.size()) +
                                " vs " + std::to_string(v_new.size()));
  }
  const MergeWeights w = class_count_weights(cfg.c_old, cfg.c_new);
  Vector out(v_base.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = w.base * v_base[i] + w.task * v_new[i];
  return out;
}

AdapterParams merge_adapter(const AdapterParams& base, const AdapterParams& fresh,
                            const MergeConfig& cfg) {
  if (!base.same_architecture(fresh)) {
    throw std::invalid_argument("merge_adapter: adapters have different architectures");
  }
  AdapterParams out;
  out.w_down = merge_matrix(base.w_down, fresh.w_down, cfg);
  out.w_up = merge_matrix(base.w_up, fresh.w_up, cfg);
  out.ln_gain = merge_vector(base.ln_gain, fresh.ln_gain, cfg);
  out.ln_bias = merge_vector(base.ln_bias, fresh.ln_bias, cfg);
  out.scale = base.scale;
  return out;
}

AdapterParams average_adapters(const AdapterParams& base, const AdapterParams& fresh) {
  if (!base.same_architecture(fresh)) {
    throw std::invalid_argument("average_adapters: adapters have different architectures");
  }
  const auto mean = [](std::span<const double> a, std::span<const double> b, std::span<double> out) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = 0.5 * a[i] + 0.5 * b[i];
  };
  AdapterParams out = base;
  mean(base.w_down.data(), fresh.w_down.data(), out.w_down.data());
  mean(base.w_up.data(), fresh.w_up.data(), out.w_up.data());
  mean(base.ln_gain, fresh.ln_gain, out.ln_gain);
  mean(base.ln_bias, fresh.ln_bias, out.ln_bias);
  return out;
}

}  // namespace dime
