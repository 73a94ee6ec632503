// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <utility>

#include "dime/adapter.hpp"
#include "dime/matrix.hpp"
#include "dime/svd.hpp"

namespace dime {

/// Parameters of one base/new adapter merge.
struct MergeConfig {
  std::size_t c_old = 0;  // classes already learned by the base adapter
  std::size_t c_new = 1;  // classes introduced by the new adapter
  double head_ratio = 0.3;
  double gamma_head = 0.2;
  double gamma_tail = 0.9;

  void validate() const;
};

struct MergeWeights {
  double base = 0.0;
  double task = 0.0;
};

/// Rank-wise gains: the first head_rank entries carry gamma_head, the rest
/// gamma_tail.
struct GatingMask {
  Vector gains;
  std::size_t head_rank = 0;
};

/// w_b = c_old / (c_old + c_new), w_t = c_new / (c_old + c_new).
MergeWeights class_count_weights(std::size_t c_old, std::size_t c_new);

/// Splits V^T into the base block (first `left_cols` columns) and task block.
std::pair<Matrix, Matrix> split_coefficients(const Matrix& vt, std::size_t left_cols);

Matrix blend_coefficients(const Matrix& vb_t, const Matrix& vt_t, const MergeWeights& w);

/// head_rank = max(1, floor(head_ratio * r)).
GatingMask make_gating_mask(std::size_t r, const MergeConfig& cfg);

/// vb_t + diag(gains) * (v_blend_t - vb_t), one gain per row.
Matrix apply_gated_update(const Matrix& vb_t, const Matrix& v_blend_t, const GatingMask& mask);

/// Intermediate quantities of a merge, exposed for inspection and tests.
struct MergeTrace {
  SvdFactors joint;  // SVD of [m_base m_new]
  Matrix vb_t;
  Matrix vt_t;
  Matrix v_blend_t;
  Matrix v_final_t;
  GatingMask mask;
  MergeWeights weights;
  Matrix merged;
};

/// Aligns both matrices in the SVD basis of their column concatenation,
/// blends the coefficient blocks by class counts, gates the update per rank
/// and reconstructs.
MergeTrace merge_matrix_traced(const Matrix& m_base, const Matrix& m_new, const MergeConfig& cfg);
Matrix merge_matrix(const Matrix& m_base, const Matrix& m_new, const MergeConfig& cfg);

/// Class-count weighted average for 1-D parameters.
Vector merge_vector(std::span<const double> v_base, std::span<const double> v_new,
                    const MergeConfig& cfg);

/// Merges both projections spectrally and the layer-norm terms by weighted
/// average. The scale is kept from `base`.
AdapterParams merge_adapter(const AdapterParams& base, const AdapterParams& fresh,
                            const MergeConfig& cfg);

/// Unweighted elementwise mean of every parameter (the direct-merge baseline).
AdapterParams average_adapters(const AdapterParams& base, const AdapterParams& fresh);

}  // namespace dime
