// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>

#include "dime/matrix.hpp"

namespace dime {

/// Thin SVD a = u * diag(sigma) * vt with r = min(rows, cols).
///
/// u has orthonormal columns, vt orthonormal rows, sigma is nonincreasing and
/// nonnegative. In every column of u the entry of largest magnitude is
/// nonnegative (first such row wins ties); the matching row of vt is flipped
/// with it.
struct SvdFactors {
  Matrix u;
  Vector sigma;
  Matrix vt;

  std::size_t rank() const noexcept { return sigma.size(); }
};

struct SvdOptions {
  /// Pairs are considered orthogonal once |a_p . a_q| <= tol * |a_p| |a_q|.
  double tolerance = 1e-12;
  int max_sweeps = 60;
};

class SvdNotConverged : public std::runtime_error {
 public:
  SvdNotConverged(int sweeps, double off_diagonal_norm);
  int sweeps() const noexcept { return sweeps_; }
  double off_diagonal_norm() const noexcept { return off_diagonal_norm_; }

 private:
  int sweeps_;
  double off_diagonal_norm_;
};

/// One-sided Jacobi SVD. Deterministic: identical inputs give bit-identical
/// factors.
SvdFactors thin_svd(const Matrix& a, const SvdOptions& options = {});

/// u * diag(sigma) * vt. Only shape consistency is required of the factors.
Matrix reconstruct(const SvdFactors& f);

}  // namespace dime
