// SPDX-License-Identifier: Apache-2.0

#include "dime/svd.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <numeric>
#include <sstream>
#include <string>

namespace dime {

namespace {

std::string not_converged_message(int sweeps, double off) {
  std::ostringstream msg;
  msg << "thin_svd: no convergence after " << sweeps
      << " sweeps, residual off-diagonal norm " << off;
  return msg.str();
}

// Column-major scratch matrix; one-sided Jacobi works column by column.
struct Columns {
  std::size_t rows;
  std::size_t cols;
  std::vector<double> data;

  Columns(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
  double* col(std::size_t j) { return data.data() + j * rows; }
  const double* col(std::size_t j) const { return data.data() + j * rows; }
};

double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void rotate(double* a, double* b, std::size_t n, double c, double s) {
  for (std::size_t i = 0; i < n; ++i) {
    const double x = a[i];
    const double y = b[i];
    a[i] = c * x - s * y;
    b[i] = s * x + c * y;
  }
}

// Orthogonalises the columns of `work` in place and accumulates the rotations
// in `v` (cols x cols, starts at identity).
void jacobi_sweeps(Columns& work, Columns& v, const SvdOptions& opt) {
  const std::size_t m = work.rows;
  const std::size_t n = work.cols;
  for (int sweep = 0; sweep < opt.max_sweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double* ap = work.col(p);
        double* aq = work.col(q);
        const double alpha = dot(ap, ap, m);
        const double beta = dot(aq, aq, m);
        const double gamma = dot(ap, aq, m);
        if (gamma == 0.0 || std::fabs(gamma) <= opt.tolerance * std::sqrt(alpha) * std::sqrt(beta)) {
          continue;
        }
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        double t;
        if (std::fabs(zeta) > 1e150) {
          t = 0.5 / zeta;
        } else {
          t = std::copysign(1.0, zeta) / (std::fabs(zeta) + std::sqrt(1.0 + zeta * zeta));
        }
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        rotate(ap, aq, m, c, s);
        rotate(v.col(p), v.col(q), n, c, s);
      }
    }
    if (!rotated) return;
  }

  double off = 0.0;
  for (std::size_t p = 0; p + 1 < n; ++p) {
    for (std::size_t q = p + 1; q < n; ++q) {
      const double alpha = dot(work.col(p), work.col(p), m);
      const double beta = dot(work.col(q), work.col(q), m);
      const double gamma = dot(work.col(p), work.col(q), m);
      if (gamma != 0.0) off += gamma * gamma / (alpha * beta);
    }
  }
  throw SvdNotConverged(opt.max_sweeps, std::sqrt(off));
}

// Replaces column j of `u` by a unit vector orthogonal to every column listed
// in `filled`, built from the standard basis vector with the largest residual.
void complete_column(Columns& u, std::size_t j, const std::vector<std::size_t>& filled) {
  const std::size_t m = u.rows;
  std::vector<double> best;
  double best_norm = -1.0;
  std::vector<double> cand(m);
  for (std::size_t k = 0; k < m; ++k) {
    std::ranges::fill(cand, 0.0);
    cand[k] = 1.0;
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t f : filled) {
        const double* uf = u.col(f);
        const double proj = dot(uf, cand.data(), m);
        for (std::size_t i = 0; i < m; ++i) cand[i] -= proj * uf[i];
      }
    }
    const double nrm = std::sqrt(dot(cand.data(), cand.data(), m));
    if (nrm > best_norm + 1e-12) {
      best_norm = nrm;
      best = cand;
    }
  }
  double* out = u.col(j);
  for (std::size_t i = 0; i < m; ++i) out[i] = best[i] / best_norm;
}

}  // namespace

SvdNotConverged::SvdNotConverged(int sweeps, double off_diagonal_norm)
    : std::runtime_error(not_converged_message(sweeps, off_diagonal_norm)),
      sweeps_(sweeps),
      off_diagonal_norm_(off_diagonal_norm) {}

SvdFactors thin_svd(const Matrix& a, const SvdOptions& options) {
  if (a.rows() == 0 || a.cols() == 0) {
    throw std::invalid_argument("thin_svd: empty matrix");
  }
  require_finite(a, "thin_svd");

  // Work on the orientation with at least as many rows as columns.
  const bool transposed = a.rows() < a.cols();
  const std::size_t m = transposed ? a.cols() : a.rows();
  const std::size_t n = transposed ? a.rows() : a.cols();

  Columns work(m, n);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) {
      if (transposed) {
        work.col(i)[j] = a(i, j);
      } else {
        work.col(j)[i] = a(i, j);
      }
    }
  }
  Columns v(n, n);
  for (std::size_t j = 0; j < n; ++j) v.col(j)[j] = 1.0;

  jacobi_sweeps(work, v, options);

  Vector norms(n);
  for (std::size_t j = 0; j < n; ++j) norms[j] = std::sqrt(dot(work.col(j), work.col(j), m));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::ranges::stable_sort(order, [&](std::size_t x, std::size_t y) { return norms[x] > norms[y]; });

  // Directions whose norm is at rounding level carry no information; they are
  // reported as exact zeros and their left vectors rebuilt orthonormally.
  const double sigma_max = norms[order[0]];
  const double negligible = sigma_max * static_cast<double>(m) * DBL_EPSILON;

  Vector sigma(n, 0.0);
  Columns left(m, n);
  Columns right(n, n);
  std::vector<std::size_t> filled;
  std::vector<std::size_t> to_complete;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t src = order[k];
    std::copy_n(v.col(src), n, right.col(k));
    if (norms[src] > negligible && norms[src] > 0.0) {
      sigma[k] = norms[src];
      const double* col = work.col(src);
      double* out = left.col(k);
      for (std::size_t i = 0; i < m; ++i) out[i] = col[i] / sigma[k];
      filled.push_back(k);
    } else {
      to_complete.push_back(k);
    }
  }
  for (std::size_t k : to_complete) {
    complete_column(left, k, filled);
    filled.push_back(k);
  }

  // Map back: a = left * S * right^T, or for the transposed case
  // a = right * S * left^T.
  const Columns& ucols = transposed ? right : left;
  const Columns& vcols = transposed ? left : right;
  const std::size_t r = n;

  SvdFactors f{Matrix(a.rows(), r), std::move(sigma), Matrix(r, a.cols())};
  for (std::size_t k = 0; k < r; ++k) {
    const double* uc = ucols.col(k);
    const double* vc = vcols.col(k);
    std::size_t pivot = 0;
    for (std::size_t i = 1; i < a.rows(); ++i) {
      if (std::fabs(uc[i]) > std::fabs(uc[pivot])) pivot = i;
    }
    const double sign = uc[pivot] < 0.0 ? -1.0 : 1.0;
    for (std::size_t i = 0; i < a.rows(); ++i) f.u(i, k) = sign * uc[i];
    for (std::size_t j = 0; j < a.cols(); ++j) f.vt(k, j) = sign * vc[j];
  }
  return f;
}

Matrix reconstruct(const SvdFactors& f) {
  const std::size_t r = f.sigma.size();
  if (f.u.cols() != r || f.vt.rows() != r) {
    throw std::invalid_argument("reconstruct: inconsistent factor shapes u " +
                                std::to_string(f.u.rows()) + "x" + std::to_string(f.u.cols()) +
                                ", sigma " + std::to_string(r) + ", vt " +
                                std::to_string(f.vt.rows()) + "x" + std::to_string(f.vt.cols()));
  }
  Matrix out(f.u.rows(), f.vt.cols());
  for (std::size_t i = 0; i < f.u.rows(); ++i) {
    auto row = out.row(i);
    for (std::size_t k = 0; k < r; ++k) {
      const double coef = f.u(i, k) * f.sigma[k];
      if (coef == 0.0) continue;
      auto vrow = f.vt.row(k);
      for (std::size_t j = 0; j < row.size(); ++j) row[j] += coef * vrow[j];
    }
  }
  return out;
}

}  // namespace dime
