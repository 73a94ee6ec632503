// SPDX-License-Identifier: Apache-2.0

#include "dime/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace dime {

namespace {

std::string shape_str(const Matrix& a) {
  return std::to_string(a.rows()) + "x" + std::to_string(a.cols());
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " +
                                shape_str(b));
  }
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw std::invalid_argument("Matrix: data length " + std::to_string(data_.size()) +
                                " does not match " + std::to_string(rows_) + "x" +
                                std::to_string(cols_));
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw std::invalid_argument("Matrix::from_rows: ragged rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Matrix(r, c, std::move(data));
}

void require_finite(const Matrix& a, std::string_view what) {
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) {
      if (!std::isfinite(a(i, j))) {
        std::ostringstream msg;
        msg << what << ": non-finite entry " << a(i, j) << " at (" << i << ", " << j << ")";
        throw std::invalid_argument(msg.str());
      }
    }
  }
}

void require_finite(std::span<const double> v, std::string_view what) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) {
      std::ostringstream msg;
      msg << what << ": non-finite entry " << v[i] << " at index " << i;
      throw std::invalid_argument(msg.str());
    }
  }
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw std::invalid_argument("matmul: inner dimension mismatch " + shape_str(a) + " * " +
                                shape_str(b));
  }
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto out = c.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto brow = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) out[j] += aik * brow[j];
    }
  }
  return c;
}

Vector matvec(const Matrix& a, std::span<const double> x) {
  if (a.cols() != x.size()) {
    throw std::invalid_argument("matvec: matrix " + shape_str(a) + " vs vector of length " +
                                std::to_string(x.size()));
  }
  Vector y(a.rows(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto r = a.row(i);
    double s = 0.0;
    for (std::size_t j = 0; j < r.size(); ++j) s += r[j] * x[j];
    y[i] = s;
  }
  return y;
}

Matrix add(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "add");
  Matrix c = a;
  auto cd = c.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < cd.size(); ++i) cd[i] += bd[i];
  return c;
}

Matrix subtract(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "subtract");
  Matrix c = a;
  auto cd = c.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < cd.size(); ++i) cd[i] -= bd[i];
  return c;
}

Matrix scaled(const Matrix& a, double alpha) {
  Matrix c = a;
  for (double& v : c.data()) v *= alpha;
  return c;
}

Matrix concat_columns(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    throw std::invalid_argument("concat_columns: row mismatch " + shape_str(a) + " vs " +
                                shape_str(b));
  }
  Matrix c(a.rows(), a.cols() + b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto out = c.row(i);
    std::ranges::copy(a.row(i), out.begin());
    std::ranges::copy(b.row(i), out.begin() + static_cast<std::ptrdiff_t>(a.cols()));
  }
  return c;
}

std::pair<Matrix, Matrix> split_columns(const Matrix& a, std::size_t left_cols) {
  if (left_cols == 0 || left_cols >= a.cols()) {
    throw std::invalid_argument("split_columns: left_cols " + std::to_string(left_cols) +
                                " out of range for " + shape_str(a));
  }
  const std::size_t right_cols = a.cols() - left_cols;
  Matrix left(a.rows(), left_cols);
  Matrix right(a.rows(), right_cols);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto src = a.row(i);
    std::ranges::copy(src.first(left_cols), left.row(i).begin());
    std::ranges::copy(src.subspan(left_cols), right.row(i).begin());
  }
  return {std::move(left), std::move(right)};
}

double frobenius_norm(const Matrix& a) {
  // Scaled accumulation avoids overflow for large entries.
  double scale = 0.0;
  double ssq = 1.0;
  for (double v : a.data()) {
    if (v == 0.0) continue;
    const double av = std::fabs(v);
    if (scale < av) {
      ssq = 1.0 + ssq * (scale / av) * (scale / av);
      scale = av;
    } else {
      ssq += (av / scale) * (av / scale);
    }
  }
  return scale * std::sqrt(ssq);
}

double frobenius_distance(const Matrix& a, const Matrix& b) {
  return frobenius_norm(subtract(a, b));
}

double relative_error(const Matrix& a, const Matrix& reference) {
  return frobenius_distance(a, reference) / std::max(frobenius_norm(reference), 1e-30);
}

double max_abs_deviation_from_identity(const Matrix& a) {
  if (a.rows() != a.cols()) throw std::invalid_argument("max_abs_deviation_from_identity: not square");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j)
      worst = std::max(worst, std::fabs(a(i, j) - (i == j ? 1.0 : 0.0)));
  return worst;
}

void write_matrix(std::ostream& out, const Matrix& a) {
  out << a.rows() << ' ' << a.cols() << '\n';
  char buf[40];
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", a(i, j));
      if (j) out << ' ';
      out << buf;
    }
    out << '\n';
  }
}

Matrix read_matrix(std::istream& in) {
  std::size_t rows = 0;
  std::size_t cols = 0;
  if (!(in >> rows >> cols)) throw std::runtime_error("read_matrix: missing 'rows cols' header");
  std::vector<double> data(rows * cols);
  for (std::size_t k = 0; k < data.size(); ++k) {
    if (!(in >> data[k])) {
      throw std::runtime_error("read_matrix: expected " + std::to_string(data.size()) +
                               " values, got " + std::to_string(k));
    }
  }
  return Matrix(rows, cols, std::move(data));
}

std::string format_matrix(const Matrix& a) {
  std::ostringstream out;
  write_matrix(out, a);
  return out.str();
}

Matrix parse_matrix(std::string_view text) {
  std::istringstream in{std::string(text)};
  return read_matrix(in);
}

}  // namespace dime
