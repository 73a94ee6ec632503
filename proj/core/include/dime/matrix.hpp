// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <initializer_list>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace dime {

using Vector = std::vector<double>;

/// Dense row-major matrix of doubles.
///
/// Shapes are explicit and may be zero-sized only when default constructed;
/// every public operation that consumes a matrix checks its shape.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix identity(std::size_t n);
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  bool same_shape(const Matrix& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Throws std::invalid_argument naming `what` and the first non-finite index.
void require_finite(const Matrix& a, std::string_view what);
void require_finite(std::span<const double> v, std::string_view what);

Matrix transpose(const Matrix& a);
Matrix matmul(const Matrix& a, const Matrix& b);
Vector matvec(const Matrix& a, std::span<const double> x);

/// a + b and alpha * a, shape-checked.
Matrix add(const Matrix& a, const Matrix& b);
Matrix subtract(const Matrix& a, const Matrix& b);
Matrix scaled(const Matrix& a, double alpha);

/// [a b]: left block a, right block b.
Matrix concat_columns(const Matrix& a, const Matrix& b);
/// Inverse of concat_columns: first `left_cols` columns and the remainder.
std::pair<Matrix, Matrix> split_columns(const Matrix& a, std::size_t left_cols);

double frobenius_norm(const Matrix& a);
double frobenius_distance(const Matrix& a, const Matrix& b);
/// ||a - b||_F / max(||b||_F, 1e-30).
double relative_error(const Matrix& a, const Matrix& reference);
double max_abs_deviation_from_identity(const Matrix& a);

// Text format: header "rows cols", then one line per row of space separated
// values with 17 significant digits.
void write_matrix(std::ostream& out, const Matrix& a);
Matrix read_matrix(std::istream& in);
std::string format_matrix(const Matrix& a);
Matrix parse_matrix(std::string_view text);

}  // namespace dime
