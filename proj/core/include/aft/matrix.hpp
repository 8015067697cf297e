// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace aft {

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix identity(std::size_t n);
  /// Row vector (1 x n).
  static Matrix row_vector(std::span<const double> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::string shape_string() const;

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double factor);

/// Subtracts the column means, so every column of the result sums to zero.
Matrix center_rows(const Matrix& x);

/// Scales each row to unit l2 norm. Rows whose norm is <= eps become zero.
Matrix normalize_rows(const Matrix& x, double eps);

/// x * x^T.
Matrix gram(const Matrix& x);

/// K(i, j) = exp(-|x_i - x_j|^2).
Matrix rbf_gram(const Matrix& x);

/// sqrt(sum((a - b)^2) + eps) / scale.
double frob_distance(const Matrix& a, const Matrix& b, double scale, double eps);

/// Multiplies column j by weights[j].
Matrix scale_columns(const Matrix& x, std::span<const double> weights);

/// [a | b]; both operands must have the same number of rows.
Matrix hstack(const Matrix& a, const Matrix& b);

Matrix select_rows(const Matrix& x, std::span<const std::size_t> indices);
Matrix select_cols(const Matrix& x, std::span<const std::size_t> indices);

bool all_finite(const Matrix& x);
double max_abs_diff(const Matrix& a, const Matrix& b);

}  // namespace aft
