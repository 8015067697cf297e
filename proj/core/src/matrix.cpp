// SPDX-License-Identifier: Apache-2.0

#include "aft/matrix.hpp"

#include <algorithm>
#include <cmath>

#include "aft/errors.hpp"

namespace aft {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                         b.shape_string());
  }
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw DimensionError("Matrix: data length " + std::to_string(data_.size()) + " != " +
                         std::to_string(rows) + "x" + std::to_string(cols));
  }
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("Matrix::from_rows: ragged rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Matrix(r, c, std::move(data));
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::row_vector(std::span<const double> values) {
  return Matrix(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

std::string Matrix::shape_string() const {
  return "[" + std::to_string(rows_) + "x" + std::to_string(cols_) + "]";
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions differ, " + a.shape_string() + " x " +
                         b.shape_string());
  }
  Matrix out(a.rows(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* out_row = out.row(i).data();
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const double* b_row = b.row(k).data();
      for (std::size_t j = 0; j < n; ++j) out_row[j] += aik * b_row[j];
    }
  }
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "add");
  Matrix out = a;
  auto o = out.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bd[i];
  return out;
}

Matrix sub(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "sub");
  Matrix out = a;
  auto o = out.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bd[i];
  return out;
}

Matrix scale(const Matrix& a, double factor) {
  Matrix out = a;
  for (double& v : out.data()) v *= factor;
  return out;
}

Matrix center_rows(const Matrix& x) {
  Matrix out = x;
  if (x.rows() == 0) return out;
  std::vector<double> mean(x.cols(), 0.0);
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) mean[j] += x(i, j);
  for (double& m : mean) m /= static_cast<double>(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) -= mean[j];
  return out;
}

Matrix normalize_rows(const Matrix& x, double eps) {
  Matrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double sq = 0.0;
    for (double v : x.row(i)) sq += v * v;
    const double norm = std::sqrt(sq);
    if (norm <= eps) continue;
    auto src = x.row(i);
    auto dst = out.row(i);
    for (std::size_t j = 0; j < x.cols(); ++j) dst[j] = src[j] / norm;
  }
  return out;
}

Matrix gram(const Matrix& x) {
  const std::size_t n = x.rows();
  Matrix out(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    auto xi = x.row(i);
    for (std::size_t j = i; j < n; ++j) {
      auto xj = x.row(j);
      double dot = 0.0;
      for (std::size_t k = 0; k < x.cols(); ++k) dot += xi[k] * xj[k];
      out(i, j) = dot;
      out(j, i) = dot;
    }
  }
  return out;
}

Matrix rbf_gram(const Matrix& x) {
  const std::size_t n = x.rows();
  Matrix out(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    out(i, i) = 1.0;
    auto xi = x.row(i);
    for (std::size_t j = i + 1; j < n; ++j) {
      auto xj = x.row(j);
      double sq = 0.0;
      for (std::size_t k = 0; k < x.cols(); ++k) {
        const double d = xi[k] - xj[k];
        sq += d * d;
      }
      const double k = std::exp(-sq);
      out(i, j) = k;
      out(j, i) = k;
    }
  }
  return out;
}

double frob_distance(const Matrix& a, const Matrix& b, double scale, double eps) {
  require_same_shape(a, b, "frob_distance");
  if (!(scale > 0.0)) throw UsageError("frob_distance: scale must be positive");
  double sq = 0.0;
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < ad.size(); ++i) {
    const double d = ad[i] - bd[i];
    sq += d * d;
  }
  return std::sqrt(sq + eps) / scale;
}

Matrix scale_columns(const Matrix& x, std::span<const double> weights) {
  if (weights.size() != x.cols()) {
    throw DimensionError("scale_columns: " + std::to_string(weights.size()) +
                         " weights for " + x.shape_string());
  }
  Matrix out = x;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto r = out.row(i);
    for (std::size_t j = 0; j < x.cols(); ++j) r[j] *= weights[j];
  }
  return out;
}

Matrix hstack(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    throw DimensionError("hstack: row counts differ, " + a.shape_string() + " vs " +
                         b.shape_string());
  }
  Matrix out(a.rows(), a.cols() + b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto dst = out.row(i);
    std::copy(a.row(i).begin(), a.row(i).end(), dst.begin());
    std::copy(b.row(i).begin(), b.row(i).end(), dst.begin() + static_cast<std::ptrdiff_t>(a.cols()));
  }
  return out;
}

Matrix select_rows(const Matrix& x, std::span<const std::size_t> indices) {
  Matrix out(indices.size(), x.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= x.rows()) throw DimensionError("select_rows: index out of range");
    std::copy(x.row(indices[i]).begin(), x.row(indices[i]).end(), out.row(i).begin());
  }
  return out;
}

Matrix select_cols(const Matrix& x, std::span<const std::size_t> indices) {
  Matrix out(x.rows(), indices.size());
  for (std::size_t j = 0; j < indices.size(); ++j)
    if (indices[j] >= x.cols()) throw DimensionError("select_cols: index out of range");
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < indices.size(); ++j) out(i, j) = x(i, indices[j]);
  return out;
}

bool all_finite(const Matrix& x) {
  return std::all_of(x.data().begin(), x.data().end(), [](double v) { return std::isfinite(v); });
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

}  // namespace aft
