// Copyright 2026 The GlowQ Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef GLOWQ_MATRIX_HPP_
#define GLOWQ_MATRIX_HPP_

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace glowq {

/// Dense row-major matrix of doubles.
///
/// Both dimensions are strictly positive and every entry handed to a
/// constructor must be finite. Element access through operator() is
/// unchecked; callers that write through it own the finiteness invariant.
class Matrix {
 public:
  /// Zero matrix.
  Matrix(std::size_t rows, std::size_t cols);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix identity(std::size_t n);
  static Matrix diagonal(std::span<const double> values);
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix column(std::span<const double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * cols_ + j]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::span<double> row(std::size_t i) noexcept { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const noexcept {
    return {data_.data() + i * cols_, cols_};
  }
  std::vector<double> col(std::size_t j) const;

  Matrix transpose() const;
  Matrix block(std::size_t row0, std::size_t col0, std::size_t nrows, std::size_t ncols) const;
  void set_block(std::size_t row0, std::size_t col0, const Matrix& src);
  /// First `n` columns.
  Matrix leading_cols(std::size_t n) const { return block(0, 0, rows_, n); }
  Matrix leading_rows(std::size_t n) const { return block(0, 0, n, cols_); }

  double frobenius_norm() const noexcept;
  double squared_norm() const noexcept;
  double max_abs() const noexcept;
  double trace() const;
  bool is_square() const noexcept { return rows_ == cols_; }

  Matrix& operator+=(const Matrix& other);
  Matrix& operator-=(const Matrix& other);
  Matrix& operator*=(double s) noexcept;

  bool operator==(const Matrix& other) const = default;

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(double s, Matrix a);
Matrix operator*(const Matrix& a, const Matrix& b);

/// a^T b without materialising the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
/// a b^T without materialising the transpose.
Matrix matmul_nt(const Matrix& a, const Matrix& b);

/// Scale column j of `m` by `s[j]` (m · diag(s)).
Matrix scale_cols(Matrix m, std::span<const double> s);
/// Scale row i of `m` by `s[i]` (diag(s) · m).
Matrix scale_rows(Matrix m, std::span<const double> s);

Matrix vstack(std::span<const Matrix> blocks);
Matrix hstack(std::span<const Matrix> blocks);

double max_abs_diff(const Matrix& a, const Matrix& b);
/// Frobenius inner product <a, b>.
double frobenius_dot(const Matrix& a, const Matrix& b);
/// max |m^T m - I|.
double orthonormality_error(const Matrix& m);
/// (m + m^T) / 2.
Matrix symmetrize(const Matrix& m);

}  // namespace glowq

#endif  // GLOWQ_MATRIX_HPP_
