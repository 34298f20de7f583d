#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace frozenseg {

using Real = double;

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, Real fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<Real> data);
  Matrix(std::initializer_list<std::initializer_list<Real>> rows);

  static Matrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  Real& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  Real operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<Real> data() noexcept { return data_; }
  std::span<const Real> data() const noexcept { return data_; }
  std::span<Real> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const Real> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

  void fill(Real v);
  bool same_shape(const Matrix& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  bool all_finite() const noexcept;
  Matrix transposed() const;

  friend bool operator==(const Matrix& a, const Matrix& b) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<Real> data_;
};

std::string shape_string(const Matrix& m);

/// Throws DimensionError unless a and b have identical shapes.
void require_same_shape(const Matrix& a, const Matrix& b, const char* what);
/// Throws NumericError if m holds a NaN or infinity.
void require_finite(const Matrix& m, const char* what);

/// Product a*b through the parallel kernel. Throws DimensionError on mismatch.
Matrix matmul(const Matrix& a, const Matrix& b);

/// Row-wise softmax of m / temperature with max subtraction.
Matrix softmax_rows(const Matrix& m, Real temperature = 1.0);

Real max_abs_diff(const Matrix& a, const Matrix& b);

}  // namespace frozenseg
