#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "stabilitylab/errors.hpp"

namespace stabilitylab {

// Dense row-major matrix of doubles. Rows index the delay axis and columns
// the frequency axis when used as a spectrogram payload.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), v_(rows * cols, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return v_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const {
    return v_[r * cols_ + c];
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return v_.size(); }
  bool empty() const { return v_.empty(); }

  std::vector<double>& flat() { return v_; }
  const std::vector<double>& flat() const { return v_; }

  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> v_;
};

inline void require_same_shape(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) {
    throw DimensionMismatch("matrix dimensions differ: " +
                            std::to_string(a.rows()) + "x" +
                            std::to_string(a.cols()) + " vs " +
                            std::to_string(b.rows()) + "x" +
                            std::to_string(b.cols()));
  }
}

}  // namespace stabilitylab
