#pragma once

#include <cassert>
#include <vector>

namespace msda {

// Dense row-major matrix of doubles. Small sizes throughout, no view types.
class Matrix {
 public:
  Matrix() = default;
  Matrix(int rows, int cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(static_cast<size_t>(rows) * cols, fill) {}

  double& operator()(int r, int c) {
    assert(r >= 0 && r < rows_ && c >= 0 && c < cols_);
    return data_[static_cast<size_t>(r) * cols_ + c];
  }
  double operator()(int r, int c) const {
    assert(r >= 0 && r < rows_ && c >= 0 && c < cols_);
    return data_[static_cast<size_t>(r) * cols_ + c];
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  const double* row_ptr(int r) const { return data_.data() + static_cast<size_t>(r) * cols_; }
  double* row_ptr(int r) { return data_.data() + static_cast<size_t>(r) * cols_; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  std::vector<double>& flat() { return data_; }
  const std::vector<double>& flat() const { return data_; }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> data_;
};

}  // namespace msda
