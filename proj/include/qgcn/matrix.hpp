#pragma once

#include <cassert>
#include <cstddef>
#include <span>
#include <vector>

namespace qgcn {

// Dense row-major matrix of doubles. Rows are node embeddings throughout the
// library; quaternion tables pack their four component blocks contiguously
// per row as [r | i | j | k].
class RealMatrix {
 public:
  RealMatrix() = default;
  RealMatrix(int rows, int cols)
      : rows_(rows), cols_(cols), data_(std::size_t(rows) * cols, 0.0) {}

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  bool empty() const { return data_.empty(); }
  std::size_t size() const { return data_.size(); }

  double& operator()(int r, int c) { return data_[std::size_t(r) * cols_ + c]; }
  double operator()(int r, int c) const { return data_[std::size_t(r) * cols_ + c]; }

  double* row(int r) { return data_.data() + std::size_t(r) * cols_; }
  const double* row(int r) const { return data_.data() + std::size_t(r) * cols_; }

  std::span<double> row_span(int r) { return {row(r), std::size_t(cols_)}; }
  std::span<const double> row_span(int r) const { return {row(r), std::size_t(cols_)}; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  void set_zero() { std::fill(data_.begin(), data_.end(), 0.0); }

  bool same_shape(const RealMatrix& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> data_;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  assert(a.size() == b.size());
  double s = 0.0;
  for (std::size_t t = 0; t < a.size(); ++t) s += a[t] * b[t];
  return s;
}

inline double squared_norm(std::span<const double> a) {
  double s = 0.0;
  for (double x : a) s += x * x;
  return s;
}

inline double frobenius_squared(const RealMatrix& m) {
  double s = 0.0;
  for (double x : m.data()) s += x * x;
  return s;
}

// y += alpha * x
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  assert(x.size() == y.size());
  for (std::size_t t = 0; t < x.size(); ++t) y[t] += alpha * x[t];
}

inline void add_inplace(RealMatrix& a, const RealMatrix& b) {
  assert(a.same_shape(b));
  axpy(1.0, b.data(), std::span<double>(a.data()));
}

inline void hadamard_inplace(RealMatrix& a, const RealMatrix& b) {
  assert(a.same_shape(b));
  for (std::size_t t = 0; t < a.data().size(); ++t) a.data()[t] *= b.data()[t];
}

}  // namespace qgcn
