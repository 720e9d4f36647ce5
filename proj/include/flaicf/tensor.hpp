#pragma once

#include <algorithm>
#include <cassert>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace flaicf {

using Vector = std::vector<double>;

// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  // Keeps the allocation when the element count does not grow.
  void resize(std::size_t rows, std::size_t cols) {
    rows_ = rows;
    cols_ = cols;
    data_.resize(rows * cols);
  }

  void fill(double value) { std::fill(data_.begin(), data_.end(), value); }

  double& operator()(std::size_t r, std::size_t c) {
    assert(r < rows_ && c < cols_);
    return data_[r * cols_ + c];
  }
  double operator()(std::size_t r, std::size_t c) const {
    assert(r < rows_ && c < cols_);
    return data_[r * cols_ + c];
  }

  std::span<double> row(std::size_t r) {
    assert(r < rows_);
    return {data_.data() + r * cols_, cols_};
  }
  std::span<const double> row(std::size_t r) const {
    assert(r < rows_);
    return {data_.data() + r * cols_, cols_};
  }

  std::span<double> flat() noexcept { return data_; }
  std::span<const double> flat() const noexcept { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline std::string shape_string(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  assert(a.size() == b.size());
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

// out = M x + bias
inline void affine(const Matrix& m, std::span<const double> x,
                   std::span<const double> bias, std::span<double> out) {
  assert(x.size() == m.cols() && out.size() == m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto w = m.row(r);
    double s = bias.empty() ? 0.0 : bias[r];
    for (std::size_t c = 0; c < w.size(); ++c) s += w[c] * x[c];
    out[r] = s;
  }
}

// out += M^T y
inline void add_transpose_product(const Matrix& m, std::span<const double> y,
                                  std::span<double> out) {
  assert(y.size() == m.rows() && out.size() == m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    if (y[r] == 0.0) continue;
    auto w = m.row(r);
    for (std::size_t c = 0; c < w.size(); ++c) out[c] += w[c] * y[r];
  }
}

// M += y x^T
inline void add_outer(std::span<const double> y, std::span<const double> x, Matrix& m) {
  assert(y.size() == m.rows() && x.size() == m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    if (y[r] == 0.0) continue;
    auto w = m.row(r);
    for (std::size_t c = 0; c < w.size(); ++c) w[c] += y[r] * x[c];
  }
}

}  // namespace flaicf
