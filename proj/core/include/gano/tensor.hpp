#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace gano::ad {

/// Row-major matrix shape. Vectors are 1 x n, scalars 1 x 1.
struct Shape {
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t size() const { return rows * cols; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

/// Dense double-precision matrix. Value type; carries no graph information.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0)
      : shape_{rows, cols}, values_(rows * cols, fill) {}
  explicit Tensor(Shape shape, double fill = 0.0) : Tensor(shape.rows, shape.cols, fill) {}
  /// Throws ValidationError when values.size() != rows * cols.
  Tensor(std::size_t rows, std::size_t cols, std::vector<double> values);

  static Tensor scalar(double v) { return Tensor(1, 1, v); }
  static Tensor row(std::vector<double> v);
  static Tensor row(std::initializer_list<double> v) { return row(std::vector<double>(v)); }

  const Shape& shape() const { return shape_; }
  std::size_t rows() const { return shape_.rows; }
  std::size_t cols() const { return shape_.cols; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return values_[r * shape_.cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * shape_.cols + c]; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }
  std::span<double> span() { return values_; }
  std::span<const double> span() const { return values_; }
  std::span<const double> row_span(std::size_t r) const {
    return std::span<const double>(values_).subspan(r * shape_.cols, shape_.cols);
  }
  std::span<double> row_span(std::size_t r) {
    return std::span<double>(values_).subspan(r * shape_.cols, shape_.cols);
  }

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  double item() const;  // requires 1 x 1

  bool operator==(const Tensor&) const = default;

 private:
  Shape shape_{};
  std::vector<double> values_;
};

double norm2(std::span<const double> v);
double dot(std::span<const double> a, std::span<const double> b);

}  // namespace gano::ad
