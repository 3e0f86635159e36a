// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace vidprism {

using Shape = std::vector<std::size_t>;

/// Number of elements described by `shape`; the empty shape is a scalar (1).
std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major float64 array.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double value);
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double at(std::size_t row, std::size_t col) const;
  double& at(std::size_t row, std::size_t col);

  double item() const;
  void fill(double value);
  bool all_finite() const;

  /// Same data, new extents; element count must match.
  Tensor reshaped(Shape shape) const;
  /// Copy of rows [begin, end) along axis 0.
  Tensor rows(std::size_t begin, std::size_t end) const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

}  // namespace vidprism
