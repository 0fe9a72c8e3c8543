// Copyright 2026 The Composer Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "composer/error.hpp"

namespace composer {

using Shape = std::vector<std::int64_t>;

inline std::int64_t num_elements(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::int64_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

/// Dense row-major float64 tensor.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0) : shape_(std::move(shape)) {
    validate_shape();
    count_allocation();
    data_.assign(static_cast<std::size_t>(num_elements(shape_)), fill);
  }
  Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    validate_shape();
    count_allocation();
    if (static_cast<std::int64_t>(data_.size()) != num_elements(shape_))
      throw Error(ErrorCode::kShape, shape_string(shape_),
                  "data length " + std::to_string(data_.size()) + " does not match shape");
  }

  Tensor(const Tensor& other) : shape_(other.shape_), data_(other.data_) {
    if (!data_.empty()) count_allocation();
  }
  Tensor(Tensor&&) noexcept = default;
  Tensor& operator=(const Tensor& other) {
    if (this != &other) {
      shape_ = other.shape_;
      data_ = other.data_;
      if (!data_.empty()) count_allocation();
    }
    return *this;
  }
  Tensor& operator=(Tensor&&) noexcept = default;

  const Shape& shape() const { return shape_; }
  std::int64_t rank() const { return static_cast<std::int64_t>(shape_.size()); }
  std::int64_t dim(std::int64_t axis) const {
    if (axis < 0) axis += rank();
    return shape_.at(static_cast<std::size_t>(axis));
  }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  /// Same data, new shape with equal element count.
  Tensor reshaped(Shape shape) const {
    if (num_elements(shape) != num_elements(shape_))
      throw Error(ErrorCode::kShape, shape_string(shape), "reshape of " + shape_string(shape_));
    return Tensor(std::move(shape), data_);
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

  /// Number of Tensor storage allocations made so far in this process.
  /// Analysis paths that must not materialize state assert on it.
  static std::uint64_t allocation_count() { return counter().load(); }

 private:
  void validate_shape() const {
    for (auto d : shape_)
      if (d <= 0) throw Error(ErrorCode::kShape, shape_string(shape_), "dimensions must be positive");
  }
  static std::atomic<std::uint64_t>& counter() {
    static std::atomic<std::uint64_t> c{0};
    return c;
  }
  static void count_allocation() { counter().fetch_add(1, std::memory_order_relaxed); }

  Shape shape_;
  std::vector<double> data_;
};

}  // namespace composer
