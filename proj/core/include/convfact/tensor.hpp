// Copyright 2026 The convfact Authors
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

#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace convfact {

/// Thrown when an argument violates a documented precondition
/// (shape mismatch, rank out of range, non-finite data, ...).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown when a numerical procedure cannot produce a result
/// (singular system, infeasible budget, divergence).
class ComputationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dense row-major N-d array of doubles. Used for decomposition factors,
/// whose shapes differ per method.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  double& operator[](std::size_t flat) { return data_[flat]; }
  double operator[](std::size_t flat) const { return data_[flat]; }

  double& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  double at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
  double& at(std::size_t i, std::size_t j, std::size_t l) {
    return data_[(i * shape_[1] + j) * shape_[2] + l];
  }
  double at(std::size_t i, std::size_t j, std::size_t l) const {
    return data_[(i * shape_[1] + j) * shape_[2] + l];
  }
  double& at(std::size_t i, std::size_t j, std::size_t l, std::size_t m) {
    return data_[((i * shape_[1] + j) * shape_[2] + l) * shape_[3] + m];
  }
  double at(std::size_t i, std::size_t j, std::size_t l, std::size_t m) const {
    return data_[((i * shape_[1] + j) * shape_[2] + l) * shape_[3] + m];
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

/// Convolution kernel W with layout (t, s, k, k), row-major.
///
/// Index naming follows the convolution sum: `at(o, i, x, y)` is the weight
/// from input channel `i` to output channel `o` at spatial offset (x, y),
/// where x runs along the first spatial axis (kernel height, feature-map
/// rows) and y along the second (kernel width, feature-map columns).
/// The kernel is square with odd size k, so the half-width is (k - 1) / 2.
class Kernel4D {
 public:
  Kernel4D() = default;
  Kernel4D(std::size_t t, std::size_t s, std::size_t k);
  Kernel4D(std::size_t t, std::size_t s, std::size_t k, std::vector<double> data);

  std::size_t out_channels() const { return t_; }
  std::size_t in_channels() const { return s_; }
  std::size_t size() const { return k_; }
  std::size_t half_width() const { return (k_ - 1) / 2; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  double& at(std::size_t o, std::size_t i, std::size_t x, std::size_t y) {
    return data_[((o * s_ + i) * k_ + x) * k_ + y];
  }
  double at(std::size_t o, std::size_t i, std::size_t x, std::size_t y) const {
    return data_[((o * s_ + i) * k_ + x) * k_ + y];
  }

  double frobenius_norm() const;

  friend bool operator==(const Kernel4D&, const Kernel4D&) = default;

 private:
  std::size_t t_ = 0;
  std::size_t s_ = 0;
  std::size_t k_ = 0;
  std::vector<double> data_;
};

/// Feature map with layout (channels, h, w), row-major. Index (c, x, y)
/// with x in [0, h) and y in [0, w).
class FeatureMap {
 public:
  FeatureMap() = default;
  FeatureMap(std::size_t channels, std::size_t h, std::size_t w);
  FeatureMap(std::size_t channels, std::size_t h, std::size_t w,
             std::vector<double> data);

  std::size_t channels() const { return c_; }
  std::size_t height() const { return h_; }
  std::size_t width() const { return w_; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  double& at(std::size_t c, std::size_t x, std::size_t y) {
    return data_[(c * h_ + x) * w_ + y];
  }
  double at(std::size_t c, std::size_t x, std::size_t y) const {
    return data_[(c * h_ + x) * w_ + y];
  }

  /// Zero outside the map, which realizes the zero padding of width
  /// (k - 1) / 2 used by every convolution in this library.
  double padded(std::size_t c, std::ptrdiff_t x, std::ptrdiff_t y) const {
    if (x < 0 || y < 0 || x >= static_cast<std::ptrdiff_t>(h_) ||
        y >= static_cast<std::ptrdiff_t>(w_)) {
      return 0.0;
    }
    return data_[(c * h_ + static_cast<std::size_t>(x)) * w_ + static_cast<std::size_t>(y)];
  }

  friend bool operator==(const FeatureMap&, const FeatureMap&) = default;

 private:
  std::size_t c_ = 0;
  std::size_t h_ = 0;
  std::size_t w_ = 0;
  std::vector<double> data_;
};

bool all_finite(std::span<const double> values);

/// Throws InvalidArgument naming `what` when `values` holds a NaN or inf.
void require_finite(std::span<const double> values, const std::string& what);

}  // namespace convfact
