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

#include "convfact/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>

namespace convfact {

namespace {

std::size_t product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(product(shape_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != product(shape_)) {
    throw InvalidArgument("Tensor: data length does not match shape");
  }
}

Kernel4D::Kernel4D(std::size_t t, std::size_t s, std::size_t k)
    : Kernel4D(t, s, k, std::vector<double>(t * s * k * k, 0.0)) {}

Kernel4D::Kernel4D(std::size_t t, std::size_t s, std::size_t k, std::vector<double> data)
    : t_(t), s_(s), k_(k), data_(std::move(data)) {
  if (t == 0 || s == 0) {
    throw InvalidArgument("Kernel4D: channel counts must be positive");
  }
  if (k == 0 || k % 2 == 0) {
    throw InvalidArgument("Kernel4D: spatial size must be odd and >= 1");
  }
  if (data_.size() != t * s * k * k) {
    throw InvalidArgument("Kernel4D: data length must equal t*s*k*k");
  }
  require_finite(data_, "Kernel4D");
}

double Kernel4D::frobenius_norm() const {
  double sum = 0.0;
  for (double v : data_) sum += v * v;
  return std::sqrt(sum);
}

FeatureMap::FeatureMap(std::size_t channels, std::size_t h, std::size_t w)
    : FeatureMap(channels, h, w, std::vector<double>(channels * h * w, 0.0)) {}

FeatureMap::FeatureMap(std::size_t channels, std::size_t h, std::size_t w,
                       std::vector<double> data)
    : c_(channels), h_(h), w_(w), data_(std::move(data)) {
  if (channels == 0 || h == 0 || w == 0) {
    throw InvalidArgument("FeatureMap: dimensions must be positive");
  }
  if (data_.size() != channels * h * w) {
    throw InvalidArgument("FeatureMap: data length must equal channels*h*w");
  }
}

bool all_finite(std::span<const double> values) {
  for (double v : values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void require_finite(std::span<const double> values, const std::string& what) {
  if (!all_finite(values)) {
    throw InvalidArgument(what + ": non-finite entry");
  }
}

}  // namespace convfact
