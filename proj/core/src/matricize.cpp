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

#include "convfact/matricize.hpp"

namespace convfact {

using Index = Eigen::Index;

Eigen::MatrixXd matricize_weight(const Kernel4D& kernel) {
  const std::size_t t = kernel.out_channels();
  const std::size_t s = kernel.in_channels();
  const std::size_t k = kernel.size();
  Eigen::MatrixXd m(static_cast<Index>(k * k * s), static_cast<Index>(t));
  for (std::size_t o = 0; o < t; ++o)
    for (std::size_t i = 0; i < s; ++i)
      for (std::size_t x = 0; x < k; ++x)
        for (std::size_t y = 0; y < k; ++y)
          m(static_cast<Index>(weight_row(x, y, i, k, s)), static_cast<Index>(o)) =
              kernel.at(o, i, x, y);
  return m;
}

Kernel4D unmatricize_weight(const Eigen::MatrixXd& m, std::size_t t, std::size_t s,
                            std::size_t k) {
  if (m.rows() != static_cast<Index>(k * k * s) || m.cols() != static_cast<Index>(t)) {
    throw InvalidArgument("unmatricize_weight: matrix must be (k^2 s) x t");
  }
  Kernel4D kernel(t, s, k);
  for (std::size_t o = 0; o < t; ++o)
    for (std::size_t i = 0; i < s; ++i)
      for (std::size_t x = 0; x < k; ++x)
        for (std::size_t y = 0; y < k; ++y)
          kernel.at(o, i, x, y) =
              m(static_cast<Index>(weight_row(x, y, i, k, s)), static_cast<Index>(o));
  return kernel;
}

Eigen::MatrixXd matricize_spatial(const Kernel4D& kernel, Axis first) {
  const std::size_t t = kernel.out_channels();
  const std::size_t s = kernel.in_channels();
  const std::size_t k = kernel.size();
  Eigen::MatrixXd m(static_cast<Index>(s * k), static_cast<Index>(t * k));
  for (std::size_t o = 0; o < t; ++o)
    for (std::size_t i = 0; i < s; ++i)
      for (std::size_t x = 0; x < k; ++x)
        for (std::size_t y = 0; y < k; ++y) {
          const std::size_t a = first == Axis::kX ? x : y;
          const std::size_t b = first == Axis::kX ? y : x;
          m(static_cast<Index>(i * k + a), static_cast<Index>(o * k + b)) =
              kernel.at(o, i, x, y);
        }
  return m;
}

Kernel4D unmatricize_spatial(const Eigen::MatrixXd& m, std::size_t t, std::size_t s,
                             std::size_t k, Axis first) {
  if (m.rows() != static_cast<Index>(s * k) || m.cols() != static_cast<Index>(t * k)) {
    throw InvalidArgument("unmatricize_spatial: matrix must be (s k) x (t k)");
  }
  Kernel4D kernel(t, s, k);
  for (std::size_t o = 0; o < t; ++o)
    for (std::size_t i = 0; i < s; ++i)
      for (std::size_t x = 0; x < k; ++x)
        for (std::size_t y = 0; y < k; ++y) {
          const std::size_t a = first == Axis::kX ? x : y;
          const std::size_t b = first == Axis::kX ? y : x;
          kernel.at(o, i, x, y) =
              m(static_cast<Index>(i * k + a), static_cast<Index>(o * k + b));
        }
  return kernel;
}

}  // namespace convfact
