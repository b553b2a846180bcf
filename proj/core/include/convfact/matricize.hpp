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

#include <Eigen/Dense>

#include "convfact/conv.hpp"
#include "convfact/tensor.hpp"

namespace convfact {

/// (k^2 s) x t matrix with entry
///   row = (x * k + y) * s + i,  col = o   holding W(o, i, x, y).
/// The (x, y, i) row order is also the flattening order of input patches,
/// so a layer response is `matricize_weight(W).transpose() * patch`.
Eigen::MatrixXd matricize_weight(const Kernel4D& kernel);
Kernel4D unmatricize_weight(const Eigen::MatrixXd& m, std::size_t t, std::size_t s,
                            std::size_t k);

inline std::size_t weight_row(std::size_t x, std::size_t y, std::size_t i, std::size_t k,
                              std::size_t s) {
  return (x * k + y) * s + i;
}

/// (s k) x (t k) matrix pairing each input channel with one spatial axis and
/// each output channel with the other:
///   row = i * k + a,  col = o * k + b
/// where (a, b) = (x, y) when `first` is Axis::kX and (y, x) otherwise.
Eigen::MatrixXd matricize_spatial(const Kernel4D& kernel, Axis first = Axis::kX);
Kernel4D unmatricize_spatial(const Eigen::MatrixXd& m, std::size_t t, std::size_t s,
                             std::size_t k, Axis first = Axis::kX);

}  // namespace convfact
