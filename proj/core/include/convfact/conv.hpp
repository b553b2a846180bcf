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

#include <span>

#include <Eigen/Dense>

#include "convfact/tensor.hpp"

namespace convfact {

/// Direct stride-1 convolution with zero padding of width (k-1)/2:
///
///   Y(o, x, y) = sum_i sum_dx sum_dy W(o, i, dx, dy) X(i, x + dx - d, y + dy - d)
///
/// Output has the same spatial size as the input. `bias` is either empty
/// or holds one value per output channel.
FeatureMap conv_direct(const Kernel4D& kernel, const FeatureMap& input,
                       std::span<const double> bias = {});

/// Spatial axis a one-dimensional filter slides along.
enum class Axis { kX = 0, kY = 1 };

// Building blocks for the staged forwards of decomposed layers.

/// 1x1 convolution: out(o, x, y) = sum_i weights(o, i) in(i, x, y).
FeatureMap conv_pointwise(const FeatureMap& input, const Eigen::MatrixXd& weights);

/// One-dimensional convolution along `axis` mixing channels. `filter` has
/// shape (c_in, k, c_out).
FeatureMap conv_axis(const FeatureMap& input, const Tensor& filter, Axis axis);

/// One-dimensional depthwise convolution along `axis`. `filter` has shape
/// (k, channels); channel c is filtered by column c.
FeatureMap conv_axis_depthwise(const FeatureMap& input, const Tensor& filter, Axis axis);

/// Adds `bias[c]` to every pixel of channel c.
void add_bias(FeatureMap& map, std::span<const double> bias);

}  // namespace convfact
