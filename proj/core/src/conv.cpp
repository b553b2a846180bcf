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

#include "convfact/conv.hpp"

#include <string>

namespace convfact {

namespace {

using Index = std::ptrdiff_t;

void check_input(const FeatureMap& input, std::size_t channels, const char* who) {
  if (input.channels() != channels) {
    throw InvalidArgument(std::string(who) + ": input has " +
                          std::to_string(input.channels()) + " channels, expected " +
                          std::to_string(channels));
  }
  require_finite(input.data(), who);
}

}  // namespace

FeatureMap conv_direct(const Kernel4D& kernel, const FeatureMap& input,
                       std::span<const double> bias) {
  check_input(input, kernel.in_channels(), "conv_direct");
  const std::size_t t = kernel.out_channels();
  const std::size_t s = kernel.in_channels();
  const std::size_t k = kernel.size();
  const Index delta = static_cast<Index>(kernel.half_width());
  const std::size_t h = input.height();
  const std::size_t w = input.width();
  if (!bias.empty() && bias.size() != t) {
    throw InvalidArgument("conv_direct: bias length must equal output channels");
  }

  FeatureMap out(t, h, w);
  for (std::size_t o = 0; o < t; ++o) {
    for (std::size_t x = 0; x < h; ++x) {
      for (std::size_t y = 0; y < w; ++y) {
        double acc = 0.0;
        for (std::size_t i = 0; i < s; ++i) {
          for (std::size_t dx = 0; dx < k; ++dx) {
            const Index xx = static_cast<Index>(x + dx) - delta;
            for (std::size_t dy = 0; dy < k; ++dy) {
              const Index yy = static_cast<Index>(y + dy) - delta;
              acc += kernel.at(o, i, dx, dy) * input.padded(i, xx, yy);
            }
          }
        }
        out.at(o, x, y) = acc + (bias.empty() ? 0.0 : bias[o]);
      }
    }
  }
  return out;
}

FeatureMap conv_pointwise(const FeatureMap& input, const Eigen::MatrixXd& weights) {
  check_input(input, static_cast<std::size_t>(weights.cols()), "conv_pointwise");
  const std::size_t pixels = input.height() * input.width();
  const std::size_t c_out = static_cast<std::size_t>(weights.rows());
  // Channel-major storage means the map is a (channels x pixels) matrix.
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
      in(input.data().data(), static_cast<Index>(input.channels()),
         static_cast<Index>(pixels));
  FeatureMap out(c_out, input.height(), input.width());
  Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> dst(
      out.data().data(), static_cast<Index>(c_out), static_cast<Index>(pixels));
  dst.noalias() = weights * in;
  return out;
}

FeatureMap conv_axis(const FeatureMap& input, const Tensor& filter, Axis axis) {
  if (filter.rank() != 3) throw InvalidArgument("conv_axis: filter must be (c_in, k, c_out)");
  check_input(input, filter.dim(0), "conv_axis");
  const std::size_t c_in = filter.dim(0);
  const std::size_t k = filter.dim(1);
  const std::size_t c_out = filter.dim(2);
  const Index delta = static_cast<Index>((k - 1) / 2);
  const std::size_t h = input.height();
  const std::size_t w = input.width();

  FeatureMap out(c_out, h, w);
  for (std::size_t o = 0; o < c_out; ++o) {
    for (std::size_t x = 0; x < h; ++x) {
      for (std::size_t y = 0; y < w; ++y) {
        double acc = 0.0;
        for (std::size_t i = 0; i < c_in; ++i) {
          for (std::size_t d = 0; d < k; ++d) {
            const Index shift = static_cast<Index>(d) - delta;
            const double v = axis == Axis::kX
                                 ? input.padded(i, static_cast<Index>(x) + shift,
                                                static_cast<Index>(y))
                                 : input.padded(i, static_cast<Index>(x),
                                                static_cast<Index>(y) + shift);
            acc += filter.at(i, d, o) * v;
          }
        }
        out.at(o, x, y) = acc;
      }
    }
  }
  return out;
}

FeatureMap conv_axis_depthwise(const FeatureMap& input, const Tensor& filter, Axis axis) {
  if (filter.rank() != 2) {
    throw InvalidArgument("conv_axis_depthwise: filter must be (k, channels)");
  }
  check_input(input, filter.dim(1), "conv_axis_depthwise");
  const std::size_t k = filter.dim(0);
  const Index delta = static_cast<Index>((k - 1) / 2);
  FeatureMap out(input.channels(), input.height(), input.width());
  for (std::size_t c = 0; c < input.channels(); ++c) {
    for (std::size_t x = 0; x < input.height(); ++x) {
      for (std::size_t y = 0; y < input.width(); ++y) {
        double acc = 0.0;
        for (std::size_t d = 0; d < k; ++d) {
          const Index shift = static_cast<Index>(d) - delta;
          const double v =
              axis == Axis::kX
                  ? input.padded(c, static_cast<Index>(x) + shift, static_cast<Index>(y))
                  : input.padded(c, static_cast<Index>(x), static_cast<Index>(y) + shift);
          acc += filter.at(d, c) * v;
        }
        out.at(c, x, y) = acc;
      }
    }
  }
  return out;
}

void add_bias(FeatureMap& map, std::span<const double> bias) {
  if (bias.empty()) return;
  if (bias.size() != map.channels()) {
    throw InvalidArgument("add_bias: bias length must equal channel count");
  }
  for (std::size_t c = 0; c < map.channels(); ++c) {
    for (std::size_t x = 0; x < map.height(); ++x) {
      for (std::size_t y = 0; y < map.width(); ++y) map.at(c, x, y) += bias[c];
    }
  }
}

}  // namespace convfact
