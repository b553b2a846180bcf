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

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "convfact/conv.hpp"
#include "convfact/data_opt.hpp"
#include "convfact/rng.hpp"
#include "convfact/tensor.hpp"

namespace convfact::testing {

inline Kernel4D random_kernel(std::size_t t, std::size_t s, std::size_t k, std::uint64_t seed) {
  Rng rng(seed);
  Kernel4D kernel(t, s, k);
  for (double& v : kernel.data()) v = rng.normal();
  return kernel;
}

inline FeatureMap random_map(std::size_t c, std::size_t h, std::size_t w, std::uint64_t seed) {
  Rng rng(seed);
  FeatureMap map(c, h, w);
  for (double& v : map.data()) v = rng.normal();
  return map;
}

inline Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

inline std::vector<double> random_vector(std::size_t n, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = scale * rng.normal();
  return v;
}

inline double diff_norm(std::span<const double> a, std::span<const double> b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(sum);
}

inline double norm(std::span<const double> a) {
  double sum = 0.0;
  for (double v : a) sum += v * v;
  return std::sqrt(sum);
}

inline double relative_error(std::span<const double> approx, std::span<const double> exact) {
  const double n = norm(exact);
  return n == 0.0 ? diff_norm(approx, exact) : diff_norm(approx, exact) / n;
}

/// Sliding-window correlation written independently of the library.
inline FeatureMap naive_conv(const Kernel4D& w, const FeatureMap& x) {
  const std::size_t t = w.out_channels(), s = w.in_channels(), k = w.size();
  const long d = static_cast<long>((k - 1) / 2);
  FeatureMap y(t, x.height(), x.width());
  for (std::size_t o = 0; o < t; ++o)
    for (long px = 0; px < static_cast<long>(x.height()); ++px)
      for (long py = 0; py < static_cast<long>(x.width()); ++py) {
        double acc = 0.0;
        for (std::size_t i = 0; i < s; ++i)
          for (long a = 0; a < static_cast<long>(k); ++a)
            for (long b = 0; b < static_cast<long>(k); ++b) {
              const long ix = px + a - d, iy = py + b - d;
              if (ix < 0 || iy < 0 || ix >= static_cast<long>(x.height()) ||
                  iy >= static_cast<long>(x.width()))
                continue;
              acc += w.at(o, i, static_cast<std::size_t>(a), static_cast<std::size_t>(b)) *
                     x.at(i, static_cast<std::size_t>(ix), static_cast<std::size_t>(iy));
            }
        y.at(o, static_cast<std::size_t>(px), static_cast<std::size_t>(py)) = acc;
      }
  return y;
}

/// Patch batch whose compressed prefix adds `prefix_noise` Gaussian noise
/// to every input map, plus `channel_shift` to input channel 0.
inline PatchBatch synthetic_batch(const Kernel4D& kernel, std::span<const double> bias,
                                  std::uint64_t seed, double prefix_noise,
                                  double channel_shift = 0.0, std::size_t images = 6,
                                  std::size_t per_image = 12, std::size_t map = 6) {
  std::vector<PatchSource> sources;
  Rng rng(seed);
  for (std::size_t img = 0; img < images; ++img) {
    FeatureMap ref(kernel.in_channels(), map, map);
    for (double& v : ref.data()) v = rng.normal();
    FeatureMap cur = ref;
    for (double& v : cur.data()) v += prefix_noise * rng.normal();
    for (std::size_t x = 0; x < map; ++x)
      for (std::size_t y = 0; y < map; ++y) cur.at(0, x, y) += channel_shift;
    sources.push_back(make_patch_source(kernel, bias, ref, cur));
  }
  return sample_patches(sources, per_image, kernel.size(), seed + 7);
}

}  // namespace convfact::testing
