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
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace convfact {

using RankVector = std::vector<std::size_t>;

enum class Method {
  kOriginal,
  kWeightSvd,
  kSpatialSvd,
  kCp,
  kTucker,
  kTt,
  // Spatial SVD whose second factor is further split by a data-fitted
  // low-rank map: (k x 1, s -> r_s), (1 x k, r_s -> r_d), (1 x 1, r_d -> t).
  kAsym3d,
};

/// Command-line spelling: "original", "weight-svd", "spatial-svd", "cp",
/// "tucker", "tt", "asym3d".
std::string_view method_name(Method method);
Method parse_method(std::string_view name);

/// Number of ranks a method takes (0 for the original layer).
std::size_t rank_arity(Method method);

/// Shape of a convolution layer: s input channels, t output channels,
/// k x k kernel, h x w feature map.
struct LayerDims {
  std::uint64_t s = 0;
  std::uint64_t t = 0;
  std::uint64_t k = 0;
  std::uint64_t h = 1;
  std::uint64_t w = 1;
};

struct LayerCost {
  std::uint64_t macs_original = 0;
  std::uint64_t params_original = 0;
  Method method = Method::kOriginal;
  RankVector ranks;
  std::uint64_t macs_compressed = 0;
  std::uint64_t params_compressed = 0;
  /// 1 - macs_compressed / macs_original. Negative when the decomposition
  /// costs more than the layer it replaces.
  double ratio = 0.0;
};

/// Exact MAC and parameter counts of one layer under `method`.
///
///   original      k^2 s t h w              k^2 s t
///   weight SVD    (k^2 s + t) r h w        (k^2 s + t) r
///   spatial SVD   (k s + k t) r h w        (k s + k t) r
///   CP            (s + 2k + t) r h w       (s + 2k + t) r
///   Tucker        (s r1 + k^2 r1 r2 + t r2) h w
///   tensor train  (s r1 + k r1 r2 + k r2 r3 + r3 t) h w
///   asym3d        (k s r1 + k r1 r2 + r2 t) h w
///
/// Throws InvalidArgument on wrong rank arity, zero ranks, or a rank above
/// its bound (weight r <= min(k^2 s, t); spatial r <= min(sk, tk);
/// Tucker r1 <= s, r2 <= t; TT r1 <= s, r3 <= t; asym3d r1 <= min(sk, tk),
/// r2 <= t).
LayerCost mac_cost(const LayerDims& dims, Method method, const RankVector& ranks = {});

/// Largest admissible rank vector for `method` as enforced by mac_cost.
/// CP is unbounded in mac_cost; this returns the generic CP rank bound
/// (product of the three smallest mode sizes of the (s, k, k, t) tensor).
RankVector max_ranks(const LayerDims& dims, Method method);

/// Model-level totals: C, C-hat and alpha = 1 - C-hat / C.
struct ModelCost {
  std::uint64_t macs_original = 0;
  std::uint64_t macs_compressed = 0;
  double ratio = 0.0;
  /// C-hat / C, the retained fraction.
  double retained = 1.0;
};

ModelCost aggregate(std::span<const LayerCost> layers);

}  // namespace convfact
