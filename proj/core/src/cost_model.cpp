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

#include "convfact/cost_model.hpp"

#include <algorithm>
#include <array>
#include <string>

#include "convfact/tensor.hpp"

namespace convfact {

namespace {

struct MethodInfo {
  Method method;
  std::string_view name;
  std::size_t arity;
};

constexpr std::array<MethodInfo, 7> kMethods{{
    {Method::kOriginal, "original", 0},
    {Method::kWeightSvd, "weight-svd", 1},
    {Method::kSpatialSvd, "spatial-svd", 1},
    {Method::kCp, "cp", 1},
    {Method::kTucker, "tucker", 2},
    {Method::kTt, "tt", 3},
    {Method::kAsym3d, "asym3d", 2},
}};

const MethodInfo& info(Method method) {
  for (const auto& m : kMethods) {
    if (m.method == method) return m;
  }
  throw InvalidArgument("unknown method");
}

void check_rank(std::uint64_t r, std::uint64_t bound, const char* what) {
  if (r > bound) {
    throw InvalidArgument(std::string("mac_cost: ") + what + " = " + std::to_string(r) +
                          " exceeds its bound " + std::to_string(bound));
  }
}

}  // namespace

std::string_view method_name(Method method) { return info(method).name; }

Method parse_method(std::string_view name) {
  for (const auto& m : kMethods) {
    if (m.name == name) return m.method;
  }
  throw InvalidArgument("unknown method '" + std::string(name) + "'");
}

std::size_t rank_arity(Method method) { return info(method).arity; }

LayerCost mac_cost(const LayerDims& d, Method method, const RankVector& ranks) {
  if (d.s == 0 || d.t == 0 || d.k == 0 || d.h == 0 || d.w == 0) {
    throw InvalidArgument("mac_cost: layer dimensions must be positive");
  }
  if (ranks.size() != rank_arity(method)) {
    throw InvalidArgument("mac_cost: method '" + std::string(method_name(method)) +
                          "' takes " + std::to_string(rank_arity(method)) + " rank(s), got " +
                          std::to_string(ranks.size()));
  }
  for (std::size_t r : ranks) {
    if (r == 0) throw InvalidArgument("mac_cost: ranks must be >= 1");
  }

  const std::uint64_t hw = d.h * d.w;
  const std::uint64_t k = d.k;
  const std::uint64_t s = d.s;
  const std::uint64_t t = d.t;

  LayerCost cost;
  cost.method = method;
  cost.ranks = ranks;
  cost.params_original = k * k * s * t;
  cost.macs_original = cost.params_original * hw;

  std::uint64_t params = 0;
  switch (method) {
    case Method::kOriginal:
      params = cost.params_original;
      break;
    case Method::kWeightSvd: {
      const std::uint64_t r = ranks[0];
      check_rank(r, std::min(k * k * s, t), "weight SVD rank");
      params = (k * k * s + t) * r;
      break;
    }
    case Method::kSpatialSvd: {
      const std::uint64_t r = ranks[0];
      check_rank(r, std::min(s * k, t * k), "spatial SVD rank");
      params = (k * s + k * t) * r;
      break;
    }
    case Method::kCp: {
      const std::uint64_t r = ranks[0];
      params = (s + 2 * k + t) * r;
      break;
    }
    case Method::kTucker: {
      const std::uint64_t r1 = ranks[0];
      const std::uint64_t r2 = ranks[1];
      check_rank(r1, s, "Tucker r1");
      check_rank(r2, t, "Tucker r2");
      params = s * r1 + k * k * r1 * r2 + t * r2;
      break;
    }
    case Method::kTt: {
      const std::uint64_t r1 = ranks[0];
      const std::uint64_t r2 = ranks[1];
      const std::uint64_t r3 = ranks[2];
      check_rank(r1, s, "TT r1");
      check_rank(r3, t, "TT r3");
      params = s * r1 + k * r1 * r2 + k * r2 * r3 + r3 * t;
      break;
    }
    case Method::kAsym3d: {
      const std::uint64_t r1 = ranks[0];
      const std::uint64_t r2 = ranks[1];
      check_rank(r1, std::min(s * k, t * k), "asym3d spatial rank");
      check_rank(r2, t, "asym3d data rank");
      params = k * s * r1 + k * r1 * r2 + r2 * t;
      break;
    }
  }
  // Every method here is a chain of stride-1 convolutions over the full map,
  // so each stored weight is used exactly once per output pixel.
  cost.params_compressed = params;
  cost.macs_compressed = params * hw;
  cost.ratio = 1.0 - static_cast<double>(cost.macs_compressed) /
                         static_cast<double>(cost.macs_original);
  return cost;
}

RankVector max_ranks(const LayerDims& d, Method method) {
  const std::size_t s = d.s;
  const std::size_t t = d.t;
  const std::size_t k = d.k;
  switch (method) {
    case Method::kOriginal:
      return {};
    case Method::kWeightSvd:
      return {std::min(k * k * s, t)};
    case Method::kSpatialSvd:
      return {std::min(s * k, t * k)};
    case Method::kCp: {
      std::array<std::size_t, 4> modes{s, k, k, t};
      std::sort(modes.begin(), modes.end());
      return {modes[0] * modes[1] * modes[2]};
    }
    case Method::kTucker:
      return {s, t};
    case Method::kTt: {
      const std::size_t r1 = std::min(s, k * k * t);
      const std::size_t r2 = std::min(r1 * k, k * t);
      const std::size_t r3 = std::min(r2 * k, t);
      return {r1, r2, r3};
    }
    case Method::kAsym3d:
      return {std::min(s * k, t * k), t};
  }
  throw InvalidArgument("max_ranks: unknown method");
}

ModelCost aggregate(std::span<const LayerCost> layers) {
  ModelCost total;
  for (const auto& layer : layers) {
    total.macs_original += layer.macs_original;
    total.macs_compressed += layer.macs_compressed;
  }
  if (total.macs_original > 0) {
    total.retained = static_cast<double>(total.macs_compressed) /
                     static_cast<double>(total.macs_original);
    total.ratio = 1.0 - total.retained;
  }
  return total;
}

}  // namespace convfact
