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

#include <benchmark/benchmark.h>

#include "convfact/conv.hpp"
#include "convfact/data_opt.hpp"
#include "convfact/decomposition.hpp"
#include "convfact/linalg.hpp"
#include "convfact/rng.hpp"

namespace {

using namespace convfact;

Kernel4D random_kernel(std::size_t t, std::size_t s, std::size_t k, std::uint64_t seed) {
  Rng rng(seed);
  Kernel4D kernel(t, s, k);
  for (double& v : kernel.data()) v = rng.normal();
  return kernel;
}

FeatureMap random_map(std::size_t c, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  FeatureMap map(c, n, n);
  for (double& v : map.data()) v = rng.normal();
  return map;
}

void BM_Svd(benchmark::State& state) {
  const auto n = static_cast<Eigen::Index>(state.range(0));
  Rng rng(1);
  Eigen::MatrixXd a(n, n);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = rng.normal();
  for (auto _ : state) benchmark::DoNotOptimize(linalg::svd(a));
}
BENCHMARK(BM_Svd)->Arg(16)->Arg(64)->Arg(128);

void BM_ConvDirect(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const Kernel4D kernel = random_kernel(c, c, 3, 2);
  const FeatureMap input = random_map(c, 16, 3);
  for (auto _ : state) benchmark::DoNotOptimize(conv_direct(kernel, input));
}
BENCHMARK(BM_ConvDirect)->Arg(8)->Arg(32);

void BM_DecomposedForward(benchmark::State& state) {
  const Kernel4D kernel = random_kernel(32, 32, 3, 4);
  const FeatureMap input = random_map(32, 16, 5);
  DecomposedLayer layer;
  switch (state.range(0)) {
    case 0:
      layer = weight_svd(kernel, 8);
      break;
    case 1:
      layer = spatial_svd(kernel, 8);
      break;
    case 2:
      layer = tucker_hooi(kernel, 8, 8);
      break;
    default:
      layer = tt_svd(kernel, 8, 8, 8);
      break;
  }
  for (auto _ : state) benchmark::DoNotOptimize(decomposed_forward(layer, input));
}
BENCHMARK(BM_DecomposedForward)->DenseRange(0, 3);

void BM_CpAls(benchmark::State& state) {
  const Kernel4D kernel = random_kernel(16, 16, 3, 6);
  CpOptions options;
  options.max_iters = 50;
  for (auto _ : state) {
    benchmark::DoNotOptimize(cp_als(kernel, static_cast<std::size_t>(state.range(0)), options));
  }
}
BENCHMARK(BM_CpAls)->Arg(4)->Arg(16);

void BM_AsymDataSvd(benchmark::State& state) {
  const Kernel4D kernel = random_kernel(16, 8, 3, 7);
  std::vector<PatchSource> sources;
  for (std::uint64_t i = 0; i < 8; ++i) {
    const FeatureMap ref = random_map(8, 12, 100 + i);
    FeatureMap cur = ref;
    Rng rng(200 + i);
    for (double& v : cur.data()) v += 0.1 * rng.normal();
    sources.push_back(make_patch_source(kernel, {}, ref, cur));
  }
  const PatchBatch batch = sample_patches(sources, 50, 3, 9);
  for (auto _ : state) benchmark::DoNotOptimize(asym_data_svd(batch, kernel, {}, 4));
}
BENCHMARK(BM_AsymDataSvd);

}  // namespace

BENCHMARK_MAIN();
