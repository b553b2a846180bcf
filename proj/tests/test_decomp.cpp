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

#include <gtest/gtest.h>

#include "convfact/decomposition.hpp"
#include "convfact/linalg.hpp"
#include "convfact/matricize.hpp"
#include "test_util.hpp"

namespace convfact {
namespace {

using testing::random_kernel;
using testing::random_map;
using testing::relative_error;

double kernel_rel_error(const Kernel4D& approx, const Kernel4D& exact) {
  return relative_error(approx.data(), exact.data());
}

double forward_rel_error(const DecomposedLayer& layer, const FeatureMap& x) {
  const FeatureMap staged = decomposed_forward(layer, x);
  const FeatureMap oracle = testing::naive_conv(reconstruct(layer), x);
  return relative_error(staged.data(), oracle.data());
}

Tensor random_tensor(std::vector<std::size_t> shape, std::uint64_t seed) {
  Tensor out(shape);
  Rng rng(seed);
  for (double& v : out.data()) v = rng.normal();
  return out;
}

TEST(WeightSvd, FullRankExactAndEckartYoung) {
  const Kernel4D w = random_kernel(6, 4, 3, 1);
  EXPECT_LE(kernel_rel_error(reconstruct(weight_svd(w, 6)), w), 1e-8);
  const auto s = linalg::svd(matricize_weight(w)).S;
  const Kernel4D approx = reconstruct(weight_svd(w, 3));
  const double err = testing::diff_norm(approx.data(), w.data());
  EXPECT_NEAR(err * err, linalg::tail_energy(s, 3), 1e-8 * w.frobenius_norm() * w.frobenius_norm());
  EXPECT_THROW(weight_svd(w, 0), InvalidArgument);
  EXPECT_THROW(weight_svd(w, 7), InvalidArgument);
}

TEST(WeightSvd, PlantedRankOne) {
  const Eigen::MatrixXd a = testing::random_matrix(18, 1, 2), b = testing::random_matrix(1, 5, 3);
  const Kernel4D w = unmatricize_weight(a * b, 5, 2, 3);
  EXPECT_LE(kernel_rel_error(reconstruct(weight_svd(w, 1)), w), 1e-12);
}

TEST(SpatialSvd, FullRankSeparableAndForward) {
  const Kernel4D w = random_kernel(5, 3, 3, 4);
  EXPECT_LE(kernel_rel_error(reconstruct(spatial_svd(w, 9)), w), 1e-8);
  EXPECT_LE(kernel_rel_error(reconstruct(spatial_svd(w, 9, Axis::kY)), w), 1e-8);

  const Eigen::MatrixXd a = testing::random_matrix(3, 3, 5), b = testing::random_matrix(5, 3, 6);
  Kernel4D sep(5, 3, 3);
  for (std::size_t o = 0; o < 5; ++o)
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t x = 0; x < 3; ++x)
        for (std::size_t y = 0; y < 3; ++y)
          sep.at(o, i, x, y) = a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(x)) *
                               b(static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(y));
  EXPECT_LE(kernel_rel_error(reconstruct(spatial_svd(sep, 1)), sep), 1e-12);

  const FeatureMap x = random_map(3, 6, 6, 7);
  EXPECT_LE(forward_rel_error(spatial_svd(w, 2), x), 1e-6);
  EXPECT_LE(forward_rel_error(spatial_svd(w, 2, Axis::kY), x), 1e-6);
}

TEST(SpatialSvd, EckartYoung) {
  const Kernel4D w = random_kernel(4, 5, 3, 8);
  const auto s = linalg::svd(matricize_spatial(w)).S;
  for (std::size_t r = 1; r <= 12; ++r) {
    const double err = testing::diff_norm(reconstruct(spatial_svd(w, r)).data(), w.data());
    EXPECT_NEAR(err * err, linalg::tail_energy(s, r), 1e-8 * w.frobenius_norm() * w.frobenius_norm());
  }
}

Kernel4D planted_cp(std::size_t t, std::size_t s, std::size_t k, std::size_t r,
                    std::uint64_t seed) {
  const Tensor ws = random_tensor({s, r}, seed), wy = random_tensor({k, r}, seed + 1),
               wx = random_tensor({k, r}, seed + 2), wt = random_tensor({t, r}, seed + 3);
  Kernel4D w(t, s, k);
  for (std::size_t o = 0; o < t; ++o)
    for (std::size_t i = 0; i < s; ++i)
      for (std::size_t x = 0; x < k; ++x)
        for (std::size_t y = 0; y < k; ++y)
          for (std::size_t q = 0; q < r; ++q)
            w.at(o, i, x, y) += ws.at(i, q) * wy.at(y, q) * wx.at(x, q) * wt.at(o, q);
  return w;
}

TEST(CpAls, PlantedRanks) {
  const Kernel4D w1 = planted_cp(4, 3, 3, 1, 10);
  EXPECT_LE(kernel_rel_error(reconstruct(cp_als(w1, 1)), w1), 1e-6);
  const Kernel4D w2 = planted_cp(5, 4, 3, 2, 20);
  EXPECT_LE(kernel_rel_error(reconstruct(cp_als(w2, 2)), w2), 1e-4);
}

TEST(CpAls, FactorNormalizationAndHistory) {
  const Kernel4D w = random_kernel(4, 3, 3, 30);
  const DecomposedLayer layer = cp_als(w, 3);
  for (std::size_t f = 0; f < 3; ++f) {
    for (std::size_t q = 0; q < 3; ++q) {
      double n = 0.0;
      for (std::size_t i = 0; i < layer.factors[f].dim(0); ++i) {
        n += layer.factors[f].at(i, q) * layer.factors[f].at(i, q);
      }
      EXPECT_NEAR(n, 1.0, 1e-10);
    }
  }
  const auto& h = layer.history.relative_error;
  ASSERT_GE(h.size(), 2u);
  for (std::size_t i = 1; i < h.size(); ++i) EXPECT_LE(h[i], h[i - 1] + 1e-10);
  EXPECT_EQ(layer.metadata.at("seed"), "0");
}

TEST(CpAls, ErrorNonincreasingInRank) {
  const Kernel4D w = random_kernel(4, 3, 3, 31);
  CpOptions options;
  options.seed = 5;
  const double e2 = kernel_rel_error(reconstruct(cp_als(w, 2, options)), w);
  const double e4 = kernel_rel_error(reconstruct(cp_als(w, 4, options)), w);
  EXPECT_LE(e4, e2 + 1e-9);
}

TEST(CpAls, DeterministicGivenSeed) {
  const Kernel4D w = random_kernel(3, 3, 3, 32);
  CpOptions options;
  options.seed = 9;
  EXPECT_EQ(cp_als(w, 3, options).factors, cp_als(w, 3, options).factors);
}

// Triple-loop Tucker sum written from the definition.
Kernel4D naive_tucker(const Tensor& w1, const Tensor& g, const Tensor& w2, std::size_t k) {
  const std::size_t s = w1.dim(0), r1 = w1.dim(1), t = w2.dim(0), r2 = w2.dim(1);
  Kernel4D out(t, s, k);
  for (std::size_t o = 0; o < t; ++o)
    for (std::size_t i = 0; i < s; ++i)
      for (std::size_t x = 0; x < k; ++x)
        for (std::size_t y = 0; y < k; ++y) {
          double v = 0.0;
          for (std::size_t a = 0; a < r1; ++a)
            for (std::size_t b = 0; b < r2; ++b) v += g.at(x, y, a, b) * w1.at(i, a) * w2.at(o, b);
          out.at(o, i, x, y) = v;
        }
  return out;
}

TEST(TuckerHooi, FullRankPlantedSubspaceAndNaiveSum) {
  const Kernel4D w = random_kernel(5, 4, 3, 40);
  EXPECT_LE(kernel_rel_error(reconstruct(tucker_hooi(w, 4, 5)), w), 1e-8);

  const Kernel4D planted =
      naive_tucker(random_tensor({4, 2}, 41), random_tensor({3, 3, 2, 5}, 42),
                   random_tensor({5, 5}, 43), 3);
  EXPECT_LE(kernel_rel_error(reconstruct(tucker_hooi(planted, 2, 5)), planted), 1e-6);

  const DecomposedLayer layer = tucker_hooi(w, 2, 3);
  EXPECT_LE(kernel_rel_error(reconstruct(layer),
                             naive_tucker(layer.factors[0], layer.factors[1], layer.factors[2], 3)),
            1e-10);
  EXPECT_THROW(tucker_hooi(w, 5, 2), InvalidArgument);
}

TEST(TuckerHooi, RefinementNotWorseThanHosvd) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Kernel4D w = random_kernel(6, 5, 3, 50 + seed);
    const DecomposedLayer layer = tucker_hooi(w, 2, 3);
    const auto& h = layer.history.relative_error;
    ASSERT_FALSE(h.empty());
    EXPECT_LE(h.back(), h.front() + 1e-12);
    for (std::size_t i = 1; i < h.size(); ++i) EXPECT_LE(h[i], h[i - 1] + 1e-12);
    EXPECT_NEAR(kernel_rel_error(reconstruct(layer), w), h.back(), 1e-8);
  }
}

TEST(TtSvd, MaximalPlantedAndTailBound) {
  const Kernel4D w = random_kernel(5, 4, 3, 60);
  const RankVector m = max_ranks({4, 5, 3}, Method::kTt);
  EXPECT_LE(kernel_rel_error(reconstruct(tt_svd(w, m[0], m[1], m[2])), w), 1e-8);

  const Tensor g1 = random_tensor({4, 2}, 61), g2 = random_tensor({2, 3, 2}, 62),
               g3 = random_tensor({2, 3, 2}, 63), g4 = random_tensor({2, 5}, 64);
  Kernel4D planted(5, 4, 3);
  for (std::size_t o = 0; o < 5; ++o)
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t x = 0; x < 3; ++x)
        for (std::size_t y = 0; y < 3; ++y)
          for (std::size_t a = 0; a < 2; ++a)
            for (std::size_t b = 0; b < 2; ++b)
              for (std::size_t c = 0; c < 2; ++c)
                planted.at(o, i, x, y) += g1.at(i, a) * g2.at(a, x, b) * g3.at(b, y, c) * g4.at(c, o);
  EXPECT_LE(kernel_rel_error(reconstruct(tt_svd(planted, 2, 2, 2)), planted), 1e-6);

  const DecomposedLayer layer = tt_svd(w, 2, 3, 2);
  const double err = testing::diff_norm(reconstruct(layer).data(), w.data());
  double tails = 0.0;
  for (double v : layer.history.truncation_tails) tails += v;
  EXPECT_LE(err * err, tails * (1 + 1e-10) + 1e-12);
  EXPECT_THROW(tt_svd(w, 5, 2, 2), InvalidArgument);
}

std::vector<DecomposedLayer> all_methods(const Kernel4D& w) {
  const std::size_t s = w.in_channels(), t = w.out_channels(), k = w.size();
  const std::size_t r1 = std::min<std::size_t>(2, std::min(s, k * k * t));
  const std::size_t r2 = std::min<std::size_t>(2, std::min(r1 * k, k * t));
  const std::size_t r3 = std::min<std::size_t>(2, std::min(r2 * k, t));
  return {weight_svd(w, std::min<std::size_t>(2, t)), spatial_svd(w, 2), cp_als(w, 3),
          tucker_hooi(w, std::min<std::size_t>(2, s), std::min<std::size_t>(2, t)),
          tt_svd(w, r1, r2, r3)};
}

TEST(DecomposedForward, ZeroInputAndFullRank) {
  const Kernel4D w = random_kernel(4, 3, 3, 70);
  for (const auto& layer : all_methods(w)) {
    const FeatureMap y = decomposed_forward(layer, FeatureMap(3, 5, 5));
    for (double v : y.data()) EXPECT_EQ(v, 0.0);
  }
  const FeatureMap x = random_map(3, 6, 6, 71);
  const FeatureMap exact = conv_direct(w, x);
  const RankVector tt = max_ranks({3, 4, 3}, Method::kTt);
  for (const auto& layer :
       {weight_svd(w, 4), spatial_svd(w, 9), tucker_hooi(w, 3, 4), tt_svd(w, tt[0], tt[1], tt[2])}) {
    EXPECT_LE(relative_error(decomposed_forward(layer, x).data(), exact.data()), 1e-6);
  }
}

TEST(DecomposedForward, MatchesReconstructThenConvolve) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Kernel4D w = random_kernel(2 + seed % 5, 1 + seed % 5, 3, 80 + seed);
    const FeatureMap x = random_map(w.in_channels(), 6, 6, 90 + seed);
    for (const auto& layer : all_methods(w)) EXPECT_LE(forward_rel_error(layer, x), 1e-6);
  }
  EXPECT_THROW(decomposed_forward(weight_svd(random_kernel(2, 2, 3, 1), 1), random_map(3, 4, 4, 1)),
               InvalidArgument);
}

TEST(DecomposedLayer, StoredParametersMatchCostModel) {
  for (std::size_t k : {1u, 3u, 5u}) {
    const Kernel4D w = random_kernel(4, 3, k, 100 + k);
    for (const auto& layer : {weight_svd(w, 2), spatial_svd(w, 2), cp_als(w, 2),
                              tucker_hooi(w, 2, 3), tt_svd(w, 2, 2, 2)}) {
      EXPECT_EQ(stored_parameter_count(layer), layer_cost(layer, 1, 1).params_compressed);
    }
  }
}

TEST(DecomposedLayer, ErrorNonincreasingInEachRank) {
  const Kernel4D w = random_kernel(5, 4, 3, 110);
  const auto err = [&](const DecomposedLayer& l) { return kernel_rel_error(reconstruct(l), w); };
  for (std::size_t r = 1; r < 5; ++r) {
    EXPECT_LE(err(weight_svd(w, r + 1)), err(weight_svd(w, r)) + 1e-12);
    EXPECT_LE(err(tucker_hooi(w, r, 3)), err(tucker_hooi(w, r, 2)) + 1e-9);
  }
  for (std::size_t r = 1; r < 3; ++r) {
    EXPECT_LE(err(tt_svd(w, 2, r + 1, 2)), err(tt_svd(w, 2, r, 2)) + 1e-12);
  }
}

TEST(Validate, RejectsInconsistentFactors) {
  DecomposedLayer layer = weight_svd(random_kernel(3, 2, 3, 120), 2);
  layer.ranks = {3};
  EXPECT_THROW(validate(layer), InvalidArgument);
}

}  // namespace
}  // namespace convfact
