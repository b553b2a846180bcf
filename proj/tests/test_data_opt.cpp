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

#include "convfact/data_opt.hpp"
#include "convfact/linalg.hpp"
#include "test_util.hpp"

namespace convfact {
namespace {

using testing::random_kernel;
using testing::random_map;
using testing::synthetic_batch;

Eigen::MatrixXd centered_cols(const Eigen::MatrixXd& rows) {
  return (rows.rowwise() - rows.colwise().mean()).transpose();
}

TEST(SamplePatches, OneByOneMapAlwaysSamplesTheOnlyLocation) {
  const Kernel4D w = random_kernel(2, 2, 3, 1);
  const FeatureMap x = random_map(2, 1, 1, 2);
  const std::vector<PatchSource> src{make_patch_source(w, {}, x, x)};
  const PatchBatch b = sample_patches(src, 5, 3, 3);
  ASSERT_EQ(b.rows(), 5u);
  for (Eigen::Index i = 1; i < 5; ++i) EXPECT_EQ(b.inputs.row(i), b.inputs.row(0));
  // Only the centre tap sees data; the rest is padding.
  EXPECT_EQ(b.inputs.row(0).cwiseAbs().sum(),
            std::abs(x.at(0, 0, 0)) + std::abs(x.at(1, 0, 0)));
}

TEST(SamplePatches, DeterministicRowCountAndConsistentResponses) {
  const Kernel4D w = random_kernel(3, 2, 3, 4);
  const std::vector<double> bias{0.5, -0.25, 1.0};
  const PatchBatch a = synthetic_batch(w, bias, 5, 0.2);
  const PatchBatch b = synthetic_batch(w, bias, 5, 0.2);
  EXPECT_EQ(a.rows(), 6u * 12u);
  EXPECT_EQ(a.inputs, b.inputs);
  EXPECT_EQ(a.ref_outputs, b.ref_outputs);
  // Patches are the compressed-prefix inputs: the layer reproduces cur_outputs.
  EXPECT_LE((layer_responses(w, bias, a.inputs) - a.cur_outputs).norm(), 1e-10);
  EXPECT_LE((a.ref_mean - a.ref_outputs.colwise().mean().transpose()).norm(), 1e-14);
}

TEST(SamplePatches, Errors) {
  EXPECT_THROW(sample_patches({}, 3, 3, 0), InvalidArgument);
  const Kernel4D w = random_kernel(2, 2, 3, 1);
  const FeatureMap x = random_map(2, 3, 3, 2);
  const std::vector<PatchSource> src{make_patch_source(w, {}, x, x)};
  EXPECT_THROW(sample_patches(src, 0, 3, 0), InvalidArgument);
}

TEST(DataSvd, FullRankIsIdentity) {
  const Kernel4D w = random_kernel(4, 3, 3, 6);
  const PatchBatch b = synthetic_batch(w, {}, 7, 0.0);
  const RefinedLayer r = data_svd(w, {}, b.ref_outputs, 4);
  EXPECT_LE((r.M - Eigen::MatrixXd::Identity(4, 4)).norm(), 1e-10);
  EXPECT_LE(r.residual, 1e-9);
  EXPECT_THROW(data_svd(w, {}, b.ref_outputs, 5), InvalidArgument);
  EXPECT_THROW(data_svd(w, {}, b.ref_outputs, 0), InvalidArgument);
}

TEST(DataSvd, PlantedSubspace) {
  const Kernel4D w = random_kernel(5, 2, 3, 8);
  const Eigen::MatrixXd basis = testing::random_matrix(5, 2, 9);
  Eigen::MatrixXd y = (testing::random_matrix(60, 2, 10) * basis.transpose()).rowwise() +
                      Eigen::RowVectorXd::Constant(5, 3.0);
  const RefinedLayer r = data_svd(w, {}, y, 2);
  EXPECT_LE(r.residual, 1e-8);
  EXPECT_LE(affine_residual(y, y, r.M, r.new_bias), 1e-8);
}

TEST(DataSvd, BeatsRandomRankOneProjectors) {
  const Kernel4D w = random_kernel(4, 2, 3, 11);
  const Eigen::MatrixXd y = testing::random_matrix(40, 4, 12);
  const RefinedLayer r = data_svd(w, {}, y, 1);
  const Eigen::MatrixXd yc = centered_cols(y);
  Rng rng(13);
  for (int trial = 0; trial < 10000; ++trial) {
    Eigen::Vector4d v;
    for (int i = 0; i < 4; ++i) v(i) = rng.normal();
    v.normalize();
    const Eigen::MatrixXd p = v * v.transpose();
    EXPECT_LE(r.residual, (yc - p * yc).norm() + 1e-12);
  }
}

TEST(DataSvd, CompressedLayerReproducesProjectedResponses) {
  const Kernel4D w = random_kernel(5, 3, 3, 14);
  const std::vector<double> bias = testing::random_vector(5, 15);
  const PatchBatch b = synthetic_batch(w, bias, 16, 0.0);
  const RefinedLayer r = data_svd(w, bias, b.ref_outputs, 2);
  const Eigen::MatrixXd got = layer_responses(r.compressed, b.inputs);
  const Eigen::VectorXd nb = Eigen::Map<const Eigen::VectorXd>(r.new_bias.data(), 5);
  const Eigen::MatrixXd want = (b.ref_outputs * r.M.transpose()).rowwise() + nb.transpose();
  EXPECT_LE((got - want).norm(), 1e-9 * want.norm());
  EXPECT_EQ(r.compressed.method, Method::kWeightSvd);
  EXPECT_EQ(r.compressed.ranks, RankVector{2});
}

TEST(AsymDataSvd, SymmetricCaseReducesToDataSvd) {
  const Kernel4D w = random_kernel(5, 3, 3, 17);
  const PatchBatch b = synthetic_batch(w, {}, 18, 0.0);
  const RefinedLayer sym = data_svd(w, {}, b.ref_outputs, 2);
  const RefinedLayer asym = asym_data_svd(b, w, {}, 2);
  EXPECT_LE((sym.M - asym.M).norm(), 1e-8);
}

TEST(AsymDataSvd, FullRankMatchesRidge) {
  const Kernel4D w = random_kernel(4, 3, 3, 19);
  const PatchBatch b = synthetic_batch(w, {}, 20, 0.3);
  const RefinedLayer r = asym_data_svd(b, w, {}, 4);
  const Eigen::MatrixXd full =
      linalg::ridge_solve(centered_cols(b.ref_outputs), centered_cols(b.cur_outputs), 0.0);
  EXPECT_LE((r.M - full).norm(), 1e-8 * full.norm());
}

TEST(AsymDataSvd, PlantedOutputBiasDominatesNaive) {
  const Kernel4D w = random_kernel(5, 3, 3, 21);
  PatchBatch b = synthetic_batch(w, {}, 22, 0.0);
  b.cur_outputs.col(2).array() += 1.5;
  update_means(b);
  const RefinedLayer sym = data_svd(w, {}, b.ref_outputs, 3);
  const RefinedLayer asym = asym_data_svd(b, w, {}, 3);
  const double naive = affine_residual(b.ref_outputs, b.cur_outputs, sym.M, sym.new_bias);
  EXPECT_LE(asym.residual, naive + 1e-12);
}

TEST(AsymDataSvd, DominatesNaiveOnRandomPrefixes) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Kernel4D w = random_kernel(5, 3, 3, 100 + seed);
    const PatchBatch b = synthetic_batch(w, {}, 200 + seed, 0.3, 0.5);
    for (std::size_t r = 1; r <= 4; ++r) {
      const RefinedLayer sym = data_svd(w, {}, b.ref_outputs, r);
      const RefinedLayer asym = asym_data_svd(b, w, {}, r);
      EXPECT_LE(asym.residual,
                affine_residual(b.ref_outputs, b.cur_outputs, sym.M, sym.new_bias) + 1e-10);
    }
  }
}

TEST(AsymDataSvd, ResidualNonincreasingInRank) {
  const Kernel4D w = random_kernel(6, 3, 3, 23);
  const PatchBatch b = synthetic_batch(w, {}, 24, 0.2);
  double prev_sym = INFINITY, prev_asym = INFINITY;
  for (std::size_t r = 1; r <= 6; ++r) {
    const double s = data_svd(w, {}, b.ref_outputs, r).residual;
    const double a = asym_data_svd(b, w, {}, r).residual;
    EXPECT_LE(s, prev_sym + 1e-10);
    EXPECT_LE(a, prev_asym + 1e-10);
    prev_sym = s;
    prev_asym = a;
  }
}

TEST(AsymDataSvd, CompressedLayerAppliesCorrection) {
  const Kernel4D w = random_kernel(5, 3, 3, 25);
  const std::vector<double> bias = testing::random_vector(5, 26);
  const PatchBatch b = synthetic_batch(w, bias, 27, 0.2);
  const RefinedLayer r = asym_data_svd(b, w, bias, 2);
  const Eigen::MatrixXd got = layer_responses(r.compressed, b.inputs);
  EXPECT_NEAR((b.ref_outputs - got).norm(), r.residual, 1e-9 * b.ref_outputs.norm());
  const linalg::SvdResult s = linalg::svd(r.M);
  EXPECT_LE(s.S(2), 1e-8);
}

TEST(AsymDataSvd, Errors) {
  const Kernel4D w = random_kernel(4, 3, 3, 28);
  const PatchBatch b = synthetic_batch(w, {}, 29, 0.1);
  EXPECT_THROW(asym_data_svd(b, w, {}, 0), InvalidArgument);
  EXPECT_THROW(asym_data_svd(b, w, {}, 5), InvalidArgument);
  EXPECT_THROW(asym_data_svd(b, random_kernel(4, 2, 3, 1), {}, 2), InvalidArgument);
}

double relu(double v) { return v > 0 ? v : 0; }

double grid_argmin(double y, double a, double lambda) {
  double best = -5.0, best_f = INFINITY;
  for (int i = 0; i <= 100000; ++i) {
    const double z = -5.0 + 1e-4 * i;
    const double f = (relu(y) - relu(z)) * (relu(y) - relu(z)) + lambda * (z - a) * (z - a);
    if (f < best_f) {
      best_f = f;
      best = z;
    }
  }
  return best;
}

TEST(ReluZStep, ScalarExampleMatchesGrid) {
  EXPECT_NEAR(relu_z_step(-1.0, 1.0, 1.0), grid_argmin(-1.0, 1.0, 1.0), 1e-3);
  EXPECT_THROW(relu_z_step(1.0, 1.0, 0.0), InvalidArgument);
}

TEST(ReluZStep, RandomTriplesMatchGrid) {
  Rng rng(30);
  for (int i = 0; i < 100; ++i) {
    const double y = rng.uniform(-3, 3), a = rng.uniform(-3, 3), l = rng.uniform(0.05, 5);
    EXPECT_NEAR(relu_z_step(y, a, l), grid_argmin(y, a, l), 1e-3);
  }
}

TEST(ReluAsym, TraceNonincreasingAtFixedLambdaAndFinalNotWorse) {
  const Kernel4D w = random_kernel(5, 3, 3, 31);
  const std::vector<double> bias = testing::random_vector(5, 32, 0.3);
  const PatchBatch b = synthetic_batch(w, bias, 33, 0.3);
  ReluAsymOptions options;
  options.max_outer = 4;
  const ReluAsymResult r = relu_asym(b, w, bias, 2, options);
  ASSERT_EQ(r.trace.size(), 2 * options.max_outer * options.lambda_schedule.size());
  for (std::size_t i = 1; i < r.trace.size(); ++i) {
    if (r.trace[i].lambda == r.trace[i - 1].lambda) {
      EXPECT_LE(r.trace[i].relaxed_objective, r.trace[i - 1].relaxed_objective * (1 + 1e-10) + 1e-10);
    }
  }
  EXPECT_LE(r.final_objective, r.initial_objective);
  const linalg::SvdResult s = linalg::svd(r.layer.M);
  EXPECT_LE(s.S(2), 1e-8);
}

TEST(ReluAsym, NonnegativeDataLargeLambdaConvergesToAsym) {
  const Kernel4D w = random_kernel(4, 3, 3, 34);
  PatchBatch b = synthetic_batch(w, {}, 35, 0.1);
  b.ref_outputs.array() += 50.0;
  b.cur_outputs.array() += 50.0;
  update_means(b);
  const RefinedLayer asym = asym_data_svd(b, w, {}, 2);
  ReluAsymOptions options;
  options.lambda_schedule = {1e8};
  const ReluAsymResult r = relu_asym(b, w, {}, 2, options);
  EXPECT_LE((r.layer.M - asym.M).norm(), 1e-5 * asym.M.norm());
}

TEST(ReluAsym, RejectsOtherActivations) {
  const Kernel4D w = random_kernel(4, 3, 3, 36);
  const PatchBatch b = synthetic_batch(w, {}, 37, 0.1);
  ReluAsymOptions options;
  options.activation = Activation::kTanh;
  EXPECT_THROW(relu_asym(b, w, {}, 2, options), InvalidArgument);
}

TEST(Asym3d, MaximalRanksReproduceTheLayer) {
  const Kernel4D w = random_kernel(4, 3, 3, 38);
  const std::vector<double> bias = testing::random_vector(4, 39);
  const PatchBatch b = synthetic_batch(w, bias, 40, 0.0);
  const RefinedLayer r = asym3d(w, bias, b, 9, 4);
  const FeatureMap x = random_map(3, 6, 6, 41);
  const FeatureMap got = decomposed_forward(r.compressed, x);
  const FeatureMap want = conv_direct(w, x, bias);
  EXPECT_LE(testing::relative_error(got.data(), want.data()), 1e-5);
}

TEST(Asym3d, ArchitectureAndCost) {
  const Kernel4D w = random_kernel(6, 4, 3, 42);
  const PatchBatch b = synthetic_batch(w, {}, 43, 0.2);
  const RefinedLayer r = asym3d(w, {}, b, 5, 3);
  const DecomposedLayer& l = r.compressed;
  ASSERT_EQ(l.method, Method::kAsym3d);
  EXPECT_EQ(l.factors[0].shape(), (std::vector<std::size_t>{4, 3, 5}));
  EXPECT_EQ(l.factors[1].shape(), (std::vector<std::size_t>{5, 3, 3}));
  EXPECT_EQ(l.factors[2].shape(), (std::vector<std::size_t>{3, 6}));
  const std::uint64_t hw = 20;
  const std::uint64_t composed = 3 * 4 * 5 * hw + 3 * 5 * 3 * hw + 3 * 6 * hw;
  EXPECT_EQ(layer_cost(l, 4, 5).macs_compressed, composed);

  const double e3 = testing::diff_norm(reconstruct(l).data(), w.data());
  const double es = testing::diff_norm(reconstruct(spatial_svd(w, 5, Axis::kY)).data(), w.data());
  EXPECT_GE(e3, es - 1e-10);
  EXPECT_THROW(asym3d(w, {}, b, 5, 7), InvalidArgument);
  EXPECT_THROW(asym3d(w, {}, b, 13, 3), InvalidArgument);
}

TEST(SpatialRefine, SelfGeneratedBatchGivesIdentity) {
  const Kernel4D w = random_kernel(4, 3, 3, 44);
  DecomposedLayer spatial = spatial_svd(w, 2);
  spatial.bias = testing::random_vector(4, 45);
  PatchBatch b = synthetic_batch(w, {}, 46, 0.0);
  b.ref_outputs = layer_responses(spatial, b.inputs);
  update_means(b);
  const RefinedLayer r = spatial_refine(spatial, b);
  EXPECT_LE((r.M - Eigen::MatrixXd::Identity(4, 4)).norm(), 1e-6);
}

TEST(SpatialRefine, PlantedPerturbationStrictlyImprovesAtSameCost) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Kernel4D w = random_kernel(5, 3, 3, 50 + seed);
    const PatchBatch b = synthetic_batch(w, {}, 60 + seed, 0.3, 0.4);
    DecomposedLayer spatial = spatial_svd(w, 3);
    const RefinedLayer r = spatial_refine(spatial, b);
    EXPECT_LT(r.residual, r.residual_before);
    const Eigen::MatrixXd got = layer_responses(r.compressed, b.inputs);
    EXPECT_NEAR((b.ref_outputs - got).norm(), r.residual, 1e-8 * b.ref_outputs.norm());
    EXPECT_EQ(layer_cost(r.compressed, 6, 6).macs_compressed,
              layer_cost(spatial, 6, 6).macs_compressed);
  }
}

TEST(SpatialRefine, RejectsOtherMethods) {
  const Kernel4D w = random_kernel(4, 3, 3, 47);
  const PatchBatch b = synthetic_batch(w, {}, 48, 0.1);
  EXPECT_THROW(spatial_refine(weight_svd(w, 2), b), InvalidArgument);
}

}  // namespace
}  // namespace convfact
