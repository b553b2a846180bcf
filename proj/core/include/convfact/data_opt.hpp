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
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "convfact/decomposition.hpp"
#include "convfact/tensor.hpp"

namespace convfact {

/// Sampled layer inputs with the responses they produce.
///
/// Row j of every matrix belongs to the same sample. `inputs` rows are k x k
/// x s patches flattened in matricize_weight row order (x, y, i), taken from
/// the feature map fed to this layer by the (possibly already compressed)
/// network prefix. `ref_outputs` are responses y of the uncompressed model
/// and `cur_outputs` the responses z = W x_hat + b of the original layer on
/// the compressed prefix's input.
struct PatchBatch {
  std::size_t k = 0;
  std::size_t s = 0;
  std::size_t t = 0;
  Eigen::MatrixXd inputs;       // n x (k^2 s)
  Eigen::MatrixXd ref_outputs;  // n x t
  Eigen::MatrixXd cur_outputs;  // n x t
  Eigen::VectorXd ref_mean;     // y-bar
  Eigen::VectorXd cur_mean;     // z-bar

  std::size_t rows() const { return static_cast<std::size_t>(inputs.rows()); }
  /// Fewer samples than output channels; covariance estimates are rank
  /// deficient.
  bool underdetermined() const { return rows() < t; }
};

/// One image's worth of maps for sampling. `input` is what the compressed
/// prefix feeds the layer; `ref_output` and `cur_output` are the layer's
/// full output maps in the uncompressed and compressed pipelines.
struct PatchSource {
  FeatureMap input;
  FeatureMap ref_output;
  FeatureMap cur_output;
};

/// Runs the original layer on both inputs to build a PatchSource.
PatchSource make_patch_source(const Kernel4D& kernel, std::span<const double> bias,
                              const FeatureMap& ref_input, const FeatureMap& cur_input);

/// Draws `per_image` uniformly random locations per source (seeded) and
/// extracts the zero-padded k x k patch of `input` centered there together
/// with both output vectors at the same location.
PatchBatch sample_patches(std::span<const PatchSource> sources, std::size_t per_image,
                          std::size_t k, std::uint64_t seed);

/// Recomputes ref_mean / cur_mean from the stored rows.
void update_means(PatchBatch& batch);

/// A layer followed by an output-space correction: the refined response to
/// input x is  M * wrapped(x) + new_bias  where wrapped(x) includes the
/// wrapped layer's own bias. `compressed` folds all of it into one
/// deployable DecomposedLayer.
struct RefinedLayer {
  Eigen::MatrixXd M;
  std::vector<double> new_bias;
  std::variant<Kernel4D, DecomposedLayer> wrapped;
  std::vector<double> wrapped_bias;
  std::size_t rank = 0;
  /// |Y - (M Z + new_bias)|_F over the batch, and the same with M = I,
  /// new_bias = 0.
  double residual = 0.0;
  double residual_before = 0.0;
  DecomposedLayer compressed;
};

/// Responses of a dense layer at the patch centers: n x t.
Eigen::MatrixXd layer_responses(const Kernel4D& kernel, std::span<const double> bias,
                                const Eigen::MatrixXd& patches);
/// Responses of a decomposed layer (bias included) at the patch centers.
Eigen::MatrixXd layer_responses(const DecomposedLayer& layer, const Eigen::MatrixXd& patches);

/// |Y - (Z M^T + 1 bias^T)|_F with Y, Z given as n x t row-sample matrices.
double affine_residual(const Eigen::MatrixXd& y, const Eigen::MatrixXd& z,
                       const Eigen::MatrixXd& m, std::span<const double> bias);

/// PCA projector on the reference responses: M = U_r U_r^T from the
/// eigendecomposition of the centered covariance, giving the data-optimized
/// weight factorization W1 = U_r, W2 = U_r^T W. `ref_outputs` is n x t.
RefinedLayer data_svd(const Kernel4D& kernel, std::span<const double> bias,
                      const Eigen::MatrixXd& ref_outputs, std::size_t r);

/// Rank-r map from the centered compressed responses to the centered
/// reference responses (reduced-rank regression), with
/// new_bias = y-bar - M z-bar.
RefinedLayer asym_data_svd(const PatchBatch& batch, const Kernel4D& kernel,
                           std::span<const double> bias, std::size_t r);

enum class Activation { kRelu, kSigmoid, kTanh };

struct ReluAsymOptions {
  std::vector<double> lambda_schedule{0.01, 0.1, 1.0, 10.0, 100.0};
  /// Alternations of (Z-step, (M, b)-step) per lambda value.
  std::size_t max_outer = 2;
  Activation activation = Activation::kRelu;
};

struct ReluAsymStep {
  double lambda = 0.0;
  std::string stage;  // "z" or "mb"
  /// |relu(Y) - relu(Z)|^2 + lambda |Z - M Z_hat - b|^2 after the step.
  double relaxed_objective = 0.0;
  /// |relu(Y) - relu(M Z_hat + b)|^2 for the current (M, b).
  double nonlinear_objective = 0.0;
};

struct ReluAsymResult {
  RefinedLayer layer;
  std::vector<ReluAsymStep> trace;
  double initial_objective = 0.0;  // nonlinear objective at the asym_data_svd start
  double final_objective = 0.0;    // nonlinear objective of the returned (M, b)
};

/// Exact minimizer over z of (relu(y) - relu(z))^2 + lambda (z - a)^2.
double relu_z_step(double y, double a, double lambda);

/// Alternating minimization of the ReLU-aware relaxation, starting from
/// asym_data_svd and raising lambda along the schedule. Returns the visited
/// (M, b) with the lowest nonlinear objective.
ReluAsymResult relu_asym(const PatchBatch& batch, const Kernel4D& kernel,
                         std::span<const double> bias, std::size_t r,
                         const ReluAsymOptions& options = {});

/// Spatial SVD to rank r_s (filter along y first, then x), then a rank-r_d
/// data-fitted split of the second spatial factor. The result is a chain
/// (k x 1, s -> r_s), (1 x k, r_s -> r_d), (1 x 1, r_d -> t).
RefinedLayer asym3d(const Kernel4D& kernel, std::span<const double> bias,
                    const PatchBatch& batch, std::size_t r_s, std::size_t r_d);

/// Full-rank least-squares map from the spatial SVD layer's responses to
/// the reference responses, folded into the second factor (W_v <- M W_v).
RefinedLayer spatial_refine(const DecomposedLayer& layer, const PatchBatch& batch);

}  // namespace convfact
