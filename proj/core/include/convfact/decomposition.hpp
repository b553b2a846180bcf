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
#include <map>
#include <string>
#include <vector>

#include "convfact/conv.hpp"
#include "convfact/cost_model.hpp"
#include "convfact/tensor.hpp"

namespace convfact {

/// Progress of an iterative decomposition, or the truncation tails of a
/// sequential one.
struct FitHistory {
  /// |W - reconstruct|_F / |W|_F after initialization and after every
  /// iteration (CP, Tucker).
  std::vector<double> relative_error;
  /// Squared singular values discarded by each truncation step (TT).
  std::vector<double> truncation_tails;
  std::size_t iterations = 0;
  bool converged = true;
};

/// Factors of a decomposed convolution. Shapes per method:
///
///   kWeightSvd   [0] (k, k, s, r)  indexed (x, y, i, r)   k x k conv s -> r
///                [1] (r, t)                                1 x 1 conv r -> t
///   kSpatialSvd  [0] (s, k, r)   1-d conv along first_axis, s -> r
///                [1] (r, k, t)   1-d conv along the other axis, r -> t
///   kCp          [0] W_s (s, r)  [1] W_y (k, r)  [2] W_x (k, r)  [3] W_t (t, r)
///   kTucker      [0] W_1 (s, r1)  [1] G (k, k, r1, r2) indexed (x, y, a, b)
///                [2] W_2 (t, r2)
///   kTt          [0] (s, r1)  [1] (r1, k, r2) along x  [2] (r2, k, r3) along y
///                [3] (r3, t)
///   kAsym3d      [0] (s, k, r1) along first_axis  [1] (r1, k, r2) along the
///                other axis  [2] (r2, t)
///
/// `bias` is empty or holds t values added after the last stage.
struct DecomposedLayer {
  Method method = Method::kOriginal;
  RankVector ranks;
  std::size_t t = 0;
  std::size_t s = 0;
  std::size_t k = 0;
  Axis first_axis = Axis::kX;
  std::vector<Tensor> factors;
  std::vector<double> bias;
  FitHistory history;
  std::map<std::string, std::string> metadata;
};

/// Truncated SVD of matricize_weight with the square-root split
/// W1 = U S^(1/2), W2 = S^(1/2) V^T. Requires 1 <= r <= min(k^2 s, t).
DecomposedLayer weight_svd(const Kernel4D& kernel, std::size_t r);

/// Truncated SVD of matricize_spatial(kernel, first_axis). The default runs
/// the 1-d filter over x first (s -> r) and over y second (r -> t).
/// Requires 1 <= r <= min(sk, tk).
DecomposedLayer spatial_svd(const Kernel4D& kernel, std::size_t r,
                            Axis first_axis = Axis::kX);

struct CpOptions {
  std::size_t max_iters = 500;
  double tol = 1e-12;
  std::uint64_t seed = 0;
};

/// Rank-r CP decomposition of the (s, y, x, t)-ordered kernel by alternating
/// least squares from a seeded uniform[-1, 1] start. Columns of W_s, W_y,
/// W_x are unit-norm with the scale carried by W_t. Stops when the relative
/// error changes by less than `tol` or after `max_iters` sweeps; a stop on
/// the iteration cap is reported through history.converged.
DecomposedLayer cp_als(const Kernel4D& kernel, std::size_t r, const CpOptions& options = {});

struct TuckerOptions {
  std::size_t max_iters = 100;
  double tol = 1e-13;
};

/// Partial Tucker-2 (channel modes only): truncated HOSVD initialization
/// refined by HOOI. Factors are orthonormal. Requires 1 <= r1 <= s,
/// 1 <= r2 <= t.
DecomposedLayer tucker_hooi(const Kernel4D& kernel, std::size_t r1, std::size_t r2,
                            const TuckerOptions& options = {});

/// TT-SVD of the (s, x, y, t)-ordered kernel, truncating the s bond first,
/// then the two spatial bonds left to right. Requires
/// 1 <= r1 <= min(s, k^2 t), 1 <= r2 <= min(r1 k, k t), 1 <= r3 <= min(r2 k, t).
DecomposedLayer tt_svd(const Kernel4D& kernel, std::size_t r1, std::size_t r2,
                       std::size_t r3);

/// Runs the layer as its chain of smaller convolutions.
FeatureMap decomposed_forward(const DecomposedLayer& layer, const FeatureMap& input);

/// Evaluates the factor sum back into a dense (t, s, k, k) kernel.
Kernel4D reconstruct(const DecomposedLayer& layer);

/// Throws InvalidArgument unless factor shapes agree with method and ranks.
void validate(const DecomposedLayer& layer);

/// Number of weights stored across all factors (bias excluded).
std::size_t stored_parameter_count(const DecomposedLayer& layer);

LayerCost layer_cost(const DecomposedLayer& layer, std::size_t h, std::size_t w);

}  // namespace convfact
