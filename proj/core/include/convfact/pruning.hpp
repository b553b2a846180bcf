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
#include <vector>

#include <Eigen/Dense>

#include "convfact/tensor.hpp"

namespace convfact {

struct PruneResult {
  /// Selection coefficient per input channel; zero exactly for dropped
  /// channels.
  std::vector<double> beta;
  /// Kept input channels, ascending.
  std::vector<std::size_t> kept;
  /// Kernel restricted to the kept channels (refit when data was used).
  Kernel4D refit_kernel;
  /// |Y - X_kept W_kept|_F after the weight step, or the norm of the dropped
  /// weights for magnitude pruning.
  double residual = 0.0;
  /// Same residual using the scaled original weights of the selection step.
  double residual_before_refit = 0.0;
  /// Sparsity weight the selection settled on.
  double lambda = 0.0;
};

/// Reorders patch columns from (x, y, i) order to channel-major (i, x, y),
/// so that columns [i k^2, (i + 1) k^2) hold channel i.
Eigen::MatrixXd patches_channel_major(const Eigen::MatrixXd& patches, std::size_t k,
                                      std::size_t s);

/// Lasso selection of `keep` input channels followed by a least-squares
/// refit of the survivors. `x` is n x (s k^2) channel-major, `y` is n x t.
/// The sparsity weight starts at `lambda_init`, doubles until at most
/// `keep` coefficients are nonzero, then is bisected (20 steps) down to the
/// smallest such value. Requires 1 <= keep < s.
PruneResult channel_prune(const Kernel4D& kernel, const Eigen::MatrixXd& x,
                          const Eigen::MatrixXd& y, std::size_t keep,
                          double lambda_init = 1e-4);

/// Least-squares weights for the given channel subset, beta set to 1 on it.
PruneResult refit_channels(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                           std::vector<std::size_t> kept, std::size_t s, std::size_t k);

/// Keeps the `keep` input channels with the largest Frobenius norm (lower
/// index wins ties). No refit.
PruneResult magnitude_prune(const Kernel4D& kernel, std::size_t keep);

}  // namespace convfact
