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

#include "convfact/pruning.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "convfact/linalg.hpp"

namespace convfact {

namespace {

using Index = Eigen::Index;

Index ix(std::size_t v) { return static_cast<Index>(v); }

// Channel i's weights as a t x k^2 block, columns in (x, y) order.
Eigen::MatrixXd channel_weights(const Kernel4D& kernel, std::size_t i) {
  const std::size_t t = kernel.out_channels(), k = kernel.size();
  Eigen::MatrixXd w(ix(t), ix(k * k));
  for (std::size_t o = 0; o < t; ++o)
    for (std::size_t x = 0; x < k; ++x)
      for (std::size_t y = 0; y < k; ++y) w(ix(o), ix(x * k + y)) = kernel.at(o, i, x, y);
  return w;
}

std::size_t count_nonzero(const Eigen::VectorXd& beta) {
  return static_cast<std::size_t>((beta.array() != 0.0).count());
}

}  // namespace

Eigen::MatrixXd patches_channel_major(const Eigen::MatrixXd& patches, std::size_t k,
                                      std::size_t s) {
  if (patches.cols() != ix(k * k * s)) {
    throw InvalidArgument("patches_channel_major: patch width must be k^2 s");
  }
  Eigen::MatrixXd out(patches.rows(), patches.cols());
  for (std::size_t x = 0; x < k; ++x)
    for (std::size_t y = 0; y < k; ++y)
      for (std::size_t i = 0; i < s; ++i)
        out.col(ix(i * k * k + x * k + y)) = patches.col(ix((x * k + y) * s + i));
  return out;
}

PruneResult refit_channels(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                           std::vector<std::size_t> kept, std::size_t s, std::size_t k) {
  const std::size_t kk = k * k;
  if (x.cols() != ix(s * kk)) throw InvalidArgument("refit_channels: X must be n x (s k^2)");
  if (x.rows() != y.rows() || x.rows() == 0) {
    throw InvalidArgument("refit_channels: X and Y rows must match and be nonempty");
  }
  std::sort(kept.begin(), kept.end());
  kept.erase(std::unique(kept.begin(), kept.end()), kept.end());
  if (kept.empty()) throw InvalidArgument("refit_channels: no channels to keep");
  for (std::size_t i : kept) {
    if (i >= s) throw InvalidArgument("refit_channels: channel index out of range");
  }

  const std::size_t t = static_cast<std::size_t>(y.cols());
  Eigen::MatrixXd xk(x.rows(), ix(kept.size() * kk));
  for (std::size_t j = 0; j < kept.size(); ++j) {
    xk.middleCols(ix(j * kk), ix(kk)) = x.middleCols(ix(kept[j] * kk), ix(kk));
  }
  const Eigen::MatrixXd xt = xk.transpose();
  const Eigen::MatrixXd m =
      linalg::ridge_solve(y.transpose(), xt, linalg::ridge_eps_if_singular(xt));

  PruneResult result;
  result.beta.assign(s, 0.0);
  for (std::size_t i : kept) result.beta[i] = 1.0;
  result.refit_kernel = Kernel4D(t, kept.size(), k);
  for (std::size_t o = 0; o < t; ++o)
    for (std::size_t j = 0; j < kept.size(); ++j)
      for (std::size_t a = 0; a < k; ++a)
        for (std::size_t b = 0; b < k; ++b)
          result.refit_kernel.at(o, j, a, b) = m(ix(o), ix(j * kk + a * k + b));
  result.residual = (y - xk * m.transpose()).norm();
  result.residual_before_refit = result.residual;
  result.kept = std::move(kept);
  return result;
}

PruneResult channel_prune(const Kernel4D& kernel, const Eigen::MatrixXd& x,
                          const Eigen::MatrixXd& y, std::size_t keep, double lambda_init) {
  const std::size_t s = kernel.in_channels(), t = kernel.out_channels(), k = kernel.size();
  const std::size_t kk = k * k;
  if (keep < 1 || keep >= s) {
    throw InvalidArgument("channel_prune: keep must satisfy 1 <= keep < s (got " +
                          std::to_string(keep) + ", s = " + std::to_string(s) + ")");
  }
  if (!(lambda_init > 0.0) || !std::isfinite(lambda_init)) {
    throw InvalidArgument("channel_prune: lambda_init must be a positive finite value");
  }
  if (x.cols() != ix(s * kk) || y.cols() != ix(t) || x.rows() != y.rows() || x.rows() == 0) {
    throw InvalidArgument("channel_prune: X must be n x (s k^2) and Y n x t with n >= 1");
  }
  if (!x.allFinite() || !y.allFinite()) throw InvalidArgument("channel_prune: non-finite data");
  if (x.isZero(0.0)) throw InvalidArgument("channel_prune: all-zero input patches");

  // Feature i is vec(X_i W_i^T) with W_i scaled to unit Frobenius norm.
  const Index n = x.rows();
  std::vector<Eigen::MatrixXd> responses(s);
  Eigen::MatrixXd features(n * ix(t), ix(s));
  for (std::size_t i = 0; i < s; ++i) {
    Eigen::MatrixXd w = channel_weights(kernel, i);
    const double norm = w.norm();
    if (norm > 0.0) w /= norm;
    responses[i] = x.middleCols(ix(i * kk), ix(kk)) * w.transpose();
    features.col(ix(i)) = Eigen::Map<const Eigen::VectorXd>(responses[i].data(), n * ix(t));
  }
  const Eigen::VectorXd target = Eigen::Map<const Eigen::VectorXd>(y.data(), n * ix(t));

  constexpr double kTol = 1e-10;
  auto solve = [&](double lambda) { return linalg::lasso_cd(features, target, lambda, kTol); };

  double hi = lambda_init;
  linalg::LassoResult feasible = solve(hi);
  double lo = 0.0;
  linalg::LassoResult dense = linalg::LassoResult{};
  bool have_dense = false;
  for (int doubling = 0; count_nonzero(feasible.beta) > keep; ++doubling) {
    if (doubling > 200) throw ComputationError("channel_prune: sparsity target unreachable");
    lo = hi;
    dense = std::move(feasible);
    have_dense = true;
    hi *= 2.0;
    feasible = solve(hi);
  }
  if (have_dense) {
    for (int step = 0; step < 20; ++step) {
      const double mid = 0.5 * (lo + hi);
      linalg::LassoResult trial = solve(mid);
      if (count_nonzero(trial.beta) <= keep) {
        hi = mid;
        feasible = std::move(trial);
      } else {
        lo = mid;
        dense = std::move(trial);
      }
    }
  }

  // Support of the selected solution, topped up from the denser neighbour
  // when the path skips past `keep`.
  std::vector<std::size_t> kept;
  Eigen::VectorXd beta = feasible.beta;
  for (std::size_t i = 0; i < s; ++i)
    if (beta(ix(i)) != 0.0) kept.push_back(i);
  if (kept.size() < keep) {
    std::vector<std::size_t> order(s);
    std::iota(order.begin(), order.end(), std::size_t{0});
    const Eigen::VectorXd ref = have_dense ? dense.beta : Eigen::VectorXd(features.transpose() * target);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return std::abs(ref(ix(a))) > std::abs(ref(ix(b)));
    });
    for (std::size_t i : order) {
      if (kept.size() == keep) break;
      if (beta(ix(i)) != 0.0) continue;
      beta(ix(i)) = ref(ix(i)) != 0.0 ? ref(ix(i)) : std::numeric_limits<double>::min();
      kept.push_back(i);
    }
    std::sort(kept.begin(), kept.end());
  }

  Eigen::MatrixXd scaled = Eigen::MatrixXd::Zero(n, ix(t));
  for (std::size_t i : kept) scaled += beta(ix(i)) * responses[i];

  PruneResult result = refit_channels(x, y, kept, s, k);
  result.beta.assign(beta.data(), beta.data() + beta.size());
  result.residual_before_refit = (y - scaled).norm();
  result.lambda = hi;
  return result;
}

PruneResult magnitude_prune(const Kernel4D& kernel, std::size_t keep) {
  const std::size_t s = kernel.in_channels(), t = kernel.out_channels(), k = kernel.size();
  if (keep < 1 || keep > s) {
    throw InvalidArgument("magnitude_prune: keep must satisfy 1 <= keep <= s");
  }
  std::vector<double> norms(s);
  for (std::size_t i = 0; i < s; ++i) norms[i] = channel_weights(kernel, i).norm();
  std::vector<std::size_t> order(s);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return norms[a] > norms[b]; });

  PruneResult result;
  result.kept.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep));
  std::sort(result.kept.begin(), result.kept.end());
  result.beta.assign(s, 0.0);
  double dropped = 0.0;
  for (std::size_t j = keep; j < s; ++j) dropped += norms[order[j]] * norms[order[j]];
  for (std::size_t i : result.kept) result.beta[i] = 1.0;
  result.refit_kernel = Kernel4D(t, keep, k);
  for (std::size_t o = 0; o < t; ++o)
    for (std::size_t j = 0; j < keep; ++j)
      for (std::size_t a = 0; a < k; ++a)
        for (std::size_t b = 0; b < k; ++b)
          result.refit_kernel.at(o, j, a, b) = kernel.at(o, result.kept[j], a, b);
  result.residual = std::sqrt(dropped);
  result.residual_before_refit = result.residual;
  return result;
}

}  // namespace convfact
