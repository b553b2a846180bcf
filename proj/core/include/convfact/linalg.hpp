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

namespace convfact::linalg {

/// Thin SVD A = U diag(S) V^T with p = min(m, n) columns in U and V and
/// singular values in descending order.
///
/// Sign convention: the largest-magnitude entry of every column of U is
/// nonnegative (first such entry on ties); V follows.
struct SvdResult {
  Eigen::MatrixXd U;
  Eigen::VectorXd S;
  Eigen::MatrixXd V;
};

/// One-sided (Hestenes) Jacobi SVD on the taller orientation. Deterministic.
/// Throws InvalidArgument on non-finite input.
SvdResult svd(const Eigen::MatrixXd& a);

/// Sum of squares of the singular values past index r, i.e. the squared
/// Frobenius error of the best rank-r approximation.
double tail_energy(const Eigen::VectorXd& singular_values, std::size_t r);

struct EigResult {
  Eigen::VectorXd values;   // descending
  Eigen::MatrixXd vectors;  // columns, same sign convention as SvdResult::U
};

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Throws
/// InvalidArgument if |A - A^T| exceeds 1e-8 (scaled by max(1, max|A|)).
EigResult eig_sym(const Eigen::MatrixXd& a);

/// 1e-8 * trace(Z Z^T) / rows(Z): the default Tikhonov term for inverses the
/// closed-form methods write as exact (pseudo-)inverses.
double default_ridge_eps(const Eigen::MatrixXd& z);

/// 0 when Z Z^T is numerically nonsingular (smallest eigenvalue above
/// 1e-12 of the largest), default_ridge_eps(Z) otherwise.
double ridge_eps_if_singular(const Eigen::MatrixXd& z);

/// M = Y Z^T (Z Z^T + eps I)^-1, the minimizer of
/// |Y - M Z|_F^2 + eps |M|_F^2. Y is (t x n), Z is (m x n), M is (t x m).
/// Throws ComputationError when eps == 0 and Z Z^T is singular.
Eigen::MatrixXd ridge_solve(const Eigen::MatrixXd& y, const Eigen::MatrixXd& z, double eps);

struct RrrResult {
  Eigen::MatrixXd M;      // t x m, rank <= `rank`
  Eigen::MatrixXd left;   // t x rank, M = left * right
  Eigen::MatrixXd right;  // rank x m
  std::size_t rank = 0;
  double residual = 0.0;  // |Y - M Z|_F
};

/// Reduced-rank regression: argmin |Y - M Z|_F subject to rank M <= r, with
/// C = Z Z^T + eps I as the metric. Solved by whitening:
///   M_full = Y Z^T C^-1,  B = M_full C^(1/2),  M = [B]_r C^(-1/2)
/// where [B]_r is the truncated SVD. Exact when eps = 0 and Z Z^T is
/// nonsingular; this realizes the two-sided (generalized) SVD solution
/// through a single ordinary SVD.
RrrResult reduced_rank_regression(const Eigen::MatrixXd& y, const Eigen::MatrixXd& z,
                                  std::size_t r, double eps);

struct LassoResult {
  Eigen::VectorXd beta;
  std::size_t sweeps = 0;
  bool converged = false;
  /// Objective 0.5 |y - X beta|^2 + lambda |beta|_1, one entry before the
  /// first sweep and one after each sweep.
  std::vector<double> objective;
};

/// Cyclic coordinate descent for 0.5 |y - X beta|^2 + lambda |beta|_1 using
/// soft-threshold updates. Sweeps until the largest coefficient change is
/// <= tol or max_sweeps is reached.
LassoResult lasso_cd(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double lambda,
                     double tol = 1e-8, std::size_t max_sweeps = 10000);

double soft_threshold(double value, double threshold);

}  // namespace convfact::linalg
