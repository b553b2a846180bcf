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

#include "convfact/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "convfact/tensor.hpp"

namespace convfact::linalg {

namespace {

using Index = Eigen::Index;

constexpr int kMaxJacobiSweeps = 100;
constexpr double kJacobiTol = 1e-15;

void require_finite_matrix(const Eigen::MatrixXd& a, const char* who) {
  if (!a.allFinite()) throw InvalidArgument(std::string(who) + ": non-finite entry");
}

// Flips column signs so that the largest-magnitude entry of each column of
// `primary` is nonnegative; `follower` columns flip along.
void fix_signs(Eigen::MatrixXd& primary, Eigen::MatrixXd* follower) {
  for (Index j = 0; j < primary.cols(); ++j) {
    Index arg = 0;
    double best = -1.0;
    for (Index i = 0; i < primary.rows(); ++i) {
      const double mag = std::abs(primary(i, j));
      if (mag > best) {
        best = mag;
        arg = i;
      }
    }
    if (primary.rows() > 0 && primary(arg, j) < 0.0) {
      primary.col(j) *= -1.0;
      if (follower != nullptr) follower->col(j) *= -1.0;
    }
  }
}

std::vector<Index> descending_order(const Eigen::VectorXd& values) {
  std::vector<Index> order(static_cast<std::size_t>(values.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return values(a) > values(b); });
  return order;
}

// Replaces columns flagged in `degenerate` with unit vectors orthogonal to
// every other column, so the result has orthonormal columns.
void complete_basis(Eigen::MatrixXd& u, const std::vector<bool>& degenerate) {
  const Index m = u.rows();
  Index candidate = 0;
  for (Index j = 0; j < u.cols(); ++j) {
    if (!degenerate[static_cast<std::size_t>(j)]) continue;
    u.col(j).setZero();
    while (candidate < m) {
      Eigen::VectorXd e = Eigen::VectorXd::Unit(m, candidate++);
      for (int pass = 0; pass < 2; ++pass) {
        for (Index c = 0; c < u.cols(); ++c) {
          if (c == j) continue;
          e -= u.col(c).dot(e) * u.col(c);
        }
      }
      const double norm = e.norm();
      if (norm > 0.5) {
        u.col(j) = e / norm;
        break;
      }
    }
  }
}

// One-sided Jacobi for m >= n.
SvdResult svd_tall(const Eigen::MatrixXd& a) {
  const Index m = a.rows();
  const Index n = a.cols();
  Eigen::MatrixXd u = a;
  Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);

  for (int sweep = 0; sweep < kMaxJacobiSweeps; ++sweep) {
    bool rotated = false;
    for (Index p = 0; p + 1 < n; ++p) {
      for (Index q = p + 1; q < n; ++q) {
        const double alpha = u.col(p).squaredNorm();
        const double beta = u.col(q).squaredNorm();
        const double gamma = u.col(p).dot(u.col(q));
        if (gamma == 0.0 || std::abs(gamma) <= kJacobiTol * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double tangent =
            std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double cosine = 1.0 / std::sqrt(1.0 + tangent * tangent);
        const double sine = cosine * tangent;
        for (Index i = 0; i < m; ++i) {
          const double up = u(i, p);
          const double uq = u(i, q);
          u(i, p) = cosine * up - sine * uq;
          u(i, q) = sine * up + cosine * uq;
        }
        for (Index i = 0; i < n; ++i) {
          const double vp = v(i, p);
          const double vq = v(i, q);
          v(i, p) = cosine * vp - sine * vq;
          v(i, q) = sine * vp + cosine * vq;
        }
      }
    }
    if (!rotated) break;
  }

  Eigen::VectorXd norms(n);
  for (Index j = 0; j < n; ++j) norms(j) = u.col(j).norm();
  const auto order = descending_order(norms);

  SvdResult result;
  result.U.resize(m, n);
  result.S.resize(n);
  result.V.resize(n, n);
  const double largest = n > 0 ? norms(order.front()) : 0.0;
  const double cutoff = std::max(largest * 1e-13, std::numeric_limits<double>::min());
  std::vector<bool> degenerate(static_cast<std::size_t>(n), false);
  for (Index j = 0; j < n; ++j) {
    const Index src = order[static_cast<std::size_t>(j)];
    result.S(j) = norms(src);
    result.V.col(j) = v.col(src);
    if (norms(src) > cutoff) {
      result.U.col(j) = u.col(src) / norms(src);
    } else {
      degenerate[static_cast<std::size_t>(j)] = true;
    }
  }
  complete_basis(result.U, degenerate);
  fix_signs(result.U, &result.V);
  return result;
}

}  // namespace

SvdResult svd(const Eigen::MatrixXd& a) {
  require_finite_matrix(a, "svd");
  if (a.rows() >= a.cols()) return svd_tall(a);
  SvdResult t = svd_tall(a.transpose());
  SvdResult result{std::move(t.V), std::move(t.S), std::move(t.U)};
  fix_signs(result.U, &result.V);
  return result;
}

double tail_energy(const Eigen::VectorXd& singular_values, std::size_t r) {
  double tail = 0.0;
  for (Index i = static_cast<Index>(r); i < singular_values.size(); ++i) {
    tail += singular_values(i) * singular_values(i);
  }
  return tail;
}

EigResult eig_sym(const Eigen::MatrixXd& a_in) {
  require_finite_matrix(a_in, "eig_sym");
  if (a_in.rows() != a_in.cols()) throw InvalidArgument("eig_sym: matrix must be square");
  const double scale = std::max(1.0, a_in.cwiseAbs().maxCoeff());
  if ((a_in - a_in.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale) {
    throw InvalidArgument("eig_sym: matrix is not symmetric");
  }
  const Index n = a_in.rows();
  Eigen::MatrixXd a = 0.5 * (a_in + a_in.transpose());
  Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);

  for (int sweep = 0; sweep < kMaxJacobiSweeps; ++sweep) {
    double off = 0.0;
    for (Index p = 0; p < n; ++p)
      for (Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off <= 1e-30 * std::max(a.squaredNorm(), std::numeric_limits<double>::min())) break;

    for (Index p = 0; p + 1 < n; ++p) {
      for (Index q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double tangent =
            std::copysign(1.0, theta) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double cosine = 1.0 / std::sqrt(tangent * tangent + 1.0);
        const double sine = tangent * cosine;
        // A <- J^T A J with J the (p, q) rotation.
        for (Index i = 0; i < n; ++i) {
          const double aip = a(i, p);
          const double aiq = a(i, q);
          a(i, p) = cosine * aip - sine * aiq;
          a(i, q) = sine * aip + cosine * aiq;
        }
        for (Index i = 0; i < n; ++i) {
          const double api = a(p, i);
          const double aqi = a(q, i);
          a(p, i) = cosine * api - sine * aqi;
          a(q, i) = sine * api + cosine * aqi;
        }
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        for (Index i = 0; i < n; ++i) {
          const double vip = v(i, p);
          const double viq = v(i, q);
          v(i, p) = cosine * vip - sine * viq;
          v(i, q) = sine * vip + cosine * viq;
        }
      }
    }
  }

  Eigen::VectorXd diag = a.diagonal();
  const auto order = descending_order(diag);
  EigResult result;
  result.values.resize(n);
  result.vectors.resize(n, n);
  for (Index j = 0; j < n; ++j) {
    result.values(j) = diag(order[static_cast<std::size_t>(j)]);
    result.vectors.col(j) = v.col(order[static_cast<std::size_t>(j)]);
  }
  fix_signs(result.vectors, nullptr);
  return result;
}

double default_ridge_eps(const Eigen::MatrixXd& z) {
  if (z.rows() == 0) return 0.0;
  return 1e-8 * z.squaredNorm() / static_cast<double>(z.rows());
}

double ridge_eps_if_singular(const Eigen::MatrixXd& z) {
  const EigResult eig = eig_sym(z * z.transpose());
  if (eig.values.size() == 0) return 0.0;
  const double largest = eig.values(0);
  const double smallest = eig.values(eig.values.size() - 1);
  if (largest > 0.0 && smallest > 1e-12 * largest) return 0.0;
  return default_ridge_eps(z);
}

namespace {

// Eigendecomposition of Z Z^T + eps I with a singularity check.
EigResult metric(const Eigen::MatrixXd& z, double eps, const char* who) {
  if (eps < 0.0) throw InvalidArgument(std::string(who) + ": eps must be >= 0");
  Eigen::MatrixXd c = z * z.transpose();
  c.diagonal().array() += eps;
  EigResult eig = eig_sym(c);
  const double largest = eig.values.size() > 0 ? eig.values(0) : 0.0;
  const double smallest = eig.values.size() > 0 ? eig.values(eig.values.size() - 1) : 0.0;
  if (!(largest > 0.0) || smallest <= 1e-14 * largest) {
    throw ComputationError(std::string(who) + ": Z Z^T + eps I is singular");
  }
  return eig;
}

void check_shapes(const Eigen::MatrixXd& y, const Eigen::MatrixXd& z, const char* who) {
  if (y.cols() != z.cols()) {
    throw InvalidArgument(std::string(who) + ": Y and Z must have the same number of columns");
  }
  require_finite_matrix(y, who);
  require_finite_matrix(z, who);
}

}  // namespace

Eigen::MatrixXd ridge_solve(const Eigen::MatrixXd& y, const Eigen::MatrixXd& z, double eps) {
  check_shapes(y, z, "ridge_solve");
  const EigResult eig = metric(z, eps, "ridge_solve");
  const Eigen::MatrixXd yz = y * z.transpose();
  const Eigen::VectorXd inv = eig.values.cwiseInverse();
  return ((yz * eig.vectors) * inv.asDiagonal()) * eig.vectors.transpose();
}

RrrResult reduced_rank_regression(const Eigen::MatrixXd& y, const Eigen::MatrixXd& z,
                                  std::size_t r, double eps) {
  check_shapes(y, z, "reduced_rank_regression");
  if (r == 0) throw InvalidArgument("reduced_rank_regression: rank must be >= 1");
  if (r > static_cast<std::size_t>(y.rows())) {
    throw InvalidArgument("reduced_rank_regression: rank exceeds the row count of Y");
  }
  const EigResult eig = metric(z, eps, "reduced_rank_regression");
  const Eigen::VectorXd sqrt_l = eig.values.cwiseSqrt();
  const Eigen::MatrixXd c_inv_sqrt =
      eig.vectors * sqrt_l.cwiseInverse().asDiagonal() * eig.vectors.transpose();

  // B = Y Z^T C^-1 C^(1/2) = Y Z^T C^(-1/2).
  const Eigen::MatrixXd b = (y * z.transpose()) * c_inv_sqrt;
  const SvdResult dec = svd(b);
  const Index keep = std::min<Index>(static_cast<Index>(r), dec.S.size());

  RrrResult result;
  result.rank = static_cast<std::size_t>(keep);
  result.left = dec.U.leftCols(keep) * dec.S.head(keep).asDiagonal();
  result.right = dec.V.leftCols(keep).transpose() * c_inv_sqrt;
  result.M = result.left * result.right;
  result.residual = (y - result.M * z).norm();
  return result;
}

double soft_threshold(double value, double threshold) {
  if (value > threshold) return value - threshold;
  if (value < -threshold) return value + threshold;
  return 0.0;
}

LassoResult lasso_cd(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double lambda,
                     double tol, std::size_t max_sweeps) {
  if (lambda < 0.0) throw InvalidArgument("lasso_cd: lambda must be >= 0");
  if (x.rows() != y.size()) throw InvalidArgument("lasso_cd: X rows must match y length");
  require_finite_matrix(x, "lasso_cd");
  if (!y.allFinite()) throw InvalidArgument("lasso_cd: non-finite response");

  const Index p = x.cols();
  const Eigen::VectorXd col_sq = x.colwise().squaredNorm().transpose();
  LassoResult result;
  result.beta = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd residual = y;
  auto objective = [&] {
    return 0.5 * residual.squaredNorm() + lambda * result.beta.lpNorm<1>();
  };
  result.objective.push_back(objective());

  for (std::size_t sweep = 0; sweep < max_sweeps; ++sweep) {
    double max_change = 0.0;
    for (Index j = 0; j < p; ++j) {
      if (col_sq(j) == 0.0) continue;
      const double old = result.beta(j);
      const double rho = x.col(j).dot(residual) + col_sq(j) * old;
      const double updated = soft_threshold(rho, lambda) / col_sq(j);
      const double delta = updated - old;
      if (delta != 0.0) {
        residual.noalias() -= delta * x.col(j);
        result.beta(j) = updated;
        max_change = std::max(max_change, std::abs(delta));
      }
    }
    result.sweeps = sweep + 1;
    result.objective.push_back(objective());
    if (max_change <= tol) {
      result.converged = true;
      break;
    }
  }
  return result;
}

}  // namespace convfact::linalg
