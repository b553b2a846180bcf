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

#include "convfact/decomposition.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "convfact/linalg.hpp"
#include "convfact/matricize.hpp"
#include "convfact/rng.hpp"

namespace convfact {

namespace {

using Index = Eigen::Index;
using linalg::svd;

Index ix(std::size_t v) { return static_cast<Index>(v); }

void require_rank(std::size_t r, std::size_t bound, const std::string& what) {
  if (r < 1 || r > bound) {
    throw InvalidArgument(what + " = " + std::to_string(r) + " outside [1, " +
                          std::to_string(bound) + "]");
  }
}

DecomposedLayer make_layer(const Kernel4D& kernel, Method method, RankVector ranks) {
  DecomposedLayer layer;
  layer.method = method;
  layer.ranks = std::move(ranks);
  layer.t = kernel.out_channels();
  layer.s = kernel.in_channels();
  layer.k = kernel.size();
  return layer;
}

Tensor matrix_to_tensor(const Eigen::MatrixXd& m) {
  Tensor out({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j)
      out.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = m(i, j);
  return out;
}

Eigen::MatrixXd tensor_to_matrix(const Tensor& t) {
  Eigen::MatrixXd m(ix(t.dim(0)), ix(t.dim(1)));
  for (std::size_t i = 0; i < t.dim(0); ++i)
    for (std::size_t j = 0; j < t.dim(1); ++j) m(ix(i), ix(j)) = t.at(i, j);
  return m;
}

double relative(double err, double norm) { return norm > 0.0 ? err / norm : err; }

// First r left singular vectors of `a`, extended to r orthonormal columns
// when `a` has fewer than r columns.
Eigen::MatrixXd leading_basis(const Eigen::MatrixXd& a, std::size_t r) {
  const Eigen::MatrixXd u = svd(a).U;
  if (u.cols() >= ix(r)) return u.leftCols(ix(r));
  Eigen::MatrixXd basis(a.rows(), ix(r));
  basis.leftCols(u.cols()) = u;
  Index filled = u.cols();
  for (Index e = 0; e < a.rows() && filled < ix(r); ++e) {
    Eigen::VectorXd v = Eigen::VectorXd::Unit(a.rows(), e);
    for (int pass = 0; pass < 2; ++pass) {
      v -= basis.leftCols(filled) * (basis.leftCols(filled).transpose() * v);
    }
    if (v.norm() > 0.5) basis.col(filled++) = v.normalized();
  }
  return basis;
}

Axis other(Axis a) { return a == Axis::kX ? Axis::kY : Axis::kX; }

std::string axis_name(Axis a) { return a == Axis::kX ? "x" : "y"; }

// ---------------------------------------------------------------------------
// CP helpers. The tensor is indexed (i, y, x, o) over modes (s, k, k, t).

struct Cp4 {
  std::array<std::size_t, 4> dims;
  std::vector<double> data;  // row-major over dims

  double at(std::size_t a, std::size_t b, std::size_t c, std::size_t d) const {
    return data[((a * dims[1] + b) * dims[2] + c) * dims[3] + d];
  }
};

Cp4 cp_tensor(const Kernel4D& w) {
  const std::size_t t = w.out_channels(), s = w.in_channels(), k = w.size();
  Cp4 out{{s, k, k, t}, std::vector<double>(s * k * k * t)};
  for (std::size_t i = 0; i < s; ++i)
    for (std::size_t y = 0; y < k; ++y)
      for (std::size_t x = 0; x < k; ++x)
        for (std::size_t o = 0; o < t; ++o)
          out.data[((i * k + y) * k + x) * t + o] = w.at(o, i, x, y);
  return out;
}

double cp_error(const Cp4& tensor, const std::array<Eigen::MatrixXd, 4>& f) {
  const auto& d = tensor.dims;
  const Index r = f[0].cols();
  double sum = 0.0;
  for (std::size_t a = 0; a < d[0]; ++a)
    for (std::size_t b = 0; b < d[1]; ++b)
      for (std::size_t c = 0; c < d[2]; ++c)
        for (std::size_t e = 0; e < d[3]; ++e) {
          double v = 0.0;
          for (Index q = 0; q < r; ++q)
            v += f[0](ix(a), q) * f[1](ix(b), q) * f[2](ix(c), q) * f[3](ix(e), q);
          const double diff = tensor.at(a, b, c, e) - v;
          sum += diff * diff;
        }
  return std::sqrt(sum);
}

// Matricized tensor times Khatri-Rao product for `mode`.
Eigen::MatrixXd mttkrp(const Cp4& tensor, const std::array<Eigen::MatrixXd, 4>& f,
                       std::size_t mode) {
  const auto& d = tensor.dims;
  const Index r = f[0].cols();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(ix(d[mode]), r);
  std::array<std::size_t, 4> idx{};
  for (idx[0] = 0; idx[0] < d[0]; ++idx[0])
    for (idx[1] = 0; idx[1] < d[1]; ++idx[1])
      for (idx[2] = 0; idx[2] < d[2]; ++idx[2])
        for (idx[3] = 0; idx[3] < d[3]; ++idx[3]) {
          const double v = tensor.at(idx[0], idx[1], idx[2], idx[3]);
          if (v == 0.0) continue;
          for (Index q = 0; q < r; ++q) {
            double prod = v;
            for (std::size_t m = 0; m < 4; ++m) {
              if (m != mode) prod *= f[m](ix(idx[m]), q);
            }
            out(ix(idx[mode]), q) += prod;
          }
        }
  return out;
}

// Solves X V = B for symmetric positive semidefinite V, adding a small ridge
// when V is badly conditioned.
Eigen::MatrixXd solve_gram(const Eigen::MatrixXd& v, const Eigen::MatrixXd& b) {
  const linalg::EigResult eig = linalg::eig_sym(v);
  const double largest = eig.values(0);
  const double smallest = eig.values(eig.values.size() - 1);
  Eigen::VectorXd lambda = eig.values;
  if (!(smallest > 0.0) || largest / smallest > 1e12) {
    lambda.array() += 1e-10 * std::max(largest, 1.0);
  }
  return ((b * eig.vectors) * lambda.cwiseInverse().asDiagonal()) * eig.vectors.transpose();
}

// ---------------------------------------------------------------------------
// Tucker helpers.

// Mode-s unfolding after contracting the t mode with U2 (t x r2):
// rows i, columns (b, x, y).
Eigen::MatrixXd tucker_s_unfold(const Kernel4D& w, const Eigen::MatrixXd& u2) {
  const std::size_t t = w.out_channels(), s = w.in_channels(), k = w.size();
  const std::size_t r2 = static_cast<std::size_t>(u2.cols());
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(ix(s), ix(r2 * k * k));
  for (std::size_t i = 0; i < s; ++i)
    for (std::size_t b = 0; b < r2; ++b)
      for (std::size_t x = 0; x < k; ++x)
        for (std::size_t y = 0; y < k; ++y) {
          double acc = 0.0;
          for (std::size_t o = 0; o < t; ++o) acc += u2(ix(o), ix(b)) * w.at(o, i, x, y);
          out(ix(i), ix((b * k + x) * k + y)) = acc;
        }
  return out;
}

// Mode-t unfolding after contracting the s mode with U1 (s x r1).
Eigen::MatrixXd tucker_t_unfold(const Kernel4D& w, const Eigen::MatrixXd& u1) {
  const std::size_t t = w.out_channels(), s = w.in_channels(), k = w.size();
  const std::size_t r1 = static_cast<std::size_t>(u1.cols());
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(ix(t), ix(r1 * k * k));
  for (std::size_t o = 0; o < t; ++o)
    for (std::size_t a = 0; a < r1; ++a)
      for (std::size_t x = 0; x < k; ++x)
        for (std::size_t y = 0; y < k; ++y) {
          double acc = 0.0;
          for (std::size_t i = 0; i < s; ++i) acc += u1(ix(i), ix(a)) * w.at(o, i, x, y);
          out(ix(o), ix((a * k + x) * k + y)) = acc;
        }
  return out;
}

Tensor tucker_core(const Kernel4D& w, const Eigen::MatrixXd& u1, const Eigen::MatrixXd& u2) {
  const std::size_t k = w.size();
  const std::size_t r1 = static_cast<std::size_t>(u1.cols());
  const std::size_t r2 = static_cast<std::size_t>(u2.cols());
  // (t x r1kk) after the s contraction, then project rows onto U2.
  const Eigen::MatrixXd partial = tucker_t_unfold(w, u1);
  const Eigen::MatrixXd projected = u2.transpose() * partial;  // r2 x (a, x, y)
  Tensor g({k, k, r1, r2});
  for (std::size_t a = 0; a < r1; ++a)
    for (std::size_t b = 0; b < r2; ++b)
      for (std::size_t x = 0; x < k; ++x)
        for (std::size_t y = 0; y < k; ++y) g.at(x, y, a, b) = projected(ix(b), ix((a * k + x) * k + y));
  return g;
}

double tucker_relative_error(double kernel_norm, const Tensor& core) {
  double core_sq = 0.0;
  for (double v : core.data()) core_sq += v * v;
  return relative(std::sqrt(std::max(0.0, kernel_norm * kernel_norm - core_sq)), kernel_norm);
}

}  // namespace

// ---------------------------------------------------------------------------

DecomposedLayer weight_svd(const Kernel4D& kernel, std::size_t r) {
  const std::size_t t = kernel.out_channels(), s = kernel.in_channels(), k = kernel.size();
  require_rank(r, std::min(k * k * s, t), "weight_svd: rank");
  const linalg::SvdResult dec = svd(matricize_weight(kernel));
  const Eigen::VectorXd root = dec.S.head(ix(r)).cwiseSqrt();
  const Eigen::MatrixXd first = dec.U.leftCols(ix(r)) * root.asDiagonal();              // (k^2 s) x r
  const Eigen::MatrixXd second = root.asDiagonal() * dec.V.leftCols(ix(r)).transpose();  // r x t

  DecomposedLayer layer = make_layer(kernel, Method::kWeightSvd, {r});
  Tensor w1({k, k, s, r});
  for (std::size_t x = 0; x < k; ++x)
    for (std::size_t y = 0; y < k; ++y)
      for (std::size_t i = 0; i < s; ++i)
        for (std::size_t q = 0; q < r; ++q)
          w1.at(x, y, i, q) = first(ix(weight_row(x, y, i, k, s)), ix(q));
  layer.factors = {std::move(w1), matrix_to_tensor(second)};
  layer.history.truncation_tails = {linalg::tail_energy(dec.S, r)};
  return layer;
}

DecomposedLayer spatial_svd(const Kernel4D& kernel, std::size_t r, Axis first_axis) {
  const std::size_t t = kernel.out_channels(), s = kernel.in_channels(), k = kernel.size();
  require_rank(r, std::min(s * k, t * k), "spatial_svd: rank");
  const linalg::SvdResult dec = svd(matricize_spatial(kernel, first_axis));
  const Eigen::VectorXd root = dec.S.head(ix(r)).cwiseSqrt();
  const Eigen::MatrixXd first = dec.U.leftCols(ix(r)) * root.asDiagonal();              // (s k) x r
  const Eigen::MatrixXd second = root.asDiagonal() * dec.V.leftCols(ix(r)).transpose();  // r x (t k)

  DecomposedLayer layer = make_layer(kernel, Method::kSpatialSvd, {r});
  layer.first_axis = first_axis;
  Tensor f1({s, k, r});
  for (std::size_t i = 0; i < s; ++i)
    for (std::size_t a = 0; a < k; ++a)
      for (std::size_t q = 0; q < r; ++q) f1.at(i, a, q) = first(ix(i * k + a), ix(q));
  Tensor f2({r, k, t});
  for (std::size_t q = 0; q < r; ++q)
    for (std::size_t b = 0; b < k; ++b)
      for (std::size_t o = 0; o < t; ++o) f2.at(q, b, o) = second(ix(q), ix(o * k + b));
  layer.factors = {std::move(f1), std::move(f2)};
  layer.history.truncation_tails = {linalg::tail_energy(dec.S, r)};
  layer.metadata["first_axis"] = axis_name(first_axis);
  return layer;
}

DecomposedLayer cp_als(const Kernel4D& kernel, std::size_t r, const CpOptions& options) {
  if (r < 1) throw InvalidArgument("cp_als: rank must be >= 1");
  const Cp4 tensor = cp_tensor(kernel);
  const double norm = kernel.frobenius_norm();

  Rng rng(options.seed);
  std::array<Eigen::MatrixXd, 4> f;
  for (std::size_t m = 0; m < 4; ++m) {
    f[m].resize(ix(tensor.dims[m]), ix(r));
    for (Index i = 0; i < f[m].rows(); ++i)
      for (Index q = 0; q < f[m].cols(); ++q) f[m](i, q) = rng.uniform(-1.0, 1.0);
  }

  DecomposedLayer layer = make_layer(kernel, Method::kCp, {r});
  FitHistory& history = layer.history;
  history.converged = false;
  history.relative_error.push_back(relative(cp_error(tensor, f), norm));

  for (std::size_t iter = 0; iter < options.max_iters; ++iter) {
    for (std::size_t mode = 0; mode < 4; ++mode) {
      Eigen::MatrixXd gram = Eigen::MatrixXd::Ones(ix(r), ix(r));
      for (std::size_t m = 0; m < 4; ++m) {
        if (m != mode) gram.array() *= (f[m].transpose() * f[m]).array();
      }
      f[mode] = solve_gram(gram, mttkrp(tensor, f, mode));
    }
    for (std::size_t m = 0; m < 3; ++m) {
      for (Index q = 0; q < ix(r); ++q) {
        const double scale = f[m].col(q).norm();
        if (scale > 0.0) {
          f[m].col(q) /= scale;
          f[3].col(q) *= scale;
        }
      }
    }
    const double err = relative(cp_error(tensor, f), norm);
    const double previous = history.relative_error.back();
    history.relative_error.push_back(err);
    history.iterations = iter + 1;
    if (std::abs(previous - err) < options.tol) {
      history.converged = true;
      break;
    }
  }

  layer.factors = {matrix_to_tensor(f[0]), matrix_to_tensor(f[1]), matrix_to_tensor(f[2]),
                   matrix_to_tensor(f[3])};
  layer.metadata["init"] = "uniform[-1,1]";
  layer.metadata["seed"] = std::to_string(options.seed);
  layer.metadata["max_iters"] = std::to_string(options.max_iters);
  layer.metadata["iterations"] = std::to_string(history.iterations);
  layer.metadata["converged"] = history.converged ? "true" : "false";
  return layer;
}

DecomposedLayer tucker_hooi(const Kernel4D& kernel, std::size_t r1, std::size_t r2,
                            const TuckerOptions& options) {
  const std::size_t t = kernel.out_channels(), s = kernel.in_channels();
  require_rank(r1, s, "tucker_hooi: r1");
  require_rank(r2, t, "tucker_hooi: r2");
  const double norm = kernel.frobenius_norm();

  // HOSVD on the two channel modes.
  Eigen::MatrixXd u1 =
      leading_basis(tucker_s_unfold(kernel, Eigen::MatrixXd::Identity(ix(t), ix(t))), r1);
  Eigen::MatrixXd u2 =
      leading_basis(tucker_t_unfold(kernel, Eigen::MatrixXd::Identity(ix(s), ix(s))), r2);
  Tensor core = tucker_core(kernel, u1, u2);

  DecomposedLayer layer = make_layer(kernel, Method::kTucker, {r1, r2});
  FitHistory& history = layer.history;
  history.converged = false;
  history.relative_error.push_back(tucker_relative_error(norm, core));

  for (std::size_t iter = 0; iter < options.max_iters; ++iter) {
    const Eigen::MatrixXd next_u1 = leading_basis(tucker_s_unfold(kernel, u2), r1);
    const Eigen::MatrixXd next_u2 = leading_basis(tucker_t_unfold(kernel, next_u1), r2);
    Tensor next_core = tucker_core(kernel, next_u1, next_u2);
    const double err = tucker_relative_error(norm, next_core);
    const double previous = history.relative_error.back();
    history.iterations = iter + 1;
    // HOOI is monotone in exact arithmetic; keep the previous iterate if
    // rounding would make the error tick up.
    if (err > previous) {
      history.relative_error.push_back(previous);
      history.converged = true;
      break;
    }
    u1 = next_u1;
    u2 = next_u2;
    core = std::move(next_core);
    history.relative_error.push_back(err);
    if (previous - err < options.tol) {
      history.converged = true;
      break;
    }
  }

  layer.factors = {matrix_to_tensor(u1), std::move(core), matrix_to_tensor(u2)};
  layer.metadata["init"] = "hosvd";
  layer.metadata["iterations"] = std::to_string(history.iterations);
  return layer;
}

DecomposedLayer tt_svd(const Kernel4D& kernel, std::size_t r1, std::size_t r2,
                       std::size_t r3) {
  const std::size_t t = kernel.out_channels(), s = kernel.in_channels(), k = kernel.size();
  require_rank(r1, std::min(s, k * k * t), "tt_svd: r1");
  require_rank(r2, std::min(r1 * k, k * t), "tt_svd: r2");
  require_rank(r3, std::min(r2 * k, t), "tt_svd: r3");

  // s x (x, y, o)
  Eigen::MatrixXd unfold(ix(s), ix(k * k * t));
  for (std::size_t i = 0; i < s; ++i)
    for (std::size_t x = 0; x < k; ++x)
      for (std::size_t y = 0; y < k; ++y)
        for (std::size_t o = 0; o < t; ++o)
          unfold(ix(i), ix((x * k + y) * t + o)) = kernel.at(o, i, x, y);

  DecomposedLayer layer = make_layer(kernel, Method::kTt, {r1, r2, r3});
  auto& tails = layer.history.truncation_tails;

  const linalg::SvdResult d1 = svd(unfold);
  tails.push_back(linalg::tail_energy(d1.S, r1));
  const Eigen::MatrixXd w1 = d1.U.leftCols(ix(r1));
  const Eigen::MatrixXd rest1 =
      d1.S.head(ix(r1)).asDiagonal() * d1.V.leftCols(ix(r1)).transpose();  // r1 x (x, y, o)

  // (a, x) x (y, o)
  Eigen::MatrixXd m2(ix(r1 * k), ix(k * t));
  for (std::size_t a = 0; a < r1; ++a)
    for (std::size_t x = 0; x < k; ++x)
      for (std::size_t y = 0; y < k; ++y)
        for (std::size_t o = 0; o < t; ++o)
          m2(ix(a * k + x), ix(y * t + o)) = rest1(ix(a), ix((x * k + y) * t + o));
  const linalg::SvdResult d2 = svd(m2);
  tails.push_back(linalg::tail_energy(d2.S, r2));
  const Eigen::MatrixXd rest2 =
      d2.S.head(ix(r2)).asDiagonal() * d2.V.leftCols(ix(r2)).transpose();  // r2 x (y, o)

  // (b, y) x o
  Eigen::MatrixXd m3(ix(r2 * k), ix(t));
  for (std::size_t b = 0; b < r2; ++b)
    for (std::size_t y = 0; y < k; ++y)
      for (std::size_t o = 0; o < t; ++o) m3(ix(b * k + y), ix(o)) = rest2(ix(b), ix(y * t + o));
  const linalg::SvdResult d3 = svd(m3);
  tails.push_back(linalg::tail_energy(d3.S, r3));

  Tensor c2({r1, k, r2});
  for (std::size_t a = 0; a < r1; ++a)
    for (std::size_t x = 0; x < k; ++x)
      for (std::size_t b = 0; b < r2; ++b) c2.at(a, x, b) = d2.U(ix(a * k + x), ix(b));
  Tensor c3({r2, k, r3});
  for (std::size_t b = 0; b < r2; ++b)
    for (std::size_t y = 0; y < k; ++y)
      for (std::size_t c = 0; c < r3; ++c) c3.at(b, y, c) = d3.U(ix(b * k + y), ix(c));
  const Eigen::MatrixXd c4 =
      d3.S.head(ix(r3)).asDiagonal() * d3.V.leftCols(ix(r3)).transpose();  // r3 x t

  layer.factors = {matrix_to_tensor(w1), std::move(c2), std::move(c3), matrix_to_tensor(c4)};
  return layer;
}

// ---------------------------------------------------------------------------

void validate(const DecomposedLayer& layer) {
  const std::size_t t = layer.t, s = layer.s, k = layer.k;
  if (t == 0 || s == 0 || k == 0 || k % 2 == 0) {
    throw InvalidArgument("DecomposedLayer: invalid source dimensions");
  }
  if (layer.ranks.size() != rank_arity(layer.method) || layer.method == Method::kOriginal) {
    throw InvalidArgument("DecomposedLayer: rank arity does not match method");
  }
  for (std::size_t r : layer.ranks) {
    if (r == 0) throw InvalidArgument("DecomposedLayer: ranks must be >= 1");
  }
  using Shape = std::vector<std::size_t>;
  std::vector<Shape> expected;
  const auto& r = layer.ranks;
  switch (layer.method) {
    case Method::kOriginal:
      break;
    case Method::kWeightSvd:
      expected = {{k, k, s, r[0]}, {r[0], t}};
      break;
    case Method::kSpatialSvd:
      expected = {{s, k, r[0]}, {r[0], k, t}};
      break;
    case Method::kCp:
      expected = {{s, r[0]}, {k, r[0]}, {k, r[0]}, {t, r[0]}};
      break;
    case Method::kTucker:
      expected = {{s, r[0]}, {k, k, r[0], r[1]}, {t, r[1]}};
      break;
    case Method::kTt:
      expected = {{s, r[0]}, {r[0], k, r[1]}, {r[1], k, r[2]}, {r[2], t}};
      break;
    case Method::kAsym3d:
      expected = {{s, k, r[0]}, {r[0], k, r[1]}, {r[1], t}};
      break;
  }
  if (layer.factors.size() != expected.size()) {
    throw InvalidArgument("DecomposedLayer: wrong number of factors for method");
  }
  for (std::size_t f = 0; f < expected.size(); ++f) {
    if (layer.factors[f].shape() != expected[f]) {
      throw InvalidArgument("DecomposedLayer: factor " + std::to_string(f) +
                            " has the wrong shape");
    }
  }
  if (!layer.bias.empty() && layer.bias.size() != t) {
    throw InvalidArgument("DecomposedLayer: bias length must equal t");
  }
}

FeatureMap decomposed_forward(const DecomposedLayer& layer, const FeatureMap& input) {
  validate(layer);
  if (input.channels() != layer.s) {
    throw InvalidArgument("decomposed_forward: input has " + std::to_string(input.channels()) +
                          " channels, expected " + std::to_string(layer.s));
  }
  const auto& f = layer.factors;
  const std::size_t k = layer.k;
  FeatureMap out;
  switch (layer.method) {
    case Method::kOriginal:
      break;
    case Method::kWeightSvd: {
      const std::size_t r = layer.ranks[0];
      Kernel4D first(r, layer.s, k);
      for (std::size_t q = 0; q < r; ++q)
        for (std::size_t i = 0; i < layer.s; ++i)
          for (std::size_t x = 0; x < k; ++x)
            for (std::size_t y = 0; y < k; ++y) first.at(q, i, x, y) = f[0].at(x, y, i, q);
      out = conv_pointwise(conv_direct(first, input), tensor_to_matrix(f[1]).transpose());
      break;
    }
    case Method::kSpatialSvd:
      out = conv_axis(conv_axis(input, f[0], layer.first_axis), f[1], other(layer.first_axis));
      break;
    case Method::kCp: {
      const FeatureMap x1 = conv_pointwise(input, tensor_to_matrix(f[0]).transpose());
      const FeatureMap x2 = conv_axis_depthwise(x1, f[1], Axis::kY);
      const FeatureMap x3 = conv_axis_depthwise(x2, f[2], Axis::kX);
      out = conv_pointwise(x3, tensor_to_matrix(f[3]));
      break;
    }
    case Method::kTucker: {
      const std::size_t r1 = layer.ranks[0], r2 = layer.ranks[1];
      Kernel4D core(r2, r1, k);
      for (std::size_t b = 0; b < r2; ++b)
        for (std::size_t a = 0; a < r1; ++a)
          for (std::size_t x = 0; x < k; ++x)
            for (std::size_t y = 0; y < k; ++y) core.at(b, a, x, y) = f[1].at(x, y, a, b);
      const FeatureMap x1 = conv_pointwise(input, tensor_to_matrix(f[0]).transpose());
      out = conv_pointwise(conv_direct(core, x1), tensor_to_matrix(f[2]));
      break;
    }
    case Method::kTt: {
      const FeatureMap x1 = conv_pointwise(input, tensor_to_matrix(f[0]).transpose());
      const FeatureMap x2 = conv_axis(x1, f[1], Axis::kX);
      const FeatureMap x3 = conv_axis(x2, f[2], Axis::kY);
      out = conv_pointwise(x3, tensor_to_matrix(f[3]).transpose());
      break;
    }
    case Method::kAsym3d: {
      const FeatureMap x1 = conv_axis(input, f[0], layer.first_axis);
      const FeatureMap x2 = conv_axis(x1, f[1], other(layer.first_axis));
      out = conv_pointwise(x2, tensor_to_matrix(f[2]).transpose());
      break;
    }
  }
  add_bias(out, layer.bias);
  return out;
}

Kernel4D reconstruct(const DecomposedLayer& layer) {
  validate(layer);
  const std::size_t t = layer.t, s = layer.s, k = layer.k;
  const auto& f = layer.factors;
  const auto& r = layer.ranks;
  Kernel4D w(t, s, k);
  for (std::size_t o = 0; o < t; ++o)
    for (std::size_t i = 0; i < s; ++i)
      for (std::size_t x = 0; x < k; ++x)
        for (std::size_t y = 0; y < k; ++y) {
          double v = 0.0;
          switch (layer.method) {
            case Method::kOriginal:
              break;
            case Method::kWeightSvd:
              for (std::size_t q = 0; q < r[0]; ++q) v += f[0].at(x, y, i, q) * f[1].at(q, o);
              break;
            case Method::kSpatialSvd: {
              const std::size_t a = layer.first_axis == Axis::kX ? x : y;
              const std::size_t b = layer.first_axis == Axis::kX ? y : x;
              for (std::size_t q = 0; q < r[0]; ++q) v += f[0].at(i, a, q) * f[1].at(q, b, o);
              break;
            }
            case Method::kCp:
              for (std::size_t q = 0; q < r[0]; ++q)
                v += f[0].at(i, q) * f[1].at(y, q) * f[2].at(x, q) * f[3].at(o, q);
              break;
            case Method::kTucker:
              for (std::size_t a = 0; a < r[0]; ++a)
                for (std::size_t b = 0; b < r[1]; ++b)
                  v += f[1].at(x, y, a, b) * f[0].at(i, a) * f[2].at(o, b);
              break;
            case Method::kTt:
              for (std::size_t a = 0; a < r[0]; ++a)
                for (std::size_t b = 0; b < r[1]; ++b)
                  for (std::size_t c = 0; c < r[2]; ++c)
                    v += f[0].at(i, a) * f[1].at(a, x, b) * f[2].at(b, y, c) * f[3].at(c, o);
              break;
            case Method::kAsym3d: {
              const std::size_t a0 = layer.first_axis == Axis::kX ? x : y;
              const std::size_t b0 = layer.first_axis == Axis::kX ? y : x;
              for (std::size_t a = 0; a < r[0]; ++a)
                for (std::size_t b = 0; b < r[1]; ++b)
                  v += f[0].at(i, a0, a) * f[1].at(a, b0, b) * f[2].at(b, o);
              break;
            }
          }
          w.at(o, i, x, y) = v;
        }
  return w;
}

std::size_t stored_parameter_count(const DecomposedLayer& layer) {
  std::size_t total = 0;
  for (const auto& f : layer.factors) total += f.size();
  return total;
}

LayerCost layer_cost(const DecomposedLayer& layer, std::size_t h, std::size_t w) {
  return mac_cost(LayerDims{layer.s, layer.t, layer.k, h, w}, layer.method, layer.ranks);
}

}  // namespace convfact
