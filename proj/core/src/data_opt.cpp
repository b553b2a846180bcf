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

#include "convfact/data_opt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "convfact/linalg.hpp"
#include "convfact/matricize.hpp"
#include "convfact/rng.hpp"

namespace convfact {

namespace {

using Index = Eigen::Index;

Index ix(std::size_t v) { return static_cast<Index>(v); }

Eigen::VectorXd to_vector(std::span<const double> v, std::size_t n) {
  if (v.empty()) return Eigen::VectorXd::Zero(ix(n));
  if (v.size() != n) throw InvalidArgument("bias length must equal output channels");
  return Eigen::Map<const Eigen::VectorXd>(v.data(), ix(n));
}

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

// Columns are samples.
Eigen::MatrixXd centered_t(const Eigen::MatrixXd& rows, const Eigen::VectorXd& mean) {
  return (rows.rowwise() - mean.transpose()).transpose();
}

Eigen::VectorXd column_mean(const Eigen::MatrixXd& rows) {
  if (rows.rows() == 0) return Eigen::VectorXd::Zero(rows.cols());
  return rows.colwise().mean().transpose();
}

void check_batch(const PatchBatch& batch, const Kernel4D& kernel, const char* who) {
  if (batch.rows() == 0) throw InvalidArgument(std::string(who) + ": empty batch");
  if (batch.k != kernel.size() || batch.s != kernel.in_channels() ||
      batch.t != kernel.out_channels()) {
    throw InvalidArgument(std::string(who) + ": batch shape does not match the kernel");
  }
  if (batch.inputs.cols() != ix(batch.k * batch.k * batch.s) ||
      batch.ref_outputs.cols() != ix(batch.t) || batch.cur_outputs.cols() != ix(batch.t) ||
      batch.ref_outputs.rows() != batch.inputs.rows() ||
      batch.cur_outputs.rows() != batch.inputs.rows()) {
    throw InvalidArgument(std::string(who) + ": batch matrices are not aligned");
  }
}

// (k^2 s) x r matrix in matricize_weight row order -> (k, k, s, r) factor.
Tensor weight_first_factor(const Eigen::MatrixXd& m, std::size_t k, std::size_t s) {
  const std::size_t r = static_cast<std::size_t>(m.cols());
  Tensor f({k, k, s, r});
  for (std::size_t x = 0; x < k; ++x)
    for (std::size_t y = 0; y < k; ++y)
      for (std::size_t i = 0; i < s; ++i)
        for (std::size_t q = 0; q < r; ++q)
          f.at(x, y, i, q) = m(ix(weight_row(x, y, i, k, s)), ix(q));
  return f;
}

Tensor matrix_tensor(const Eigen::MatrixXd& m) {
  Tensor f({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j)
      f.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = m(i, j);
  return f;
}

// Weight-SVD shaped layer computing  left * right * W^T x + bias.
DecomposedLayer factored_weight_layer(const Kernel4D& kernel, const Eigen::MatrixXd& left,
                                      const Eigen::MatrixXd& right,
                                      const Eigen::VectorXd& bias) {
  const std::size_t k = kernel.size(), s = kernel.in_channels(), t = kernel.out_channels();
  const std::size_t r = static_cast<std::size_t>(left.cols());
  const Eigen::MatrixXd wmat = matricize_weight(kernel);  // (k^2 s) x t
  DecomposedLayer layer;
  layer.method = Method::kWeightSvd;
  layer.ranks = {r};
  layer.t = t;
  layer.s = s;
  layer.k = k;
  layer.factors = {weight_first_factor(wmat * right.transpose(), k, s),
                   matrix_tensor(left.transpose())};
  layer.bias = to_std(bias);
  return layer;
}

double relu(double v) { return v > 0.0 ? v : 0.0; }

double nonlinear_objective(const Eigen::MatrixXd& y, const Eigen::MatrixXd& zc,
                           const Eigen::MatrixXd& m, const Eigen::VectorXd& b) {
  const Eigen::MatrixXd pred = (m * zc).colwise() + b;
  double sum = 0.0;
  for (Index j = 0; j < y.cols(); ++j)
    for (Index i = 0; i < y.rows(); ++i) {
      const double d = relu(y(i, j)) - relu(pred(i, j));
      sum += d * d;
    }
  return sum;
}

double relaxed_objective(const Eigen::MatrixXd& y, const Eigen::MatrixXd& zaux,
                         const Eigen::MatrixXd& zc, const Eigen::MatrixXd& m,
                         const Eigen::VectorXd& b, double lambda) {
  double fit = 0.0;
  for (Index j = 0; j < y.cols(); ++j)
    for (Index i = 0; i < y.rows(); ++i) {
      const double d = relu(y(i, j)) - relu(zaux(i, j));
      fit += d * d;
    }
  const Eigen::MatrixXd gap = zaux - ((m * zc).colwise() + b);
  return fit + lambda * gap.squaredNorm();
}

}  // namespace

PatchSource make_patch_source(const Kernel4D& kernel, std::span<const double> bias,
                              const FeatureMap& ref_input, const FeatureMap& cur_input) {
  return PatchSource{cur_input, conv_direct(kernel, ref_input, bias),
                     conv_direct(kernel, cur_input, bias)};
}

void update_means(PatchBatch& batch) {
  batch.ref_mean = column_mean(batch.ref_outputs);
  batch.cur_mean = column_mean(batch.cur_outputs);
}

PatchBatch sample_patches(std::span<const PatchSource> sources, std::size_t per_image,
                          std::size_t k, std::uint64_t seed) {
  if (sources.empty()) throw InvalidArgument("sample_patches: no feature maps given");
  if (per_image == 0) throw InvalidArgument("sample_patches: per_image must be >= 1");
  if (k == 0 || k % 2 == 0) throw InvalidArgument("sample_patches: k must be odd");

  const std::size_t s = sources.front().input.channels();
  const std::size_t t = sources.front().ref_output.channels();
  for (const auto& src : sources) {
    if (src.input.channels() != s || src.ref_output.channels() != t ||
        src.cur_output.channels() != t) {
      throw InvalidArgument("sample_patches: inconsistent channel counts across sources");
    }
    const auto same_size = [&](const FeatureMap& m) {
      return m.height() == src.input.height() && m.width() == src.input.width();
    };
    if (!same_size(src.ref_output) || !same_size(src.cur_output)) {
      throw InvalidArgument("sample_patches: output maps must match the input size");
    }
  }

  const std::size_t n = sources.size() * per_image;
  const std::ptrdiff_t delta = static_cast<std::ptrdiff_t>((k - 1) / 2);
  PatchBatch batch;
  batch.k = k;
  batch.s = s;
  batch.t = t;
  batch.inputs.resize(ix(n), ix(k * k * s));
  batch.ref_outputs.resize(ix(n), ix(t));
  batch.cur_outputs.resize(ix(n), ix(t));

  Rng rng(seed);
  std::size_t row = 0;
  for (const auto& src : sources) {
    for (std::size_t draw = 0; draw < per_image; ++draw, ++row) {
      const std::size_t cx = rng.index(src.input.height());
      const std::size_t cy = rng.index(src.input.width());
      for (std::size_t x = 0; x < k; ++x)
        for (std::size_t y = 0; y < k; ++y)
          for (std::size_t i = 0; i < s; ++i) {
            batch.inputs(ix(row), ix(weight_row(x, y, i, k, s))) =
                src.input.padded(i, static_cast<std::ptrdiff_t>(cx + x) - delta,
                                 static_cast<std::ptrdiff_t>(cy + y) - delta);
          }
      for (std::size_t o = 0; o < t; ++o) {
        batch.ref_outputs(ix(row), ix(o)) = src.ref_output.at(o, cx, cy);
        batch.cur_outputs(ix(row), ix(o)) = src.cur_output.at(o, cx, cy);
      }
    }
  }
  update_means(batch);
  return batch;
}

Eigen::MatrixXd layer_responses(const Kernel4D& kernel, std::span<const double> bias,
                                const Eigen::MatrixXd& patches) {
  const std::size_t k = kernel.size(), s = kernel.in_channels(), t = kernel.out_channels();
  if (patches.cols() != ix(k * k * s)) {
    throw InvalidArgument("layer_responses: patch width must be k^2 s");
  }
  const Eigen::VectorXd b = to_vector(bias, t);
  return (patches * matricize_weight(kernel)).rowwise() + b.transpose();
}

Eigen::MatrixXd layer_responses(const DecomposedLayer& layer, const Eigen::MatrixXd& patches) {
  return layer_responses(reconstruct(layer), layer.bias, patches);
}

double affine_residual(const Eigen::MatrixXd& y, const Eigen::MatrixXd& z,
                       const Eigen::MatrixXd& m, std::span<const double> bias) {
  const Eigen::VectorXd b = to_vector(bias, static_cast<std::size_t>(y.cols()));
  return (y - ((z * m.transpose()).rowwise() + b.transpose())).norm();
}

RefinedLayer data_svd(const Kernel4D& kernel, std::span<const double> bias,
                      const Eigen::MatrixXd& ref_outputs, std::size_t r) {
  const std::size_t t = kernel.out_channels();
  if (r < 1 || r > t) {
    throw InvalidArgument("data_svd: rank " + std::to_string(r) + " outside [1, " +
                          std::to_string(t) + "]");
  }
  if (ref_outputs.cols() != ix(t) || ref_outputs.rows() == 0) {
    throw InvalidArgument("data_svd: reference outputs must be n x t with n >= 1");
  }
  const Eigen::VectorXd mean = column_mean(ref_outputs);
  const Eigen::MatrixXd yc = centered_t(ref_outputs, mean);  // t x n
  const linalg::EigResult eig = linalg::eig_sym(yc * yc.transpose());
  const Eigen::MatrixXd ur = eig.vectors.leftCols(ix(r));

  RefinedLayer out;
  out.M = ur * ur.transpose();
  out.new_bias = to_std(mean - out.M * mean);
  out.wrapped = kernel;
  out.wrapped_bias.assign(bias.begin(), bias.end());
  out.rank = r;
  out.residual = (yc - out.M * yc).norm();
  out.residual_before = 0.0;
  const Eigen::VectorXd b = to_vector(bias, t);
  out.compressed = factored_weight_layer(kernel, ur, ur.transpose(),
                                         out.M * b + Eigen::Map<const Eigen::VectorXd>(
                                                          out.new_bias.data(), ix(t)));
  return out;
}

RefinedLayer asym_data_svd(const PatchBatch& batch, const Kernel4D& kernel,
                           std::span<const double> bias, std::size_t r) {
  check_batch(batch, kernel, "asym_data_svd");
  const std::size_t t = kernel.out_channels();
  if (r < 1 || r > t) {
    throw InvalidArgument("asym_data_svd: rank " + std::to_string(r) + " outside [1, " +
                          std::to_string(t) + "]");
  }
  const Eigen::MatrixXd yc = centered_t(batch.ref_outputs, batch.ref_mean);
  const Eigen::MatrixXd zc = centered_t(batch.cur_outputs, batch.cur_mean);
  const linalg::RrrResult fit =
      linalg::reduced_rank_regression(yc, zc, r, linalg::ridge_eps_if_singular(zc));

  RefinedLayer out;
  out.M = fit.M;
  const Eigen::VectorXd nb = batch.ref_mean - fit.M * batch.cur_mean;
  out.new_bias = to_std(nb);
  out.wrapped = kernel;
  out.wrapped_bias.assign(bias.begin(), bias.end());
  out.rank = fit.rank;
  out.residual = affine_residual(batch.ref_outputs, batch.cur_outputs, fit.M, out.new_bias);
  out.residual_before = (batch.ref_outputs - batch.cur_outputs).norm();
  out.compressed =
      factored_weight_layer(kernel, fit.left, fit.right, fit.M * to_vector(bias, t) + nb);
  return out;
}

double relu_z_step(double y, double a, double lambda) {
  if (!(lambda > 0.0)) throw InvalidArgument("relu_z_step: lambda must be > 0");
  const double target = relu(y);
  const double z_pos = std::max(0.0, (target + lambda * a) / (1.0 + lambda));
  const double z_neg = std::min(a, 0.0);
  const auto f = [&](double z) {
    const double d = target - relu(z);
    return d * d + lambda * (z - a) * (z - a);
  };
  return f(z_neg) < f(z_pos) ? z_neg : z_pos;
}

ReluAsymResult relu_asym(const PatchBatch& batch, const Kernel4D& kernel,
                         std::span<const double> bias, std::size_t r,
                         const ReluAsymOptions& options) {
  if (options.activation != Activation::kRelu) {
    throw InvalidArgument("relu_asym: only the ReLU activation has a closed-form Z-step");
  }
  if (options.lambda_schedule.empty()) {
    throw InvalidArgument("relu_asym: lambda schedule is empty");
  }
  for (double l : options.lambda_schedule) {
    if (!(l > 0.0)) throw InvalidArgument("relu_asym: lambda values must be > 0");
  }

  ReluAsymResult result;
  result.layer = asym_data_svd(batch, kernel, bias, r);
  const std::size_t t = kernel.out_channels();
  const Eigen::MatrixXd y = batch.ref_outputs.transpose();   // t x n
  const Eigen::MatrixXd zc = batch.cur_outputs.transpose();  // t x n
  const double eps =
      linalg::ridge_eps_if_singular(centered_t(batch.cur_outputs, batch.cur_mean));

  Eigen::MatrixXd m = result.layer.M;
  Eigen::VectorXd b = Eigen::Map<const Eigen::VectorXd>(result.layer.new_bias.data(), ix(t));
  result.initial_objective = nonlinear_objective(y, zc, m, b);

  Eigen::MatrixXd best_m = m;
  Eigen::VectorXd best_b = b;
  double best = result.initial_objective;
  std::size_t best_rank = result.layer.rank;
  Eigen::MatrixXd best_left, best_right;
  {
    const Eigen::MatrixXd yc = centered_t(batch.ref_outputs, batch.ref_mean);
    const Eigen::MatrixXd zcc = centered_t(batch.cur_outputs, batch.cur_mean);
    const auto init = linalg::reduced_rank_regression(yc, zcc, r, eps);
    best_left = init.left;
    best_right = init.right;
  }

  Eigen::MatrixXd zaux(y.rows(), y.cols());
  const Eigen::VectorXd z_mean = zc.rowwise().mean();
  const Eigen::MatrixXd z_centered = zc.colwise() - z_mean;
  for (double lambda : options.lambda_schedule) {
    for (std::size_t outer = 0; outer < options.max_outer; ++outer) {
      const Eigen::MatrixXd a = (m * zc).colwise() + b;
      for (Index j = 0; j < y.cols(); ++j)
        for (Index i = 0; i < y.rows(); ++i) zaux(i, j) = relu_z_step(y(i, j), a(i, j), lambda);
      result.trace.push_back({lambda, "z", relaxed_objective(y, zaux, zc, m, b, lambda),
                              nonlinear_objective(y, zc, m, b)});

      const Eigen::VectorXd aux_mean = zaux.rowwise().mean();
      const linalg::RrrResult fit = linalg::reduced_rank_regression(
          zaux.colwise() - aux_mean, z_centered, r, eps);
      m = fit.M;
      b = aux_mean - m * z_mean;
      const double nonlinear = nonlinear_objective(y, zc, m, b);
      result.trace.push_back(
          {lambda, "mb", relaxed_objective(y, zaux, zc, m, b, lambda), nonlinear});
      if (nonlinear < best) {
        best = nonlinear;
        best_m = m;
        best_b = b;
        best_rank = fit.rank;
        best_left = fit.left;
        best_right = fit.right;
      }
    }
  }

  RefinedLayer& out = result.layer;
  out.M = best_m;
  out.new_bias = to_std(best_b);
  out.rank = best_rank;
  out.residual = affine_residual(batch.ref_outputs, batch.cur_outputs, best_m, out.new_bias);
  out.compressed = factored_weight_layer(kernel, best_left, best_right,
                                         best_m * to_vector(bias, t) + best_b);
  result.final_objective = best;
  return result;
}

RefinedLayer asym3d(const Kernel4D& kernel, std::span<const double> bias,
                    const PatchBatch& batch, std::size_t r_s, std::size_t r_d) {
  check_batch(batch, kernel, "asym3d");
  const std::size_t t = kernel.out_channels(), k = kernel.size();
  if (r_d < 1 || r_d > t) {
    throw InvalidArgument("asym3d: data rank " + std::to_string(r_d) + " outside [1, " +
                          std::to_string(t) + "]");
  }
  DecomposedLayer spatial = spatial_svd(kernel, r_s, Axis::kY);
  spatial.bias.assign(bias.begin(), bias.end());

  const Eigen::MatrixXd z = layer_responses(spatial, batch.inputs);  // n x t
  const Eigen::VectorXd z_mean = column_mean(z);
  const Eigen::MatrixXd yc = centered_t(batch.ref_outputs, batch.ref_mean);
  const Eigen::MatrixXd zc = centered_t(z, z_mean);
  const linalg::RrrResult fit =
      linalg::reduced_rank_regression(yc, zc, r_d, linalg::ridge_eps_if_singular(zc));
  const std::size_t rd = fit.rank;

  // Second spatial factor (r_s, k, t) contracted with right (rd x t).
  const Tensor& second = spatial.factors[1];
  Tensor middle({r_s, k, rd});
  for (std::size_t a = 0; a < r_s; ++a)
    for (std::size_t d = 0; d < k; ++d)
      for (std::size_t q = 0; q < rd; ++q) {
        double acc = 0.0;
        for (std::size_t o = 0; o < t; ++o) acc += fit.right(ix(q), ix(o)) * second.at(a, d, o);
        middle.at(a, d, q) = acc;
      }

  RefinedLayer out;
  out.M = fit.M;
  const Eigen::VectorXd nb = batch.ref_mean - fit.M * z_mean;
  out.new_bias = to_std(nb);
  out.wrapped_bias.assign(bias.begin(), bias.end());
  out.rank = rd;
  out.residual = affine_residual(batch.ref_outputs, z, fit.M, out.new_bias);
  out.residual_before = (batch.ref_outputs - z).norm();

  DecomposedLayer& layer = out.compressed;
  layer.method = Method::kAsym3d;
  layer.ranks = {r_s, rd};
  layer.t = t;
  layer.s = kernel.in_channels();
  layer.k = k;
  layer.first_axis = Axis::kY;
  layer.factors = {spatial.factors[0], std::move(middle), matrix_tensor(fit.left.transpose())};
  layer.bias = to_std(fit.M * to_vector(bias, t) + nb);
  layer.metadata["first_axis"] = "y";
  out.wrapped = std::move(spatial);
  return out;
}

RefinedLayer spatial_refine(const DecomposedLayer& layer, const PatchBatch& batch) {
  if (layer.method != Method::kSpatialSvd) {
    throw InvalidArgument("spatial_refine: layer must be a spatial SVD decomposition");
  }
  validate(layer);
  if (batch.rows() == 0 || batch.k != layer.k || batch.s != layer.s || batch.t != layer.t) {
    throw InvalidArgument("spatial_refine: batch shape does not match the layer");
  }
  const std::size_t t = layer.t, k = layer.k, r = layer.ranks[0];
  const Eigen::MatrixXd z = layer_responses(layer, batch.inputs);
  const Eigen::VectorXd z_mean = column_mean(z);
  const Eigen::MatrixXd yc = centered_t(batch.ref_outputs, batch.ref_mean);
  const Eigen::MatrixXd zc = centered_t(z, z_mean);
  const Eigen::MatrixXd m = linalg::ridge_solve(yc, zc, linalg::ridge_eps_if_singular(zc));

  RefinedLayer out;
  out.M = m;
  const Eigen::VectorXd nb = batch.ref_mean - m * z_mean;
  out.new_bias = to_std(nb);
  out.wrapped = layer;
  out.wrapped_bias = layer.bias;
  out.rank = t;
  out.residual = affine_residual(batch.ref_outputs, z, m, out.new_bias);
  out.residual_before = (batch.ref_outputs - z).norm();

  DecomposedLayer refined = layer;
  const Tensor& second = layer.factors[1];
  Tensor updated({r, k, t});
  for (std::size_t q = 0; q < r; ++q)
    for (std::size_t d = 0; d < k; ++d)
      for (std::size_t o = 0; o < t; ++o) {
        double acc = 0.0;
        for (std::size_t p = 0; p < t; ++p) acc += m(ix(o), ix(p)) * second.at(q, d, p);
        updated.at(q, d, o) = acc;
      }
  refined.factors[1] = std::move(updated);
  refined.bias = to_std(m * to_vector(layer.bias, t) + nb);
  refined.metadata["refined"] = "spatial";
  out.compressed = std::move(refined);
  return out;
}

}  // namespace convfact
