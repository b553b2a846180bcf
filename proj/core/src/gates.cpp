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

#include "convfact/gates.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "convfact/cost_model.hpp"
#include "convfact/rng.hpp"

namespace convfact {

namespace {

double sigmoid(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

double stretch(const HardConcreteGate& g, double s) { return s * (g.zeta - g.gamma) + g.gamma; }

double clip01(double v) { return std::min(1.0, std::max(0.0, v)); }

double hc_logit(const HardConcreteGate& g, double u) {
  return (std::log(u) - std::log1p(-u) + g.log_alpha) / g.beta;
}

void check_u(double u) {
  if (!(u > 0.0 && u < 1.0)) throw InvalidArgument("hard-concrete draw u must lie in (0, 1)");
}

}  // namespace

void validate(const HardConcreteGate& gate) {
  if (!std::isfinite(gate.log_alpha)) throw InvalidArgument("gate log_alpha must be finite");
  if (!(gate.beta > 0.0)) throw InvalidArgument("gate temperature must be > 0");
  if (!(gate.gamma < 0.0 && gate.zeta > 1.0)) {
    throw InvalidArgument("gate stretch must satisfy gamma < 0 < 1 < zeta");
  }
}

void validate(const VibGate& gate) {
  if (!std::isfinite(gate.mu)) throw InvalidArgument("gate mu must be finite");
  if (!(gate.sigma > 0.0) || !std::isfinite(gate.sigma)) {
    throw InvalidArgument("gate sigma must be > 0");
  }
}

double hc_sample(const HardConcreteGate& gate, double u) {
  validate(gate);
  check_u(u);
  return clip01(stretch(gate, sigmoid(hc_logit(gate, u))));
}

double hc_penalty_term(const HardConcreteGate& gate) {
  validate(gate);
  return sigmoid(gate.log_alpha - gate.beta * std::log(-gate.gamma / gate.zeta));
}

double hc_penalty(const GateVector& gates) {
  double sum = 0.0;
  for (const Gate& g : gates.gates) {
    const auto* hc = std::get_if<HardConcreteGate>(&g);
    if (hc == nullptr) throw InvalidArgument("hc_penalty: vector contains a non hard-concrete gate");
    sum += hc_penalty_term(*hc);
  }
  return sum;
}

HcGrads hc_grads(const HardConcreteGate& gate, double u) {
  validate(gate);
  check_u(u);
  const double s = sigmoid(hc_logit(gate, u));
  const double stretched = stretch(gate, s);
  HcGrads grads;
  if (stretched > 0.0 && stretched < 1.0) {
    grads.dz_dlog_alpha = (gate.zeta - gate.gamma) * s * (1.0 - s) / gate.beta;
  }
  const double p = hc_penalty_term(gate);
  grads.dpenalty_dlog_alpha = p * (1.0 - p);
  return grads;
}

double hc_test_value(const HardConcreteGate& gate, HcTestValue mode) {
  validate(gate);
  if (mode == HcTestValue::kClippedMean) return clip01(stretch(gate, sigmoid(gate.log_alpha)));
  constexpr int kNodes = 20000;
  double sum = 0.0;
  for (int i = 0; i < kNodes; ++i) {
    const double u = (i + 0.5) / kNodes;
    sum += clip01(stretch(gate, sigmoid(hc_logit(gate, u))));
  }
  return sum / kNodes;
}

double vib_sample(const VibGate& gate, double eps) { return gate.mu + eps * gate.sigma; }

double vib_penalty_term(const VibGate& gate) {
  validate(gate);
  const double ratio = gate.mu / gate.sigma;
  return std::log1p(ratio * ratio);
}

double vib_penalty(const GateVector& gates) {
  double sum = 0.0;
  for (const Gate& g : gates.gates) {
    const auto* vib = std::get_if<VibGate>(&g);
    if (vib == nullptr) throw InvalidArgument("vib_penalty: vector contains a non-VIB gate");
    sum += vib_penalty_term(*vib);
  }
  return sum;
}

VibGrads vib_penalty_grads(const VibGate& gate) {
  validate(gate);
  const double m2 = gate.mu * gate.mu;
  const double denom = gate.sigma * gate.sigma + m2;
  return {2.0 * gate.mu / denom, -2.0 * m2 / (gate.sigma * denom)};
}

double gate_criterion(const Gate& gate) {
  if (const auto* hc = std::get_if<HardConcreteGate>(&gate)) return hc_penalty_term(*hc);
  const auto& vib = std::get<VibGate>(gate);
  validate(vib);
  return (vib.mu * vib.mu) / (vib.sigma * vib.sigma);
}

GatePruneResult prune_by_gates(const GateVector& gates, const Kernel4D& kernel,
                               std::span<const double> bias, double threshold, std::size_t h,
                               std::size_t w) {
  const std::size_t t = kernel.out_channels(), s = kernel.in_channels(), k = kernel.size();
  if (!(threshold > 0.0)) throw InvalidArgument("prune_by_gates: threshold must be > 0");
  if (gates.gates.size() != t) {
    throw InvalidArgument("prune_by_gates: need one gate per output channel (" +
                          std::to_string(t) + ")");
  }
  if (!bias.empty() && bias.size() != t) {
    throw InvalidArgument("prune_by_gates: bias length must equal output channels");
  }

  GatePruneResult result;
  for (std::size_t o = 0; o < t; ++o) {
    const double c = gate_criterion(gates.gates[o]);
    result.criteria.push_back(c);
    if (!(c < threshold)) result.kept.push_back(o);
  }
  if (result.kept.empty()) throw InvalidArgument("prune_by_gates: every channel would be pruned");

  result.kernel = Kernel4D(result.kept.size(), s, k);
  for (std::size_t j = 0; j < result.kept.size(); ++j) {
    for (std::size_t i = 0; i < s; ++i)
      for (std::size_t x = 0; x < k; ++x)
        for (std::size_t y = 0; y < k; ++y)
          result.kernel.at(j, i, x, y) = kernel.at(result.kept[j], i, x, y);
    if (!bias.empty()) result.bias.push_back(bias[result.kept[j]]);
  }
  result.macs_before = mac_cost({s, t, k, h, w}, Method::kOriginal).macs_original;
  result.macs_after = mac_cost({s, result.kept.size(), k, h, w}, Method::kOriginal).macs_original;
  result.ratio = 1.0 - static_cast<double>(result.macs_after) /
                           static_cast<double>(result.macs_before);
  return result;
}

ToyTask make_toy_task(std::size_t samples, std::size_t informative, std::size_t noise,
                      std::uint64_t seed, double noise_std) {
  if (samples == 0 || informative == 0) {
    throw InvalidArgument("make_toy_task: need samples and at least one informative feature");
  }
  const std::size_t d = informative + noise;
  Rng rng(seed);
  ToyTask task;
  task.x.resize(static_cast<Eigen::Index>(samples), static_cast<Eigen::Index>(d));
  task.y.resize(static_cast<Eigen::Index>(samples));
  std::vector<double> coef(d, 0.0);
  for (std::size_t j = 0; j < informative; ++j) {
    coef[j] = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(1.0, 2.0);
  }
  for (Eigen::Index i = 0; i < task.x.rows(); ++i) {
    double target = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double v = rng.normal();
      task.x(i, static_cast<Eigen::Index>(j)) = v;
      target += coef[j] * v;
    }
    task.y(i) = target + noise_std * rng.normal();
  }
  task.informative.assign(d, false);
  for (std::size_t j = 0; j < informative; ++j) task.informative[j] = true;
  return task;
}

ToyTrainResult train_toy_gated(const ToyTask& task, const ToyTrainOptions& options) {
  const Eigen::Index n = task.x.rows(), d = task.x.cols();
  if (n == 0 || d == 0 || task.y.size() != n) {
    throw InvalidArgument("train_toy_gated: task matrices are empty or misaligned");
  }
  if (!(options.lr > 0.0) || !(options.lambda_reg >= 0.0)) {
    throw InvalidArgument("train_toy_gated: lr must be > 0 and lambda_reg >= 0");
  }

  const bool hard = options.kind == GateKind::kHardConcrete;
  Rng rng(options.seed);
  std::vector<double> weights(static_cast<std::size_t>(d), 0.0);
  // Gate parameter: log_alpha for hard-concrete, (mu, log sigma) for VIB.
  std::vector<HardConcreteGate> hc(static_cast<std::size_t>(d), HardConcreteGate{2.0});
  std::vector<double> mu(static_cast<std::size_t>(d), 1.0);
  std::vector<double> log_sigma(static_cast<std::size_t>(d), std::log(0.5));

  ToyTrainResult result;
  result.seed = options.seed;
  Eigen::MatrixXd z(n, d), dz(n, d), dz2(n, d);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t step = 0; step < options.steps; ++step) {
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < d; ++j) {
        const auto jj = static_cast<std::size_t>(j);
        if (hard) {
          const double u = rng.uniform_open();
          z(i, j) = hc_sample(hc[jj], u);
          dz(i, j) = hc_grads(hc[jj], u).dz_dlog_alpha;
        } else {
          const double eps = rng.normal();
          const double sigma = std::exp(log_sigma[jj]);
          z(i, j) = mu[jj] + eps * sigma;
          dz(i, j) = 1.0;
          dz2(i, j) = eps * sigma;
        }
      }
    }
    Eigen::VectorXd residual = -task.y;
    for (Eigen::Index j = 0; j < d; ++j) {
      residual += weights[static_cast<std::size_t>(j)] * z.col(j).cwiseProduct(task.x.col(j));
    }
    double penalty = 0.0;
    for (Eigen::Index j = 0; j < d; ++j) {
      const auto jj = static_cast<std::size_t>(j);
      penalty += hard ? hc_penalty_term(hc[jj])
                      : vib_penalty_term({mu[jj], std::exp(log_sigma[jj])});
    }
    const double loss = residual.squaredNorm() * inv_n + options.lambda_reg * penalty;
    if (!std::isfinite(loss)) {
      throw ComputationError("train_toy_gated: loss became non-finite at step " +
                             std::to_string(step) + " (learning rate too large?)");
    }
    result.loss_trace.push_back(loss);

    for (Eigen::Index j = 0; j < d; ++j) {
      const auto jj = static_cast<std::size_t>(j);
      const Eigen::VectorXd rx = residual.cwiseProduct(task.x.col(j));
      const double g_w = 2.0 * inv_n * rx.dot(z.col(j));
      const double g_gate = 2.0 * inv_n * weights[jj] * rx.dot(dz.col(j));
      if (hard) {
        const double g_pen = hc_grads(hc[jj], 0.5).dpenalty_dlog_alpha;
        hc[jj].log_alpha -= options.lr * (g_gate + options.lambda_reg * g_pen);
      } else {
        const double sigma = std::exp(log_sigma[jj]);
        const VibGrads pen = vib_penalty_grads({mu[jj], sigma});
        const double g_rho = 2.0 * inv_n * weights[jj] * rx.dot(dz2.col(j));
        mu[jj] -= options.lr * (g_gate + options.lambda_reg * pen.d_mu);
        log_sigma[jj] -= options.lr * (g_rho + options.lambda_reg * pen.d_sigma * sigma);
      }
      weights[jj] -= options.lr * g_w;
      const bool finite = std::isfinite(weights[jj]) &&
                          (hard ? std::isfinite(hc[jj].log_alpha)
                                : std::isfinite(mu[jj]) && std::exp(log_sigma[jj]) > 0.0 &&
                                      std::isfinite(std::exp(log_sigma[jj])));
      if (!finite) {
        throw ComputationError("train_toy_gated: parameters diverged at step " +
                               std::to_string(step) + " (learning rate too large?)");
      }
    }
  }

  result.weights = weights;
  result.gates.lambda_reg = options.lambda_reg;
  for (Eigen::Index j = 0; j < d; ++j) {
    const auto jj = static_cast<std::size_t>(j);
    if (hard) {
      result.gates.gates.emplace_back(hc[jj]);
    } else {
      result.gates.gates.emplace_back(VibGate{mu[jj], std::exp(log_sigma[jj])});
    }
  }
  result.draws = rng.draws();
  return result;
}

}  // namespace convfact
