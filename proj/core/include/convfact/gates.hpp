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
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "convfact/tensor.hpp"

namespace convfact {

/// Stretched, clipped concrete gate. Defaults are temperature 2/3 and the
/// stretch interval (-0.1, 1.1).
struct HardConcreteGate {
  double log_alpha = 0.0;
  double beta = 2.0 / 3.0;
  double zeta = 1.1;
  double gamma = -0.1;
};

/// Multiplicative Gaussian gate z = mu + eps * sigma.
struct VibGate {
  double mu = 1.0;
  double sigma = 1.0;
};

using Gate = std::variant<HardConcreteGate, VibGate>;

/// One gate per output channel of the gated layer plus the penalty weight.
struct GateVector {
  std::vector<Gate> gates;
  double lambda_reg = 0.0;
};

void validate(const HardConcreteGate& gate);
void validate(const VibGate& gate);

/// Gate value for a uniform draw u in (0, 1).
double hc_sample(const HardConcreteGate& gate, double u);

/// Probability that the gate is nonzero: sigmoid(log_alpha - beta log(-gamma / zeta)).
double hc_penalty_term(const HardConcreteGate& gate);

/// Sum of hc_penalty_term over the vector; throws on any non hard-concrete gate.
double hc_penalty(const GateVector& gates);

struct HcGrads {
  double dz_dlog_alpha = 0.0;
  double dpenalty_dlog_alpha = 0.0;
};

/// Derivatives of hc_sample and hc_penalty_term with respect to log_alpha.
/// The sample derivative is zero where the gate is clipped.
HcGrads hc_grads(const HardConcreteGate& gate, double u);

enum class HcTestValue {
  /// Clip of the noise-free stretched sigmoid: min(1, max(0, sigmoid(log_alpha)(zeta - gamma) + gamma)).
  kClippedMean,
  /// E[z] over the noise distribution, by quadrature over u.
  kExpected,
};

/// Deterministic gate value for inference.
double hc_test_value(const HardConcreteGate& gate, HcTestValue mode = HcTestValue::kClippedMean);

double vib_sample(const VibGate& gate, double eps);

/// log(1 + mu^2 / sigma^2); throws when sigma <= 0.
double vib_penalty_term(const VibGate& gate);

/// Sum of vib_penalty_term; throws on any non-VIB gate.
double vib_penalty(const GateVector& gates);

struct VibGrads {
  double d_mu = 0.0;
  double d_sigma = 0.0;
};

/// Gradient of vib_penalty_term with respect to (mu, sigma).
VibGrads vib_penalty_grads(const VibGate& gate);

/// Pruning criterion: P(z != 0) for hard-concrete, mu^2 / sigma^2 for VIB.
double gate_criterion(const Gate& gate);

struct GatePruneResult {
  Kernel4D kernel;
  std::vector<double> bias;
  std::vector<std::size_t> kept;
  std::vector<double> criteria;
  std::uint64_t macs_before = 0;
  std::uint64_t macs_after = 0;
  /// 1 - macs_after / macs_before.
  double ratio = 0.0;
};

/// Drops output channels whose criterion is below `threshold`. Costs are for
/// an h x w output map. Throws when every channel would be dropped.
GatePruneResult prune_by_gates(const GateVector& gates, const Kernel4D& kernel,
                               std::span<const double> bias, double threshold,
                               std::size_t h = 1, std::size_t w = 1);

/// Linear regression data where only the first `informative` features carry
/// signal; the remaining features are pure noise.
struct ToyTask {
  Eigen::MatrixXd x;  // n x d
  Eigen::VectorXd y;  // n
  std::vector<bool> informative;
};

ToyTask make_toy_task(std::size_t samples, std::size_t informative, std::size_t noise,
                      std::uint64_t seed, double noise_std = 0.1);

enum class GateKind { kHardConcrete, kVib };

struct ToyTrainOptions {
  GateKind kind = GateKind::kHardConcrete;
  double lambda_reg = 0.5;
  std::size_t steps = 3000;
  double lr = 0.1;
  std::uint64_t seed = 0;
};

struct ToyTrainResult {
  GateVector gates;
  std::vector<double> weights;
  /// Data loss plus penalty at every step.
  std::vector<double> loss_trace;
  /// Seed and number of generator words consumed, enough to replay every
  /// u / eps draw.
  std::uint64_t seed = 0;
  std::uint64_t draws = 0;
};

/// Full-batch gradient descent on mean squared error of
/// y ~ sum_j z_j w_j x_j plus lambda_reg times the gate penalty, with one
/// noise draw per sample and gate. Throws ComputationError on a non-finite
/// loss.
ToyTrainResult train_toy_gated(const ToyTask& task, const ToyTrainOptions& options);

}  // namespace convfact
