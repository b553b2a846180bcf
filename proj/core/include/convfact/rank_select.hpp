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
#include <utility>
#include <vector>

#include "convfact/cost_model.hpp"

namespace convfact {

/// One evaluated grid point of a layer: its ranks, the verification
/// accuracy of the network with only this layer compressed, and its MACs.
struct AccEntry {
  RankVector ranks;
  double accuracy = 0.0;
  std::uint64_t macs = 0;
};

struct AccTable {
  std::vector<AccEntry> grid;
  double p_orig = 1.0;
  std::uint64_t macs_original = 0;
};

enum class SelectStrategy { kRatio, kEqualAccuracy, kGreedyEnergy };

std::string_view strategy_name(SelectStrategy strategy);

struct RankPlan {
  /// Ranks per layer.
  std::vector<RankVector> ranks;
  /// Grid index per layer (equal-accuracy plans only).
  std::vector<std::size_t> choice;
  /// Accuracy tolerance; zero for strategies that do not use it.
  double tau = 0.0;
  std::uint64_t macs_original = 0;
  std::uint64_t achieved_macs = 0;
  /// achieved_macs / macs_original, compared against the retained-fraction
  /// budget.
  double achieved_ratio = 0.0;
  SelectStrategy strategy = SelectStrategy::kRatio;
  /// Budget direction: alpha bounds the retained MAC fraction.
  std::string convention = "retained-fraction";
  /// Sum over layers of log(sum of kept singular values) (greedy plans).
  double log_energy = 0.0;
  /// Greedy plans: (MACs, log-energy) after every accepted step, starting
  /// from full ranks.
  std::vector<std::pair<std::uint64_t, double>> trajectory;
};

/// Ranks meeting mac_cost <= alpha * original. Single-rank methods get the
/// largest feasible rank; Tucker and TT scale all maximal ranks by one
/// common fraction (floored, each at least 1) and take the largest feasible
/// fraction. Throws ComputationError when even all-ones ranks exceed the
/// budget.
RankVector ranks_from_ratio(Method method, const LayerDims& dims, double alpha);

/// Minimal tolerance tau such that taking, per layer, the cheapest grid
/// entry with accuracy >= p_orig - tau keeps the total MACs within
/// alpha * sum of macs_original. Ties prefer the lower grid index.
RankPlan equal_acc_select(std::span<const AccTable> tables, double alpha);

/// Per-layer MAC model for the greedy allocator: cost = macs_per_rank * r.
struct RankCost {
  std::uint64_t macs_original = 0;
  std::uint64_t macs_per_rank = 0;
};

/// MAC cost per unit rank for a single-rank method.
RankCost rank_cost(const LayerDims& dims, Method method);

/// Starts at full ranks and repeatedly lowers by one the rank of the layer
/// whose step loses the least log-energy per MAC saved (lower layer index
/// on ties) until the budget holds. Singular values must be positive and
/// descending. Throws ComputationError when all-ones ranks exceed the
/// budget.
RankPlan greedy_energy_select(const std::vector<std::vector<double>>& singular_values,
                              std::span<const RankCost> costs, double alpha);

/// Log-energy of a rank assignment: sum_l log(sum_{i < r_l} sigma_{l,i}).
double log_energy(const std::vector<std::vector<double>>& singular_values,
                  const std::vector<std::size_t>& ranks);

}  // namespace convfact
