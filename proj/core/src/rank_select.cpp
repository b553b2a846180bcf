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

#include "convfact/rank_select.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "convfact/tensor.hpp"

namespace convfact {

namespace {

void check_alpha(double alpha) {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) {
    throw InvalidArgument("alpha (retained MAC fraction) must be a positive finite value");
  }
}

bool within(std::uint64_t macs, std::uint64_t original, double alpha) {
  return static_cast<double>(macs) <= alpha * static_cast<double>(original);
}

}  // namespace

std::string_view strategy_name(SelectStrategy strategy) {
  switch (strategy) {
    case SelectStrategy::kRatio:
      return "ratio";
    case SelectStrategy::kEqualAccuracy:
      return "equal-acc";
    case SelectStrategy::kGreedyEnergy:
      return "greedy-energy";
  }
  return "unknown";
}

RankVector ranks_from_ratio(Method method, const LayerDims& dims, double alpha) {
  check_alpha(alpha);
  if (method == Method::kOriginal || method == Method::kAsym3d) {
    throw InvalidArgument("ranks_from_ratio: unsupported method " +
                          std::string(method_name(method)));
  }
  const RankVector upper = max_ranks(dims, method);
  const std::uint64_t original = mac_cost(dims, Method::kOriginal).macs_original;
  const auto fits = [&](const RankVector& r) {
    return within(mac_cost(dims, method, r).macs_compressed, original, alpha);
  };
  const RankVector ones(upper.size(), 1);
  if (!fits(ones)) {
    throw ComputationError("ranks_from_ratio: budget infeasible even at all-ones ranks");
  }

  if (upper.size() == 1) {
    // Cost is increasing in r: binary search the largest feasible rank.
    std::size_t lo = 1, hi = upper[0];
    while (lo < hi) {
      const std::size_t mid = lo + (hi - lo + 1) / 2;
      if (fits({mid})) {
        lo = mid;
      } else {
        hi = mid - 1;
      }
    }
    return {lo};
  }

  // Scale every maximal rank by a common fraction f; the candidate
  // fractions are the points where some floor(f * upper_i) changes.
  std::vector<double> fractions{1.0};
  for (std::size_t u : upper)
    for (std::size_t j = 1; j <= u; ++j)
      fractions.push_back(static_cast<double>(j) / static_cast<double>(u));
  std::sort(fractions.begin(), fractions.end(), std::greater<>());
  fractions.erase(std::unique(fractions.begin(), fractions.end()), fractions.end());

  const auto scaled = [&](double f) {
    RankVector r(upper.size());
    for (std::size_t i = 0; i < upper.size(); ++i) {
      // Tolerance against f * u landing just below an integer.
      const double v = std::floor(f * static_cast<double>(upper[i]) + 1e-9);
      r[i] = std::max<std::size_t>(1, static_cast<std::size_t>(v));
    }
    if (method == Method::kTt) {
      r[1] = std::min<std::size_t>(r[1], std::min(r[0] * dims.k, dims.k * dims.t));
      r[2] = std::min<std::size_t>(r[2], std::min(r[1] * dims.k, dims.t));
    }
    return r;
  };
  for (double f : fractions) {
    const RankVector r = scaled(f);
    if (fits(r)) return r;
  }
  return ones;
}

RankPlan equal_acc_select(std::span<const AccTable> tables, double alpha) {
  check_alpha(alpha);
  if (tables.empty()) throw InvalidArgument("equal_acc_select: no layers given");
  std::uint64_t original = 0;
  std::vector<double> gaps{0.0};
  for (const AccTable& table : tables) {
    if (table.grid.empty()) throw InvalidArgument("equal_acc_select: empty grid");
    original += table.macs_original;
    for (const AccEntry& e : table.grid) {
      if (!(e.accuracy >= 0.0 && e.accuracy <= 1.0)) {
        throw InvalidArgument("equal_acc_select: accuracies must lie in [0, 1]");
      }
      gaps.push_back(std::max(0.0, table.p_orig - e.accuracy));
    }
  }
  std::sort(gaps.begin(), gaps.end());
  gaps.erase(std::unique(gaps.begin(), gaps.end()), gaps.end());

  // Cheapest qualifying entry per layer; empty when some layer has none.
  const auto pick = [&](double tau) {
    std::vector<std::size_t> choice;
    for (const AccTable& table : tables) {
      std::size_t best = table.grid.size();
      for (std::size_t j = 0; j < table.grid.size(); ++j) {
        if (std::max(0.0, table.p_orig - table.grid[j].accuracy) > tau) continue;
        if (best == table.grid.size() || table.grid[j].macs < table.grid[best].macs) best = j;
      }
      if (best == table.grid.size()) return std::vector<std::size_t>{};
      choice.push_back(best);
    }
    return choice;
  };
  const auto total = [&](const std::vector<std::size_t>& choice) {
    std::uint64_t sum = 0;
    for (std::size_t l = 0; l < choice.size(); ++l) sum += tables[l].grid[choice[l]].macs;
    return sum;
  };
  const auto feasible = [&](double tau) {
    const auto choice = pick(tau);
    return !choice.empty() && within(total(choice), original, alpha);
  };

  if (!feasible(gaps.back())) {
    throw ComputationError("equal_acc_select: budget infeasible at the largest tolerance");
  }
  std::size_t lo = 0, hi = gaps.size() - 1;
  while (lo < hi) {
    const std::size_t mid = lo + (hi - lo) / 2;
    if (feasible(gaps[mid])) {
      hi = mid;
    } else {
      lo = mid + 1;
    }
  }

  RankPlan plan;
  plan.strategy = SelectStrategy::kEqualAccuracy;
  plan.tau = gaps[lo];
  plan.choice = pick(plan.tau);
  for (std::size_t l = 0; l < tables.size(); ++l) {
    plan.ranks.push_back(tables[l].grid[plan.choice[l]].ranks);
  }
  plan.macs_original = original;
  plan.achieved_macs = total(plan.choice);
  plan.achieved_ratio =
      original == 0 ? 0.0 : static_cast<double>(plan.achieved_macs) / static_cast<double>(original);
  return plan;
}

RankCost rank_cost(const LayerDims& dims, Method method) {
  if (rank_arity(method) != 1) {
    throw InvalidArgument("rank_cost: method must take a single rank");
  }
  const LayerCost c = mac_cost(dims, method, {1});
  return {c.macs_original, c.macs_compressed};
}

double log_energy(const std::vector<std::vector<double>>& singular_values,
                  const std::vector<std::size_t>& ranks) {
  if (ranks.size() != singular_values.size()) {
    throw InvalidArgument("log_energy: one rank per layer required");
  }
  double sum = 0.0;
  for (std::size_t l = 0; l < ranks.size(); ++l) {
    if (ranks[l] < 1 || ranks[l] > singular_values[l].size()) {
      throw InvalidArgument("log_energy: rank out of range");
    }
    sum += std::log(std::accumulate(singular_values[l].begin(),
                                    singular_values[l].begin() +
                                        static_cast<std::ptrdiff_t>(ranks[l]),
                                    0.0));
  }
  return sum;
}

RankPlan greedy_energy_select(const std::vector<std::vector<double>>& singular_values,
                              std::span<const RankCost> costs, double alpha) {
  check_alpha(alpha);
  const std::size_t layers = singular_values.size();
  if (layers == 0 || costs.size() != layers) {
    throw InvalidArgument("greedy_energy_select: need one cost per layer and at least one layer");
  }
  std::uint64_t original = 0;
  for (std::size_t l = 0; l < layers; ++l) {
    const auto& sv = singular_values[l];
    if (sv.empty()) throw InvalidArgument("greedy_energy_select: empty singular value list");
    for (std::size_t i = 0; i < sv.size(); ++i) {
      if (!(sv[i] > 0.0) || !std::isfinite(sv[i]) || (i > 0 && sv[i] > sv[i - 1])) {
        throw InvalidArgument("greedy_energy_select: singular values must be positive, descending");
      }
    }
    if (costs[l].macs_per_rank == 0) {
      throw InvalidArgument("greedy_energy_select: per-rank cost must be positive");
    }
    original += costs[l].macs_original;
  }

  std::vector<std::size_t> ranks(layers);
  std::vector<double> energy(layers);
  std::uint64_t macs = 0, floor_macs = 0;
  for (std::size_t l = 0; l < layers; ++l) {
    ranks[l] = singular_values[l].size();
    energy[l] = std::accumulate(singular_values[l].begin(), singular_values[l].end(), 0.0);
    macs += ranks[l] * costs[l].macs_per_rank;
    floor_macs += costs[l].macs_per_rank;
  }
  if (!within(floor_macs, original, alpha)) {
    throw ComputationError("greedy_energy_select: budget infeasible even at all-ones ranks");
  }

  RankPlan plan;
  plan.strategy = SelectStrategy::kGreedyEnergy;
  plan.macs_original = original;
  double total_log = 0.0;
  for (double e : energy) total_log += std::log(e);
  plan.trajectory.emplace_back(macs, total_log);
  while (!within(macs, original, alpha)) {
    std::size_t best = layers;
    double best_rate = std::numeric_limits<double>::infinity();
    for (std::size_t l = 0; l < layers; ++l) {
      if (ranks[l] == 1) continue;
      const double dropped = singular_values[l][ranks[l] - 1];
      const double loss = std::log(energy[l]) - std::log(energy[l] - dropped);
      const double rate = loss / static_cast<double>(costs[l].macs_per_rank);
      if (rate < best_rate) {
        best_rate = rate;
        best = l;
      }
    }
    const double dropped = singular_values[best][ranks[best] - 1];
    total_log += std::log(energy[best] - dropped) - std::log(energy[best]);
    energy[best] -= dropped;
    --ranks[best];
    macs -= costs[best].macs_per_rank;
    plan.trajectory.emplace_back(macs, total_log);
  }

  for (std::size_t r : ranks) plan.ranks.push_back({r});
  plan.achieved_macs = macs;
  plan.achieved_ratio = static_cast<double>(macs) / static_cast<double>(original);
  plan.log_energy = log_energy(singular_values, ranks);
  return plan;
}

}  // namespace convfact
