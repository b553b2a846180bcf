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

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <limits>

#include "convfact/rank_select.hpp"
#include "convfact/rng.hpp"
#include "convfact/tensor.hpp"

namespace convfact {
namespace {

TEST(RanksFromRatio, SpatialSvdInequality) {
  const LayerDims d{64, 64, 3, 8, 8};
  EXPECT_EQ(ranks_from_ratio(Method::kSpatialSvd, d, 0.5), RankVector{48});
}

TEST(RanksFromRatio, SingleRankMaximality) {
  for (Method m : {Method::kWeightSvd, Method::kSpatialSvd, Method::kCp}) {
    for (double alpha : {0.05, 0.2, 0.37, 0.8}) {
      const LayerDims d{16, 24, 3, 5, 5};
      const RankVector r = ranks_from_ratio(m, d, alpha);
      const double budget = alpha * static_cast<double>(mac_cost(d, Method::kOriginal).macs_original);
      EXPECT_LE(static_cast<double>(mac_cost(d, m, r).macs_compressed), budget);
      if (r[0] < max_ranks(d, m)[0]) {
        EXPECT_GT(static_cast<double>(mac_cost(d, m, {r[0] + 1}).macs_compressed), budget);
      }
    }
  }
}

TEST(RanksFromRatio, GenerousBudgetGivesMaximalRanks) {
  const LayerDims d{8, 8, 3, 4, 4};
  for (Method m : {Method::kWeightSvd, Method::kSpatialSvd, Method::kTucker, Method::kTt}) {
    EXPECT_EQ(ranks_from_ratio(m, d, 1e6), max_ranks(d, m));
  }
}

TEST(RanksFromRatio, TuckerSymmetricWhenSEqualsT) {
  for (double alpha : {0.1, 0.3, 0.6}) {
    const RankVector r = ranks_from_ratio(Method::kTucker, {32, 32, 3, 4, 4}, alpha);
    ASSERT_EQ(r.size(), 2u);
    EXPECT_EQ(r[0], r[1]);
  }
}

TEST(RanksFromRatio, ProportionalRanksWithinBudget) {
  const LayerDims d{12, 20, 3, 4, 4};
  for (Method m : {Method::kTucker, Method::kTt}) {
    for (double alpha : {0.1, 0.25, 0.5}) {
      const RankVector r = ranks_from_ratio(m, d, alpha);
      EXPECT_LE(static_cast<double>(mac_cost(d, m, r).macs_compressed),
                alpha * static_cast<double>(mac_cost(d, Method::kOriginal).macs_original));
      for (std::size_t v : r) EXPECT_GE(v, 1u);
    }
  }
}

TEST(RanksFromRatio, InfeasibleBudgetThrows) {
  EXPECT_THROW(ranks_from_ratio(Method::kWeightSvd, {4, 4, 1, 1, 1}, 0.01), ComputationError);
  EXPECT_THROW(ranks_from_ratio(Method::kWeightSvd, {4, 4, 1, 1, 1}, 0.0), InvalidArgument);
}

// Minimal tau over all grid combinations, then the cheapest combination
// attaining it.
struct Exhaustive {
  double tau = std::numeric_limits<double>::infinity();
  std::uint64_t macs = 0;
  bool feasible = false;
};

Exhaustive exhaustive_equal_acc(const std::vector<AccTable>& tables, double alpha) {
  std::uint64_t original = 0;
  for (const auto& t : tables) original += t.macs_original;
  Exhaustive best;
  std::vector<std::size_t> idx(tables.size(), 0);
  std::function<void(std::size_t)> walk = [&](std::size_t l) {
    if (l == tables.size()) {
      std::uint64_t macs = 0;
      double tau = 0.0;
      for (std::size_t j = 0; j < tables.size(); ++j) {
        macs += tables[j].grid[idx[j]].macs;
        tau = std::max(tau, std::max(0.0, tables[j].p_orig - tables[j].grid[idx[j]].accuracy));
      }
      if (static_cast<double>(macs) > alpha * static_cast<double>(original)) return;
      if (!best.feasible || tau < best.tau || (tau == best.tau && macs < best.macs)) {
        best = {tau, macs, true};
      }
      return;
    }
    for (std::size_t g = 0; g < tables[l].grid.size(); ++g) {
      idx[l] = g;
      walk(l + 1);
    }
  };
  walk(0);
  return best;
}

std::vector<AccTable> random_tables(Rng& rng, std::size_t layers) {
  std::vector<AccTable> tables;
  for (std::size_t l = 0; l < layers; ++l) {
    AccTable t;
    t.p_orig = 0.75;
    t.macs_original = 1000;
    const std::size_t g = 2 + rng.index(3);
    for (std::size_t j = 0; j < g; ++j) {
      t.grid.push_back({{j + 1}, std::round(rng.uniform(0.4, 0.8) * 100) / 100,
                        100 + rng.index(900)});
    }
    tables.push_back(t);
  }
  return tables;
}

TEST(EqualAcc, TwoLayerHandTable) {
  std::vector<AccTable> tables{
      {{{{1}, 0.60, 100}, {{2}, 0.70, 300}, {{3}, 0.75, 600}}, 0.75, 1000},
      {{{{1}, 0.50, 200}, {{2}, 0.72, 400}, {{3}, 0.75, 800}}, 0.75, 1000}};
  const RankPlan plan = equal_acc_select(tables, 0.4);
  const Exhaustive oracle = exhaustive_equal_acc(tables, 0.4);
  ASSERT_TRUE(oracle.feasible);
  EXPECT_DOUBLE_EQ(plan.tau, oracle.tau);
  EXPECT_EQ(plan.achieved_macs, oracle.macs);
  EXPECT_EQ(plan.ranks, (std::vector<RankVector>{{2}, {2}}));
  EXPECT_LE(plan.achieved_ratio, 0.4);
}

TEST(EqualAcc, NoBudgetPressure) {
  std::vector<AccTable> tables{
      {{{{1}, 0.60, 100}, {{2}, 0.75, 300}}, 0.75, 1000},
      {{{{1}, 0.50, 200}, {{4}, 0.75, 900}}, 0.75, 1000}};
  const RankPlan plan = equal_acc_select(tables, 1.0);
  EXPECT_EQ(plan.tau, 0.0);
  EXPECT_EQ(plan.ranks, (std::vector<RankVector>{{2}, {4}}));
}

TEST(EqualAcc, FlatLayerCompressedMaximally) {
  std::vector<AccTable> tables{
      {{{{1}, 0.75, 100}, {{2}, 0.75, 300}, {{3}, 0.75, 600}}, 0.75, 1000},
      {{{{1}, 0.50, 200}, {{2}, 0.70, 400}, {{3}, 0.75, 800}}, 0.75, 1000}};
  for (double alpha : {0.2, 0.3, 0.5, 1.0}) {
    EXPECT_EQ(equal_acc_select(tables, alpha).ranks[0], RankVector{1});
  }
}

TEST(EqualAcc, MatchesExhaustiveOnRandomInstances) {
  Rng rng(1);
  int checked = 0;
  for (int trial = 0; trial < 200 && checked < 50; ++trial) {
    const auto tables = random_tables(rng, 3);
    const double alpha = rng.uniform(0.1, 0.9);
    const Exhaustive oracle = exhaustive_equal_acc(tables, alpha);
    if (!oracle.feasible) {
      EXPECT_THROW(equal_acc_select(tables, alpha), ComputationError);
      continue;
    }
    const RankPlan plan = equal_acc_select(tables, alpha);
    EXPECT_DOUBLE_EQ(plan.tau, oracle.tau);
    EXPECT_EQ(plan.achieved_macs, oracle.macs);
    EXPECT_LE(static_cast<double>(plan.achieved_macs), alpha * 3000.0);
    for (std::size_t l = 0; l < 3; ++l) {
      EXPECT_GE(tables[l].grid[plan.choice[l]].accuracy, tables[l].p_orig - plan.tau);
    }
    ++checked;
  }
  EXPECT_EQ(checked, 50);
}

TEST(EqualAcc, Errors) {
  EXPECT_THROW(equal_acc_select(std::vector<AccTable>{}, 0.5), InvalidArgument);
  std::vector<AccTable> tables{{{{{1}, 0.6, 900}}, 0.75, 1000}};
  EXPECT_THROW(equal_acc_select(tables, 0.5), ComputationError);
}

TEST(GreedyEnergy, TwoLayerHandComputation) {
  const std::vector<std::vector<double>> sv{{10, 1}, {10, 10}};
  const std::vector<RankCost> costs{{2, 1}, {2, 1}};
  const RankPlan plan = greedy_energy_select(sv, costs, 0.75);
  EXPECT_EQ(plan.ranks, (std::vector<RankVector>{{1}, {2}}));
  EXPECT_NEAR(plan.log_energy, std::log(10.0) + std::log(20.0), 1e-12);
}

TEST(GreedyEnergy, NoBudgetPressureKeepsFullRanks) {
  const std::vector<std::vector<double>> sv{{5, 3, 1}, {4, 2}};
  const std::vector<RankCost> costs{{30, 10}, {20, 10}};
  const RankPlan plan = greedy_energy_select(sv, costs, 1.0);
  EXPECT_EQ(plan.ranks, (std::vector<RankVector>{{3}, {2}}));
  EXPECT_EQ(plan.trajectory.size(), 1u);
}

TEST(GreedyEnergy, TrajectoryMonotone) {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::vector<double>> sv(3);
    std::vector<RankCost> costs;
    for (auto& l : sv) {
      const std::size_t n = 2 + rng.index(5);
      for (std::size_t i = 0; i < n; ++i) l.push_back(rng.uniform(1, 10));
      std::sort(l.rbegin(), l.rend());
      const std::uint64_t per = 1 + rng.index(20);
      costs.push_back({per * n * 3, per});
    }
    const RankPlan plan = greedy_energy_select(sv, costs, 0.4);
    for (std::size_t i = 1; i < plan.trajectory.size(); ++i) {
      EXPECT_LT(plan.trajectory[i].first, plan.trajectory[i - 1].first);
      EXPECT_LE(plan.trajectory[i].second, plan.trajectory[i - 1].second + 1e-12);
    }
    EXPECT_LE(plan.achieved_ratio, 0.4);
  }
}

TEST(GreedyEnergy, Errors) {
  const std::vector<RankCost> costs{{10, 5}};
  EXPECT_THROW(greedy_energy_select({{1, 2}}, costs, 0.5), InvalidArgument);
  EXPECT_THROW(greedy_energy_select({{2, 1}}, costs, 0.1), ComputationError);
  EXPECT_THROW(greedy_energy_select({{2, 1}}, std::vector<RankCost>{}, 0.5), InvalidArgument);
}

TEST(RankCost, LinearInRank) {
  const LayerDims d{8, 12, 3, 4, 4};
  const RankCost c = rank_cost(d, Method::kSpatialSvd);
  EXPECT_EQ(c.macs_per_rank * 5, mac_cost(d, Method::kSpatialSvd, {5}).macs_compressed);
  EXPECT_THROW(rank_cost(d, Method::kTucker), InvalidArgument);
}

}  // namespace
}  // namespace convfact
