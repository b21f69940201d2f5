#pragma once

#include <span>
#include <vector>

#include "expertmatch/embedding.hpp"
#include "expertmatch/errors.hpp"

namespace expertmatch::transport {

// Support weights below this are pruned before solving.
inline constexpr double kWeightFloor = 1e-12;

struct PlanEntry {
  int source = 0;  // index into the source support
  int target = 0;  // index into the target support
  double mass = 0.0;
};

struct TransportPlan {
  std::vector<PlanEntry> entries;
  double objective = 0.0;
};

// Euclidean distance between embedding vectors.
double ground_cost(std::span<const double> a, std::span<const double> b);

// Solves the balanced transportation LP
//   min sum_ij T_ij cost[i][j]  s.t.  sum_j T_ij = supply_i, sum_i T_ij = demand_j
// to optimality with a transportation-simplex method. Marginals must each sum
// to the same total (they are probability distributions here).
TransportPlan solve_transport(std::span<const double> supply,
                              std::span<const double> demand,
                              const std::vector<std::vector<double>>& cost);

struct QtoeResult {
  double distance = 0.0;
  TransportPlan plan;  // sources/targets index the nBOW supports
};

// Exact question-to-expert distance: optimal transport between the two nBOW
// distributions under Euclidean ground cost over the word embeddings.
QtoeResult qtoe_exact(const embedding::NbowVector& d_q,
                      const embedding::NbowVector& d_v,
                      const embedding::EmbeddingTable& table);

// Lower bound in O(p^2): drop one marginal constraint family at a time (each
// word then ships all mass to its nearest counterpart) and take the larger of
// the two relaxed objectives.
double qtoe_relaxed(const embedding::NbowVector& d_q,
                    const embedding::NbowVector& d_v,
                    const embedding::EmbeddingTable& table);

}  // namespace expertmatch::transport
