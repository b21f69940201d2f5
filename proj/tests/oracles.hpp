// Independent reference implementations the tests compare against. Everything
// here recomputes results from first principles (exhaustive enumeration,
// direct linear algebra, textbook definitions) and shares no code with the
// library internals it checks.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "expertmatch/rankfg.hpp"

namespace oracle {

// Raw-bits helpers so generated instances are identical on every platform;
// std::uniform_real_distribution is not pinned down by the standard.
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

inline int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return lo + static_cast<int>(rng() % static_cast<uint64_t>(hi - lo + 1));
}

// ------------------------------------------------------------ factor graphs
//
// Everything below walks all 2^N labelings of a FactorGraphInstance and
// scores each one straight from the model definition:
//   score(y) = sum_{i: y_i=1} alpha . psi_i + sum_{(a,b,l)} beta_l [y_a = y_b]

inline double labeling_score(const expertmatch::rankfg::FactorGraphInstance& g,
                             const expertmatch::rankfg::Params& params,
                             uint32_t mask) {
  double score = 0.0;
  for (int i = 0; i < g.variable_count(); ++i) {
    if (!(mask >> i & 1)) continue;
    for (int k = 0; k < expertmatch::features::kLocalDim; ++k)
      score += params.alpha[k] * g.psi[i][k];
  }
  for (const auto& pair : g.pairs) {
    const int ya = mask >> pair.a & 1;
    const int yb = mask >> pair.b & 1;
    if (ya == yb) score += params.beta[static_cast<int>(pair.kind)];
  }
  return score;
}

struct EnumeratedDistribution {
  double log_z = 0.0;
  std::vector<double> marginal_p1;     // per variable
  std::vector<double> pair_agree;      // per pairwise factor
  std::vector<int> map_labels;         // first maximum in mask order
};

inline EnumeratedDistribution enumerate_distribution(
    const expertmatch::rankfg::FactorGraphInstance& g,
    const expertmatch::rankfg::Params& params) {
  const int n = g.variable_count();
  const uint32_t total = 1u << n;
  std::vector<double> scores(total);
  double max_score = -std::numeric_limits<double>::infinity();
  uint32_t best_mask = 0;
  for (uint32_t mask = 0; mask < total; ++mask) {
    scores[mask] = labeling_score(g, params, mask);
    if (scores[mask] > max_score) {
      max_score = scores[mask];
      best_mask = mask;
    }
  }
  double sum = 0.0;
  for (double s : scores) sum += std::exp(s - max_score);

  EnumeratedDistribution out;
  out.log_z = max_score + std::log(sum);
  out.marginal_p1.assign(n, 0.0);
  out.pair_agree.assign(g.pairs.size(), 0.0);
  for (uint32_t mask = 0; mask < total; ++mask) {
    const double p = std::exp(scores[mask] - out.log_z);
    for (int i = 0; i < n; ++i)
      if (mask >> i & 1) out.marginal_p1[i] += p;
    for (std::size_t f = 0; f < g.pairs.size(); ++f)
      if ((mask >> g.pairs[f].a & 1) == (mask >> g.pairs[f].b & 1))
        out.pair_agree[f] += p;
  }
  out.map_labels.assign(n, 0);
  for (int i = 0; i < n; ++i) out.map_labels[i] = best_mask >> i & 1;
  return out;
}

// ---------------------------------------------------------------- transport
//
// Minimum-cost transportation by vertex enumeration: every vertex of the
// polytope is determined by a basis of rows + cols - 1 cells, so for tiny
// instances we can try every cell subset of that size, solve the marginal
// equations restricted to it, and keep the cheapest feasible solution.

// Gaussian elimination; returns false when the system is inconsistent or the
// basic flows are not uniquely determined.
inline bool solve_basis(const std::vector<double>& supply,
                        const std::vector<double>& demand,
                        const std::vector<std::pair<int, int>>& cells,
                        std::vector<double>& flows) {
  const int rows = static_cast<int>(supply.size());
  const int cols = static_cast<int>(demand.size());
  const int eqs = rows + cols;
  const int vars = static_cast<int>(cells.size());
  std::vector<std::vector<double>> m(eqs, std::vector<double>(vars + 1, 0.0));
  for (int v = 0; v < vars; ++v) {
    m[cells[v].first][v] = 1.0;
    m[rows + cells[v].second][v] = 1.0;
  }
  for (int i = 0; i < rows; ++i) m[i][vars] = supply[i];
  for (int j = 0; j < cols; ++j) m[rows + j][vars] = demand[j];

  std::vector<int> pivot_of(vars, -1);
  int rank = 0;
  for (int col = 0; col < vars && rank < eqs; ++col) {
    int best = -1;
    double best_abs = 1e-12;
    for (int row = rank; row < eqs; ++row)
      if (std::abs(m[row][col]) > best_abs) {
        best_abs = std::abs(m[row][col]);
        best = row;
      }
    if (best < 0) continue;
    std::swap(m[rank], m[best]);
    for (int row = 0; row < eqs; ++row) {
      if (row == rank || m[row][col] == 0.0) continue;
      const double factor = m[row][col] / m[rank][col];
      for (int k = col; k <= vars; ++k) m[row][k] -= factor * m[rank][k];
    }
    pivot_of[col] = rank;
    ++rank;
  }
  for (int row = rank; row < eqs; ++row)
    if (std::abs(m[row][vars]) > 1e-7) return false;  // inconsistent
  for (int v = 0; v < vars; ++v)
    if (pivot_of[v] < 0) return false;  // underdetermined

  flows.assign(vars, 0.0);
  for (int v = 0; v < vars; ++v)
    flows[v] = m[pivot_of[v]][vars] / m[pivot_of[v]][v];
  return true;
}

// Optimal objective, or +inf if no feasible basis exists (cannot happen for
// balanced marginals).
inline double min_cost_transport(const std::vector<double>& supply,
                                 const std::vector<double>& demand,
                                 const std::vector<std::vector<double>>& cost) {
  const int rows = static_cast<int>(supply.size());
  const int cols = static_cast<int>(demand.size());
  const int cells = rows * cols;
  const int basis_size = rows + cols - 1;
  double best = std::numeric_limits<double>::infinity();

  std::vector<int> pick(basis_size);
  // lexicographic subsets of {0..cells-1} of size basis_size
  for (int i = 0; i < basis_size; ++i) pick[i] = i;
  while (true) {
    std::vector<std::pair<int, int>> chosen;
    for (int idx : pick) chosen.emplace_back(idx / cols, idx % cols);
    std::vector<double> flows;
    if (solve_basis(supply, demand, chosen, flows)) {
      bool feasible = true;
      double objective = 0.0;
      for (int v = 0; v < basis_size; ++v) {
        if (flows[v] < -1e-9) {
          feasible = false;
          break;
        }
        objective += std::max(flows[v], 0.0) * cost[chosen[v].first][chosen[v].second];
      }
      if (feasible) best = std::min(best, objective);
    }
    int i = basis_size - 1;
    while (i >= 0 && pick[i] == cells - basis_size + i) --i;
    if (i < 0) break;
    ++pick[i];
    for (int k = i + 1; k < basis_size; ++k) pick[k] = pick[k - 1] + 1;
  }
  return best;
}

// ------------------------------------------------------------------ metrics

inline double precision_at_n_bf(const std::vector<int>& relevance, int n) {
  int hits = 0;
  for (int i = 0; i < n && i < static_cast<int>(relevance.size()); ++i)
    hits += relevance[i];
  return static_cast<double>(hits) / n;
}

inline double average_precision_bf(const std::vector<int>& relevance) {
  int total = 0;
  for (int r : relevance) total += r;
  if (total == 0) return 0.0;
  double sum = 0.0;
  int seen = 0;
  for (std::size_t k = 0; k < relevance.size(); ++k) {
    if (!relevance[k]) continue;
    ++seen;
    sum += static_cast<double>(seen) / static_cast<double>(k + 1);
  }
  return sum / total;
}

inline double r_prec_bf(const std::vector<int>& relevance) {
  int total = 0;
  for (int r : relevance) total += r;
  int hits = 0;
  for (int i = 0; i < total && i < static_cast<int>(relevance.size()); ++i)
    hits += relevance[i];
  return static_cast<double>(hits) / total;
}

// --------------------------------------------------- numerical differences

// Central finite difference of a scalar function along one coordinate.
template <typename F>
double central_difference(F&& f, std::vector<double> point, std::size_t i,
                          double h = 1e-5) {
  point[i] += h;
  const double plus = f(point);
  point[i] -= 2 * h;
  const double minus = f(point);
  return (plus - minus) / (2 * h);
}

}  // namespace oracle
