#include "expertmatch/transport.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>

namespace expertmatch::transport {

double ground_cost(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw DimensionMismatchError("embedding dimensions differ: " +
                                 std::to_string(a.size()) + " vs " +
                                 std::to_string(b.size()));
  double sq = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sq += d * d;
  }
  return std::sqrt(sq);
}

namespace {

constexpr double kReducedCostTol = 1e-11;

// Transportation simplex state. Nodes are rows 0..r-1 and columns r..r+c-1;
// the basis is a spanning tree of r+c-1 cells.
struct Simplex {
  int rows, cols;
  const std::vector<std::vector<double>>& cost;
  struct Arc {
    int row, col;
    double flow;
    bool active;
  };
  std::vector<Arc> arcs;                  // basis arcs (inactive slots reused)
  std::vector<std::vector<int>> adjacency;  // node -> basis arc ids
  std::vector<double> u, v;               // duals
  std::vector<int> parent_arc, parent_node;

  Simplex(std::span<const double> supply, std::span<const double> demand,
          const std::vector<std::vector<double>>& cost_matrix)
      : rows(static_cast<int>(supply.size())),
        cols(static_cast<int>(demand.size())),
        cost(cost_matrix),
        adjacency(static_cast<std::size_t>(rows + cols)),
        u(static_cast<std::size_t>(rows)),
        v(static_cast<std::size_t>(cols)),
        parent_arc(static_cast<std::size_t>(rows + cols)),
        parent_node(static_cast<std::size_t>(rows + cols)) {
    northwest_corner(supply, demand);
    rebuild_adjacency();
  }

  // Initial basic feasible solution with exactly rows+cols-1 cells; ties add
  // zero-flow cells so the basis stays a spanning tree.
  void northwest_corner(std::span<const double> supply,
                        std::span<const double> demand) {
    std::vector<double> rs(supply.begin(), supply.end());
    std::vector<double> rd(demand.begin(), demand.end());
    int i = 0, j = 0;
    while (true) {
      const double x = std::min(rs[i], rd[j]);
      arcs.push_back({i, j, x, true});
      rs[i] -= x;
      rd[j] -= x;
      if (i == rows - 1 && j == cols - 1) break;
      if (rs[i] <= 0.0 && i < rows - 1)
        ++i;
      else
        ++j;
    }
  }

  void rebuild_adjacency() {
    for (auto& list : adjacency) list.clear();
    for (std::size_t a = 0; a < arcs.size(); ++a) {
      if (!arcs[a].active) continue;
      adjacency[static_cast<std::size_t>(arcs[a].row)].push_back(static_cast<int>(a));
      adjacency[static_cast<std::size_t>(rows + arcs[a].col)].push_back(static_cast<int>(a));
    }
  }

  // Duals from the tree: u[0] = 0, c_ij = u_i + v_j on basic cells.
  void compute_duals() {
    std::vector<char> seen(static_cast<std::size_t>(rows + cols), 0);
    std::queue<int> frontier;
    u[0] = 0.0;
    seen[0] = 1;
    frontier.push(0);
    while (!frontier.empty()) {
      const int node = frontier.front();
      frontier.pop();
      for (int a : adjacency[static_cast<std::size_t>(node)]) {
        const Arc& arc = arcs[static_cast<std::size_t>(a)];
        const int other = node < rows ? rows + arc.col : arc.row;
        if (seen[static_cast<std::size_t>(other)]) continue;
        seen[static_cast<std::size_t>(other)] = 1;
        if (other >= rows)
          v[static_cast<std::size_t>(other - rows)] =
              cost[static_cast<std::size_t>(arc.row)][static_cast<std::size_t>(arc.col)] -
              u[static_cast<std::size_t>(arc.row)];
        else
          u[static_cast<std::size_t>(other)] =
              cost[static_cast<std::size_t>(arc.row)][static_cast<std::size_t>(arc.col)] -
              v[static_cast<std::size_t>(arc.col)];
        frontier.push(other);
      }
    }
  }

  // Path between two nodes in the basis tree, as parent pointers.
  void tree_path(int from) {
    std::fill(parent_arc.begin(), parent_arc.end(), -1);
    std::fill(parent_node.begin(), parent_node.end(), -1);
    std::vector<char> seen(static_cast<std::size_t>(rows + cols), 0);
    std::queue<int> frontier;
    seen[static_cast<std::size_t>(from)] = 1;
    frontier.push(from);
    while (!frontier.empty()) {
      const int node = frontier.front();
      frontier.pop();
      for (int a : adjacency[static_cast<std::size_t>(node)]) {
        const Arc& arc = arcs[static_cast<std::size_t>(a)];
        const int other = node < rows ? rows + arc.col : arc.row;
        if (seen[static_cast<std::size_t>(other)]) continue;
        seen[static_cast<std::size_t>(other)] = 1;
        parent_arc[static_cast<std::size_t>(other)] = a;
        parent_node[static_cast<std::size_t>(other)] = node;
        frontier.push(other);
      }
    }
  }

  // One pivot on entering cell (ei, ej). Returns false when the basis did not
  // change (should not happen on a valid tree).
  void pivot(int ei, int ej) {
    tree_path(ei);
    // walk from the column node back to the row node; cells along the path,
    // counted from the entering row, alternate -theta, +theta, ...
    std::vector<int> path_arcs;
    int node = rows + ej;
    while (node != ei) {
      path_arcs.push_back(parent_arc[static_cast<std::size_t>(node)]);
      node = parent_node[static_cast<std::size_t>(node)];
    }
    std::reverse(path_arcs.begin(), path_arcs.end());  // now starts next to ei

    double theta = std::numeric_limits<double>::infinity();
    int leaving = -1;
    for (std::size_t t = 0; t < path_arcs.size(); t += 2) {  // minus positions
      const Arc& arc = arcs[static_cast<std::size_t>(path_arcs[t])];
      if (arc.flow < theta) {
        theta = arc.flow;
        leaving = path_arcs[t];
      }
    }
    for (std::size_t t = 0; t < path_arcs.size(); ++t) {
      Arc& arc = arcs[static_cast<std::size_t>(path_arcs[t])];
      arc.flow += (t % 2 == 0) ? -theta : theta;
    }
    Arc& gone = arcs[static_cast<std::size_t>(leaving)];
    gone = {ei, ej, theta, true};  // reuse the slot for the entering cell
    rebuild_adjacency();
  }

  // Most negative reduced cost (Dantzig) or first negative (Bland).
  bool find_entering(bool bland, int& ei, int& ej) {
    compute_duals();
    double best = -kReducedCostTol;
    ei = -1;
    for (int i = 0; i < rows; ++i) {
      for (int j = 0; j < cols; ++j) {
        const double rc = cost[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] -
                          u[static_cast<std::size_t>(i)] - v[static_cast<std::size_t>(j)];
        if (rc < best) {
          best = rc;
          ei = i;
          ej = j;
          if (bland) return true;
        }
      }
    }
    return ei >= 0;
  }

  TransportPlan solve() {
    const long bland_after = 50L * (rows + cols) + 2000;
    const long hard_cap = 4'000'000L;
    int ei, ej;
    for (long iter = 0; find_entering(iter > bland_after, ei, ej); ++iter) {
      if (iter > hard_cap)
        throw Error("transport_stalled", "transportation simplex did not terminate");
      pivot(ei, ej);
    }
    TransportPlan plan;
    for (const Arc& arc : arcs) {
      if (!arc.active || arc.flow <= 0.0) continue;
      plan.entries.push_back({arc.row, arc.col, arc.flow});
      plan.objective += arc.flow *
          cost[static_cast<std::size_t>(arc.row)][static_cast<std::size_t>(arc.col)];
    }
    return plan;
  }
};

struct Support {
  std::vector<int> words;     // embedding indices
  std::vector<double> weights;
};

Support pruned_support(const embedding::NbowVector& d) {
  Support s;
  double total = 0.0;
  for (const auto& [idx, w] : d.weights) {
    if (w < kWeightFloor) continue;
    s.words.push_back(idx);
    s.weights.push_back(w);
    total += w;
  }
  if (s.words.empty())
    throw EmptyDistributionError("nBOW distribution has no support");
  for (double& w : s.weights) w /= total;
  return s;
}

std::vector<std::vector<double>> cost_matrix(const Support& a, const Support& b,
                                             const embedding::EmbeddingTable& table) {
  std::vector<std::vector<double>> cost(a.words.size(),
                                        std::vector<double>(b.words.size()));
  for (std::size_t i = 0; i < a.words.size(); ++i)
    for (std::size_t j = 0; j < b.words.size(); ++j)
      cost[i][j] = ground_cost(table.input_vectors[static_cast<std::size_t>(a.words[i])],
                               table.input_vectors[static_cast<std::size_t>(b.words[j])]);
  return cost;
}

}  // namespace

TransportPlan solve_transport(std::span<const double> supply,
                              std::span<const double> demand,
                              const std::vector<std::vector<double>>& cost) {
  if (supply.empty() || demand.empty())
    throw EmptyDistributionError("transport marginals must be non-empty");
  double s_total = 0.0, d_total = 0.0;
  for (double x : supply) s_total += x;
  for (double x : demand) d_total += x;
  if (std::abs(s_total - d_total) > 1e-6)
    throw Error("unbalanced_marginals", "supply and demand totals differ");
  Simplex simplex(supply, demand, cost);
  return simplex.solve();
}

QtoeResult qtoe_exact(const embedding::NbowVector& d_q,
                      const embedding::NbowVector& d_v,
                      const embedding::EmbeddingTable& table) {
  const Support src = pruned_support(d_q);
  const Support tgt = pruned_support(d_v);
  const auto cost = cost_matrix(src, tgt, table);
  QtoeResult result;
  result.plan = solve_transport(src.weights, tgt.weights, cost);
  result.distance = result.plan.objective;
  return result;
}

double qtoe_relaxed(const embedding::NbowVector& d_q,
                    const embedding::NbowVector& d_v,
                    const embedding::EmbeddingTable& table) {
  const Support src = pruned_support(d_q);
  const Support tgt = pruned_support(d_v);
  const auto cost = cost_matrix(src, tgt, table);
  double row_bound = 0.0;
  for (std::size_t i = 0; i < src.words.size(); ++i) {
    double best = cost[i][0];
    for (std::size_t j = 1; j < tgt.words.size(); ++j) best = std::min(best, cost[i][j]);
    row_bound += src.weights[i] * best;
  }
  double col_bound = 0.0;
  for (std::size_t j = 0; j < tgt.words.size(); ++j) {
    double best = cost[0][j];
    for (std::size_t i = 1; i < src.words.size(); ++i) best = std::min(best, cost[i][j]);
    col_bound += tgt.weights[j] * best;
  }
  return std::max(row_bound, col_bound);
}

}  // namespace expertmatch::transport
