#include "expertmatch/rankfg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <queue>
#include <random>
#include <unordered_map>

#include <json.hpp>

#include "expertmatch/util.hpp"

namespace expertmatch::rankfg {

using json = nlohmann::ordered_json;

StatsVector to_stats_vector(const Params& params) {
  StatsVector theta{};
  for (int c = 0; c < features::kLocalDim; ++c) theta[c] = params.alpha[c];
  for (int c = 0; c < features::kCorrDim; ++c)
    theta[features::kLocalDim + c] = params.beta[c];
  return theta;
}

Params from_stats_vector(const StatsVector& theta) {
  Params params;
  for (int c = 0; c < features::kLocalDim; ++c) params.alpha[c] = theta[c];
  for (int c = 0; c < features::kCorrDim; ++c)
    params.beta[c] = theta[features::kLocalDim + c];
  return params;
}

namespace {

int kind_index(core::RelationKind kind) {
  switch (kind) {
    case core::RelationKind::same_nationality: return 0;
    case core::RelationKind::same_affiliation: return 1;
    case core::RelationKind::friendship: return 2;
  }
  return 2;
}

// Two-class softmax from log scores; the degenerate all -inf case falls back
// to uniform.
std::array<double, 2> softmax2(double l0, double l1) {
  const double m = std::max(l0, l1);
  if (!std::isfinite(m)) return {0.5, 0.5};
  const double e0 = std::exp(l0 - m);
  const double e1 = std::exp(l1 - m);
  return {e0 / (e0 + e1), e1 / (e0 + e1)};
}

double plogp(double p) { return p > 0.0 ? p * std::log(p) : 0.0; }

void check_labels(const FactorGraphInstance& graph, const std::vector<int>& labels) {
  if (static_cast<int>(labels.size()) != graph.variable_count())
    throw UnlabeledVariableError("expected " + std::to_string(graph.variable_count()) +
                                 " labels, got " + std::to_string(labels.size()));
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] != 0 && labels[i] != 1)
      throw UnlabeledVariableError("variable " + std::to_string(i) +
                                   " has label " + std::to_string(labels[i]));
}

// The message-passing engine over the bipartite (variable, pairwise-factor)
// graph. Local factors have degree 1 and are absorbed into per-variable
// unary log-potentials lu1 (lu0 is identically 0 by the feature encoding).
// Edge 2p connects pairs[p].a to factor p; edge 2p+1 connects pairs[p].b.
struct Engine {
  const FactorGraphInstance& g;
  int V, P, E;
  std::vector<double> lu1;  // alpha . psi per variable
  std::vector<double> lb;   // beta_kind per pairwise factor
  std::vector<double> wb;   // exp(lb), shared by every message through the factor
  std::vector<std::array<double, 2>> to_fac, to_var;  // normalized messages
  // log of each incoming to_var message plus their per-variable running sums,
  // kept in step with every store; an outgoing message or a belief is then
  // O(1) instead of a walk over the variable's whole neighbourhood
  std::vector<std::array<double, 2>> log_to_var;
  std::vector<double> sum_log0, sum_log1;
  std::vector<int> comp_of_node;  // nodes: var v, factor V+p
  std::vector<char> comp_loopy;
  bool any_loopy = false;
  double damping;
  std::mt19937_64 rng;

  // per-sweep BFS forest
  std::vector<int> order, parent_edge;
  std::vector<char> edge_in_tree, visited;

  Engine(const FactorGraphInstance& graph, const Params& params, const BpConfig& config)
      : g(graph),
        V(graph.variable_count()),
        P(graph.pair_factor_count()),
        E(2 * P),
        damping(config.damping),
        rng(config.seed) {
    lu1.resize(static_cast<std::size_t>(V));
    for (int v = 0; v < V; ++v) {
      double dot = 0.0;
      for (int c = 0; c < features::kLocalDim; ++c)
        dot += params.alpha[c] * g.psi[static_cast<std::size_t>(v)][c];
      lu1[static_cast<std::size_t>(v)] = dot;
    }
    lb.resize(static_cast<std::size_t>(P));
    wb.resize(static_cast<std::size_t>(P));
    for (int p = 0; p < P; ++p) {
      lb[static_cast<std::size_t>(p)] = params.beta[kind_index(g.pairs[static_cast<std::size_t>(p)].kind)];
      wb[static_cast<std::size_t>(p)] = std::exp(lb[static_cast<std::size_t>(p)]);
    }
    to_fac.assign(static_cast<std::size_t>(E), {0.5, 0.5});
    to_var.assign(static_cast<std::size_t>(E), {0.5, 0.5});
    const double log_half = std::log(0.5);
    log_to_var.assign(static_cast<std::size_t>(E), {log_half, log_half});
    sum_log0.resize(static_cast<std::size_t>(V));
    sum_log1.resize(static_cast<std::size_t>(V));
    for (int v = 0; v < V; ++v) {
      const double degree =
          static_cast<double>(g.var_pairs[static_cast<std::size_t>(v)].size());
      sum_log0[static_cast<std::size_t>(v)] = degree * log_half;
      sum_log1[static_cast<std::size_t>(v)] = degree * log_half;
    }
    parent_edge.resize(static_cast<std::size_t>(V + P));
    visited.resize(static_cast<std::size_t>(V + P));
    edge_in_tree.resize(static_cast<std::size_t>(E));
    components();
  }

  int edge_var(int e) const {
    const auto& pr = g.pairs[static_cast<std::size_t>(e / 2)];
    return e % 2 == 0 ? pr.a : pr.b;
  }
  int incident_edge(int pair_id, int v) const {
    return g.pairs[static_cast<std::size_t>(pair_id)].a == v ? 2 * pair_id : 2 * pair_id + 1;
  }

  void components() {
    comp_of_node.assign(static_cast<std::size_t>(V + P), -1);
    for (int start = 0; start < V; ++start) {
      if (comp_of_node[static_cast<std::size_t>(start)] >= 0) continue;
      const int c = static_cast<int>(comp_loopy.size());
      int n_vars = 0, n_facs = 0;
      std::queue<int> frontier;
      comp_of_node[static_cast<std::size_t>(start)] = c;
      frontier.push(start);
      while (!frontier.empty()) {
        const int node = frontier.front();
        frontier.pop();
        if (node < V) {
          ++n_vars;
          for (int pid : g.var_pairs[static_cast<std::size_t>(node)]) {
            if (comp_of_node[static_cast<std::size_t>(V + pid)] >= 0) continue;
            comp_of_node[static_cast<std::size_t>(V + pid)] = c;
            frontier.push(V + pid);
          }
        } else {
          ++n_facs;
          const auto& pr = g.pairs[static_cast<std::size_t>(node - V)];
          for (int v : {pr.a, pr.b}) {
            if (comp_of_node[static_cast<std::size_t>(v)] >= 0) continue;
            comp_of_node[static_cast<std::size_t>(v)] = c;
            frontier.push(v);
          }
        }
      }
      // a tree of k variables carries k-1 pairwise factors
      const bool loopy = n_facs > n_vars - 1;
      comp_loopy.push_back(loopy ? 1 : 0);
      any_loopy = any_loopy || loopy;
    }
  }

  bool edge_damped(int e) const {
    return comp_loopy[static_cast<std::size_t>(
               comp_of_node[static_cast<std::size_t>(V + e / 2)])] != 0;
  }

  // BFS forest for one sweep: a random variable roots the first component,
  // remaining components are rooted at their lowest variable index.
  void build_schedule(bool random_root) {
    order.clear();
    std::fill(parent_edge.begin(), parent_edge.end(), -1);
    std::fill(visited.begin(), visited.end(), 0);
    std::fill(edge_in_tree.begin(), edge_in_tree.end(), 0);
    auto bfs = [&](int root) {
      if (visited[static_cast<std::size_t>(root)]) return;
      visited[static_cast<std::size_t>(root)] = 1;
      std::size_t head = order.size();
      order.push_back(root);
      while (head < order.size()) {
        const int node = order[head++];
        if (node < V) {
          for (int pid : g.var_pairs[static_cast<std::size_t>(node)]) {
            const int other = V + pid;
            if (visited[static_cast<std::size_t>(other)]) continue;
            visited[static_cast<std::size_t>(other)] = 1;
            const int e = incident_edge(pid, node);
            parent_edge[static_cast<std::size_t>(other)] = e;
            edge_in_tree[static_cast<std::size_t>(e)] = 1;
            order.push_back(other);
          }
        } else {
          const int p = node - V;
          for (int e : {2 * p, 2 * p + 1}) {
            const int other = edge_var(e);
            if (visited[static_cast<std::size_t>(other)]) continue;
            visited[static_cast<std::size_t>(other)] = 1;
            parent_edge[static_cast<std::size_t>(other)] = e;
            edge_in_tree[static_cast<std::size_t>(e)] = 1;
            order.push_back(other);
          }
        }
      }
    };
    if (V > 0 && random_root) bfs(static_cast<int>(rng() % static_cast<uint64_t>(V)));
    for (int v = 0; v < V; ++v) bfs(v);
  }

  std::array<double, 2> compute_var_to_fac(int e) const {
    const int v = edge_var(e);
    const auto& self = log_to_var[static_cast<std::size_t>(e)];
    const double l0 = sum_log0[static_cast<std::size_t>(v)] - self[0];
    const double l1 =
        lu1[static_cast<std::size_t>(v)] + sum_log1[static_cast<std::size_t>(v)] - self[1];
    return softmax2(l0, l1);
  }

  std::array<double, 2> compute_fac_to_var(int e) const {
    const int o = e ^ 1;  // the factor's other edge
    const double w = wb[static_cast<std::size_t>(e / 2)];
    const auto& m = to_fac[static_cast<std::size_t>(o)];
    const double m0 = m[0] * w + m[1];
    const double m1 = m[0] + m[1] * w;
    return {m0 / (m0 + m1), m1 / (m0 + m1)};
  }

  double store(std::array<double, 2>& slot, std::array<double, 2> updated, bool damp) {
    if (damp)
      for (int y = 0; y < 2; ++y)
        updated[static_cast<std::size_t>(y)] =
            damping * slot[static_cast<std::size_t>(y)] +
            (1.0 - damping) * updated[static_cast<std::size_t>(y)];
    const double change = std::max(std::abs(updated[0] - slot[0]),
                                   std::abs(updated[1] - slot[1]));
    slot = updated;
    return change;
  }

  double send(int e, bool from_var) {
    const bool damp = edge_damped(e);
    if (from_var) return store(to_fac[static_cast<std::size_t>(e)], compute_var_to_fac(e), damp);
    auto& slot = to_var[static_cast<std::size_t>(e)];
    std::array<double, 2> updated = compute_fac_to_var(e);
    if (damp)
      for (int y = 0; y < 2; ++y)
        updated[static_cast<std::size_t>(y)] =
            damping * slot[static_cast<std::size_t>(y)] +
            (1.0 - damping) * updated[static_cast<std::size_t>(y)];
    const double change = std::max(std::abs(updated[0] - slot[0]),
                                   std::abs(updated[1] - slot[1]));
    auto& logs = log_to_var[static_cast<std::size_t>(e)];
    const std::array<double, 2> refreshed = {std::log(updated[0]), std::log(updated[1])};
    const int v = edge_var(e);
    sum_log0[static_cast<std::size_t>(v)] += refreshed[0] - logs[0];
    sum_log1[static_cast<std::size_t>(v)] += refreshed[1] - logs[1];
    logs = refreshed;
    slot = updated;
    return change;
  }

  // One leaves-to-root, root-to-leaves sweep plus the cycle-closing edges;
  // returns the largest message change.
  double sweep() {
    build_schedule(true);
    double residual = 0.0;
    for (std::size_t i = order.size(); i-- > 0;) {
      const int node = order[i];
      const int e = parent_edge[static_cast<std::size_t>(node)];
      if (e < 0) continue;
      residual = std::max(residual, send(e, node < V));
    }
    for (std::size_t i = 0; i < order.size(); ++i) {
      const int node = order[i];
      const int e = parent_edge[static_cast<std::size_t>(node)];
      if (e < 0) continue;
      residual = std::max(residual, send(e, node >= V));  // parent side sends
    }
    for (int e = 0; e < E; ++e) {
      if (edge_in_tree[static_cast<std::size_t>(e)]) continue;
      residual = std::max(residual, send(e, true));
      residual = std::max(residual, send(e, false));
    }
    return residual;
  }

  std::array<double, 2> variable_belief(int v) const {
    return softmax2(sum_log0[static_cast<std::size_t>(v)],
                    lu1[static_cast<std::size_t>(v)] + sum_log1[static_cast<std::size_t>(v)]);
  }

  // joint belief over (y_a, y_b), indexed ya*2+yb
  std::array<double, 4> pair_belief(int p) const {
    const auto ma = compute_var_to_fac(2 * p);
    const auto mb = compute_var_to_fac(2 * p + 1);
    const double w = wb[static_cast<std::size_t>(p)];
    std::array<double, 4> b{ma[0] * mb[0] * w, ma[0] * mb[1],
                            ma[1] * mb[0], ma[1] * mb[1] * w};
    const double total = b[0] + b[1] + b[2] + b[3];
    for (double& x : b) x /= total;
    return b;
  }

  BpResult run(const BpConfig& config) {
    BpResult result;
    result.loopy = any_loopy;
    for (int s = 0; s < config.max_sweeps; ++s) {
      result.residual = sweep();
      result.sweeps = s + 1;
      if (result.residual < config.tolerance) {
        result.converged = true;
        break;
      }
    }
    result.marginal_p1.resize(static_cast<std::size_t>(V));
    for (int v = 0; v < V; ++v)
      result.marginal_p1[static_cast<std::size_t>(v)] = variable_belief(v)[1];
    result.pair_agree.resize(static_cast<std::size_t>(P));
    for (int p = 0; p < P; ++p) {
      const auto b = pair_belief(p);
      result.pair_agree[static_cast<std::size_t>(p)] = b[0] + b[3];
    }
    return result;
  }

  // Bethe free-energy estimate of log Z from the current beliefs. Factor
  // terms cover both the absorbed unary factors and the pairwise ones, so a
  // variable's counting number is 1 + (its pairwise degree) - 1.
  double bethe() const {
    double logz = 0.0;
    for (int v = 0; v < V; ++v) {
      const auto b = variable_belief(v);
      logz += b[1] * lu1[static_cast<std::size_t>(v)] - plogp(b[0]) - plogp(b[1]);
      logz += static_cast<double>(g.var_pairs[static_cast<std::size_t>(v)].size()) *
              (plogp(b[0]) + plogp(b[1]));
    }
    for (int p = 0; p < P; ++p) {
      const auto b = pair_belief(p);
      logz += (b[0] + b[3]) * lb[static_cast<std::size_t>(p)];
      for (double x : b) logz -= plogp(x);
    }
    return logz;
  }
};

// Online log-sum-exp over all 2^V assignments.
double enumerate_log_partition(const FactorGraphInstance& graph, const Params& params) {
  const int V = graph.variable_count();
  std::vector<double> lu1(static_cast<std::size_t>(V));
  for (int v = 0; v < V; ++v) {
    double dot = 0.0;
    for (int c = 0; c < features::kLocalDim; ++c)
      dot += params.alpha[c] * graph.psi[static_cast<std::size_t>(v)][c];
    lu1[static_cast<std::size_t>(v)] = dot;
  }
  double m = -std::numeric_limits<double>::infinity(), acc = 0.0;
  for (uint64_t mask = 0; mask < (uint64_t{1} << V); ++mask) {
    double score = 0.0;
    for (int v = 0; v < V; ++v)
      if (mask >> v & 1) score += lu1[static_cast<std::size_t>(v)];
    for (const auto& pr : graph.pairs)
      if (((mask >> pr.a) & 1) == ((mask >> pr.b) & 1))
        score += params.beta[kind_index(pr.kind)];
    if (score <= m) {
      acc += std::exp(score - m);
    } else {
      acc = acc * std::exp(m - score) + 1.0;
      m = score;
    }
  }
  return m + std::log(acc);
}

}  // namespace

FactorGraphInstance build_factor_graph(
    const std::string& question_id, const std::vector<std::string>& candidate_ids,
    const std::vector<features::LocalFeatureVector>& psi,
    const features::RelationMap& relations) {
  if (candidate_ids.empty())
    throw NoCandidatesError("question " + question_id + " has an empty candidate pool");
  if (psi.size() != candidate_ids.size())
    throw DimensionMismatchError("candidate pool and feature pool sizes differ");
  FactorGraphInstance graph;
  graph.question_id = question_id;
  graph.expert_ids = candidate_ids;
  graph.psi = psi;
  std::unordered_map<std::string, int> index_of;
  for (std::size_t i = 0; i < candidate_ids.size(); ++i) {
    if (!index_of.emplace(candidate_ids[i], static_cast<int>(i)).second)
      throw DuplicateIdError("candidate " + candidate_ids[i] + " appears twice in the pool");
  }
  for (const auto& [pair, kinds] : relations) {
    const auto a = index_of.find(pair.first);
    const auto b = index_of.find(pair.second);
    if (a == index_of.end() || b == index_of.end()) continue;  // outside the pool
    int lo = a->second, hi = b->second;
    if (lo > hi) std::swap(lo, hi);
    for (const auto kind : kinds)
      graph.pairs.push_back({lo, hi, kind});
  }
  graph.var_pairs.resize(candidate_ids.size());
  for (std::size_t p = 0; p < graph.pairs.size(); ++p) {
    graph.var_pairs[static_cast<std::size_t>(graph.pairs[p].a)].push_back(static_cast<int>(p));
    graph.var_pairs[static_cast<std::size_t>(graph.pairs[p].b)].push_back(static_cast<int>(p));
  }
  return graph;
}

BpResult sum_product_marginals(const FactorGraphInstance& graph, const Params& params,
                               const BpConfig& config) {
  Engine engine(graph, params, config);
  return engine.run(config);
}

LogZResult log_partition(const FactorGraphInstance& graph, const Params& params,
                         const BpConfig& config) {
  if (graph.variable_count() <= kExactPartitionLimit)
    return {enumerate_log_partition(graph, params), true};
  Engine engine(graph, params, config);
  engine.run(config);
  return {engine.bethe(), false};
}

StatsVector sufficient_stats(const FactorGraphInstance& graph,
                             const std::vector<int>& labels) {
  check_labels(graph, labels);
  StatsVector phi{};
  for (int v = 0; v < graph.variable_count(); ++v) {
    if (labels[static_cast<std::size_t>(v)] != 1) continue;
    for (int c = 0; c < features::kLocalDim; ++c)
      phi[c] += graph.psi[static_cast<std::size_t>(v)][c];
  }
  for (const auto& pr : graph.pairs)
    if (labels[static_cast<std::size_t>(pr.a)] == labels[static_cast<std::size_t>(pr.b)])
      phi[features::kLocalDim + kind_index(pr.kind)] += 1.0;
  return phi;
}

double log_likelihood(const FactorGraphInstance& graph, const Params& params,
                      const std::vector<int>& labels, const BpConfig& config) {
  const StatsVector phi = sufficient_stats(graph, labels);
  const StatsVector theta = to_stats_vector(params);
  double dot = 0.0;
  for (int c = 0; c < features::kParamDim; ++c) dot += theta[c] * phi[c];
  return dot - log_partition(graph, params, config).value;
}

StatsVector gradient(const FactorGraphInstance& graph, const Params& params,
                     const std::vector<int>& labels, const BpConfig& config) {
  const StatsVector observed = sufficient_stats(graph, labels);
  const BpResult bp = sum_product_marginals(graph, params, config);
  StatsVector expected{};
  for (int v = 0; v < graph.variable_count(); ++v)
    for (int c = 0; c < features::kLocalDim; ++c)
      expected[c] += bp.marginal_p1[static_cast<std::size_t>(v)] *
                     graph.psi[static_cast<std::size_t>(v)][c];
  for (std::size_t p = 0; p < graph.pairs.size(); ++p)
    expected[features::kLocalDim + kind_index(graph.pairs[p].kind)] += bp.pair_agree[p];
  StatsVector grad{};
  for (int c = 0; c < features::kParamDim; ++c) grad[c] = observed[c] - expected[c];
  return grad;
}

TrainResult train(const std::vector<TrainingInstance>& data, const TrainConfig& config) {
  if (data.empty()) throw EmptyDatasetError("no labeled questions to train on");
  for (const auto& instance : data) check_labels(instance.graph, instance.labels);

  StatsVector theta{};
  Params params;
  TrainResult result;
  std::vector<StatsVector> grads(data.size());
  std::vector<double> lls(data.size());

  for (int iter = 0;; ++iter) {
    parallel_for(data.size(), config.workers, [&](std::size_t q) {
      BpConfig bp = config.bp;
      bp.seed = derive_seed(config.seed, q);
      grads[q] = gradient(data[q].graph, params, data[q].labels, bp);
      lls[q] = log_likelihood(data[q].graph, params, data[q].labels, bp);
    });
    double ll = 0.0;
    StatsVector g{};
    for (std::size_t q = 0; q < data.size(); ++q) {
      ll += lls[q];
      for (int c = 0; c < features::kParamDim; ++c) g[c] += grads[q][c];
    }
    if (!config.sum_gradients)
      for (double& x : g) x /= static_cast<double>(data.size());
    if (config.l2 > 0.0)
      for (int c = 0; c < features::kParamDim; ++c) g[c] -= config.l2 * theta[c];
    if (config.freeze_beta)
      for (int c = features::kLocalDim; c < features::kParamDim; ++c) g[c] = 0.0;

    bool finite = std::isfinite(ll);
    for (double x : g) finite = finite && std::isfinite(x);
    if (!finite)
      throw DivergedError("log-likelihood became non-finite; lower the learning rate");

    result.likelihood_trace.push_back(ll);
    double gnorm = 0.0;
    for (double x : g) gnorm = std::max(gnorm, std::abs(x));
    result.gradient_norm = gnorm;
    if (gnorm < config.gradient_tolerance) {
      result.converged = true;
      break;
    }
    if (iter >= config.max_iterations) break;
    for (int c = 0; c < features::kParamDim; ++c)
      theta[c] += config.learning_rate * g[c];
    params = from_stats_vector(theta);
    result.iterations = iter + 1;
  }
  result.params = params;
  return result;
}

MapResult max_sum_map(const FactorGraphInstance& graph, const Params& params,
                      const BpConfig& config) {
  Engine engine(graph, params, config);
  const int V = engine.V, P = engine.P;
  MapResult result;
  result.labels.assign(static_cast<std::size_t>(V), 0);

  // Exact pass over acyclic components: rooted max-sum with traceback.
  // Deterministic roots (lowest variable index) keep tie resolution stable.
  engine.build_schedule(false);
  std::vector<std::array<double, 2>> score(static_cast<std::size_t>(V));
  std::vector<std::array<double, 2>> fac_msg(static_cast<std::size_t>(P));
  std::vector<std::array<int, 2>> fac_choice(static_cast<std::size_t>(P));
  auto in_tree_comp = [&](int node) {
    return engine.comp_loopy[static_cast<std::size_t>(
               engine.comp_of_node[static_cast<std::size_t>(node)])] == 0;
  };
  for (std::size_t i = engine.order.size(); i-- > 0;) {
    const int node = engine.order[i];
    if (!in_tree_comp(node)) continue;
    if (node < V) {
      auto& s = score[static_cast<std::size_t>(node)];
      s = {0.0, engine.lu1[static_cast<std::size_t>(node)]};
      for (int pid : graph.var_pairs[static_cast<std::size_t>(node)]) {
        const int pe = engine.parent_edge[static_cast<std::size_t>(V + pid)];
        if (pe < 0 || engine.edge_var(pe) != node) continue;  // not a child factor
        s[0] += fac_msg[static_cast<std::size_t>(pid)][0];
        s[1] += fac_msg[static_cast<std::size_t>(pid)][1];
      }
    } else {
      const int pid = node - V;
      const int pe = engine.parent_edge[static_cast<std::size_t>(node)];
      if (pe < 0) continue;  // unreachable: factors always have a parent
      const int child = engine.edge_var(pe ^ 1);
      const double b = engine.lb[static_cast<std::size_t>(pid)];
      const auto& sc = score[static_cast<std::size_t>(child)];
      for (int yp = 0; yp < 2; ++yp) {
        const double v0 = (yp == 0 ? b : 0.0) + sc[0];
        const double v1 = (yp == 1 ? b : 0.0) + sc[1];
        const int pick = v0 >= v1 ? 0 : 1;  // exact tie -> y=0
        fac_msg[static_cast<std::size_t>(pid)][static_cast<std::size_t>(yp)] =
            pick == 0 ? v0 : v1;
        fac_choice[static_cast<std::size_t>(pid)][static_cast<std::size_t>(yp)] = pick;
      }
    }
  }
  for (std::size_t i = 0; i < engine.order.size(); ++i) {
    const int node = engine.order[i];
    if (!in_tree_comp(node)) continue;
    if (node < V) {
      if (engine.parent_edge[static_cast<std::size_t>(node)] < 0) {
        const auto& s = score[static_cast<std::size_t>(node)];
        result.labels[static_cast<std::size_t>(node)] = s[1] > s[0] ? 1 : 0;
      }
    } else {
      const int pid = node - V;
      const int pe = engine.parent_edge[static_cast<std::size_t>(node)];
      const int parent = engine.edge_var(pe);
      const int child = engine.edge_var(pe ^ 1);
      result.labels[static_cast<std::size_t>(child)] =
          fac_choice[static_cast<std::size_t>(pid)][static_cast<std::size_t>(
              result.labels[static_cast<std::size_t>(parent)])];
    }
  }

  if (!engine.any_loopy) return result;

  // Damped max-sum sweeps for the cyclic components, then per-variable argmax.
  std::vector<std::array<double, 2>> mt_fac(static_cast<std::size_t>(engine.E), {0.0, 0.0});
  std::vector<std::array<double, 2>> mt_var(static_cast<std::size_t>(engine.E), {0.0, 0.0});
  auto send_max = [&](int e, bool from_var) {
    std::array<double, 2> updated;
    if (from_var) {
      const int v = engine.edge_var(e);
      updated = {0.0, engine.lu1[static_cast<std::size_t>(v)]};
      for (int pid : graph.var_pairs[static_cast<std::size_t>(v)]) {
        const int ee = engine.incident_edge(pid, v);
        if (ee == e) continue;
        updated[0] += mt_var[static_cast<std::size_t>(ee)][0];
        updated[1] += mt_var[static_cast<std::size_t>(ee)][1];
      }
    } else {
      const double b = engine.lb[static_cast<std::size_t>(e / 2)];
      const auto& m = mt_fac[static_cast<std::size_t>(e ^ 1)];
      updated = {std::max(m[0] + b, m[1]), std::max(m[0], m[1] + b)};
    }
    const double shift = std::max(updated[0], updated[1]);
    updated[0] -= shift;
    updated[1] -= shift;
    auto& slot = from_var ? mt_fac[static_cast<std::size_t>(e)] : mt_var[static_cast<std::size_t>(e)];
    if (engine.edge_damped(e))
      for (int y = 0; y < 2; ++y)
        updated[static_cast<std::size_t>(y)] =
            engine.damping * slot[static_cast<std::size_t>(y)] +
            (1.0 - engine.damping) * updated[static_cast<std::size_t>(y)];
    const double change = std::max(std::abs(updated[0] - slot[0]),
                                   std::abs(updated[1] - slot[1]));
    slot = updated;
    return change;
  };
  result.converged = false;
  for (int s = 0; s < config.max_sweeps; ++s) {
    engine.build_schedule(true);
    double residual = 0.0;
    for (std::size_t i = engine.order.size(); i-- > 0;) {
      const int node = engine.order[i];
      const int e = engine.parent_edge[static_cast<std::size_t>(node)];
      if (e >= 0) residual = std::max(residual, send_max(e, node < V));
    }
    for (std::size_t i = 0; i < engine.order.size(); ++i) {
      const int node = engine.order[i];
      const int e = engine.parent_edge[static_cast<std::size_t>(node)];
      if (e >= 0) residual = std::max(residual, send_max(e, node >= V));
    }
    for (int e = 0; e < engine.E; ++e) {
      if (engine.edge_in_tree[static_cast<std::size_t>(e)]) continue;
      residual = std::max(residual, send_max(e, true));
      residual = std::max(residual, send_max(e, false));
    }
    result.residual = residual;
    if (residual < config.tolerance) {
      result.converged = true;
      break;
    }
  }
  for (int v = 0; v < V; ++v) {
    if (in_tree_comp(v)) continue;
    double b0 = 0.0, b1 = engine.lu1[static_cast<std::size_t>(v)];
    for (int pid : graph.var_pairs[static_cast<std::size_t>(v)]) {
      const int e = engine.incident_edge(pid, v);
      b0 += mt_var[static_cast<std::size_t>(e)][0];
      b1 += mt_var[static_cast<std::size_t>(e)][1];
    }
    result.labels[static_cast<std::size_t>(v)] = b1 > b0 ? 1 : 0;
  }
  return result;
}

std::vector<RankedCandidate> rank_candidates(const FactorGraphInstance& graph,
                                             const Params& params,
                                             const BpConfig& config,
                                             ScoreSource source) {
  const int V = graph.variable_count();
  std::vector<double> scores(static_cast<std::size_t>(V));
  switch (source) {
    case ScoreSource::marginal: {
      const BpResult bp = sum_product_marginals(graph, params, config);
      scores = bp.marginal_p1;
      break;
    }
    case ScoreSource::local: {
      for (int v = 0; v < V; ++v) {
        double dot = 0.0;
        for (int c = 0; c < features::kLocalDim; ++c)
          dot += params.alpha[c] * graph.psi[static_cast<std::size_t>(v)][c];
        scores[static_cast<std::size_t>(v)] = softmax2(0.0, dot)[1];
      }
      break;
    }
    case ScoreSource::max_marginal: {
      // Max-sum beliefs normalized as if they were log-probabilities; exact
      // max-marginal ratios on acyclic components.
      Engine engine(graph, params, config);
      std::vector<std::array<double, 2>> mt_fac(static_cast<std::size_t>(engine.E), {0.0, 0.0});
      std::vector<std::array<double, 2>> mt_var(static_cast<std::size_t>(engine.E), {0.0, 0.0});
      for (int s = 0; s < config.max_sweeps; ++s) {
        engine.build_schedule(true);
        double residual = 0.0;
        auto send_max = [&](int e, bool from_var) {
          std::array<double, 2> updated;
          if (from_var) {
            const int v = engine.edge_var(e);
            updated = {0.0, engine.lu1[static_cast<std::size_t>(v)]};
            for (int pid : graph.var_pairs[static_cast<std::size_t>(v)]) {
              const int ee = engine.incident_edge(pid, v);
              if (ee == e) continue;
              updated[0] += mt_var[static_cast<std::size_t>(ee)][0];
              updated[1] += mt_var[static_cast<std::size_t>(ee)][1];
            }
          } else {
            const double b = engine.lb[static_cast<std::size_t>(e / 2)];
            const auto& m = mt_fac[static_cast<std::size_t>(e ^ 1)];
            updated = {std::max(m[0] + b, m[1]), std::max(m[0], m[1] + b)};
          }
          const double shift = std::max(updated[0], updated[1]);
          updated[0] -= shift;
          updated[1] -= shift;
          auto& slot =
              from_var ? mt_fac[static_cast<std::size_t>(e)] : mt_var[static_cast<std::size_t>(e)];
          if (engine.edge_damped(e))
            for (int y = 0; y < 2; ++y)
              updated[static_cast<std::size_t>(y)] =
                  engine.damping * slot[static_cast<std::size_t>(y)] +
                  (1.0 - engine.damping) * updated[static_cast<std::size_t>(y)];
          const double change = std::max(std::abs(updated[0] - slot[0]),
                                         std::abs(updated[1] - slot[1]));
          slot = updated;
          return change;
        };
        for (std::size_t i = engine.order.size(); i-- > 0;) {
          const int node = engine.order[i];
          const int e = engine.parent_edge[static_cast<std::size_t>(node)];
          if (e >= 0) residual = std::max(residual, send_max(e, node < engine.V));
        }
        for (std::size_t i = 0; i < engine.order.size(); ++i) {
          const int node = engine.order[i];
          const int e = engine.parent_edge[static_cast<std::size_t>(node)];
          if (e >= 0) residual = std::max(residual, send_max(e, node >= engine.V));
        }
        for (int e = 0; e < engine.E; ++e) {
          if (engine.edge_in_tree[static_cast<std::size_t>(e)]) continue;
          residual = std::max(residual, send_max(e, true));
          residual = std::max(residual, send_max(e, false));
        }
        if (residual < config.tolerance) break;
      }
      for (int v = 0; v < V; ++v) {
        double b0 = 0.0, b1 = engine.lu1[static_cast<std::size_t>(v)];
        for (int pid : graph.var_pairs[static_cast<std::size_t>(v)]) {
          const int e = engine.incident_edge(pid, v);
          b0 += mt_var[static_cast<std::size_t>(e)][0];
          b1 += mt_var[static_cast<std::size_t>(e)][1];
        }
        scores[static_cast<std::size_t>(v)] = softmax2(b0, b1)[1];
      }
      break;
    }
  }
  std::vector<RankedCandidate> ranked(static_cast<std::size_t>(V));
  for (int v = 0; v < V; ++v)
    ranked[static_cast<std::size_t>(v)] = {graph.expert_ids[static_cast<std::size_t>(v)],
                                           scores[static_cast<std::size_t>(v)]};
  std::sort(ranked.begin(), ranked.end(), [](const RankedCandidate& a, const RankedCandidate& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.expert_id < b.expert_id;
  });
  return ranked;
}

std::string model_json(const Params& params, const ModelMetadata& metadata) {
  json doc;
  doc["model"] = "rankfg";
  doc["feature_names"]["local"] = features::kLocalFeatureNames;
  doc["feature_names"]["correlation"] = features::kCorrelationFeatureNames;
  doc["alpha"] = params.alpha;
  doc["beta"] = params.beta;
  doc["training"]["seed"] = metadata.seed;
  doc["training"]["iterations"] = metadata.iterations;
  doc["training"]["final_log_likelihood"] = metadata.final_log_likelihood;
  doc["training"]["converged"] = metadata.converged;
  doc["training"]["learning_rate"] = metadata.learning_rate;
  return doc.dump(2) + "\n";
}

void save_model(const Params& params, const ModelMetadata& metadata,
                const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << model_json(params, metadata);
}

LoadedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  LoadedModel model;
  try {
    if (doc.at("model").get<std::string>() != "rankfg")
      throw FormatError(path.string() + ": not a rankfg model file");
    const auto alpha = doc.at("alpha").get<std::vector<double>>();
    const auto beta = doc.at("beta").get<std::vector<double>>();
    if (alpha.size() != features::kLocalDim || beta.size() != features::kCorrDim)
      throw FormatError(path.string() + ": parameter vector sizes do not match");
    std::copy(alpha.begin(), alpha.end(), model.params.alpha.begin());
    std::copy(beta.begin(), beta.end(), model.params.beta.begin());
    const auto& training = doc.at("training");
    model.metadata.seed = training.at("seed").get<uint64_t>();
    model.metadata.iterations = training.at("iterations").get<int>();
    model.metadata.final_log_likelihood = training.at("final_log_likelihood").get<double>();
    model.metadata.converged = training.at("converged").get<bool>();
    model.metadata.learning_rate = training.at("learning_rate").get<double>();
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return model;
}

}  // namespace expertmatch::rankfg
