#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "expertmatch/core.hpp"
#include "expertmatch/errors.hpp"
#include "expertmatch/features.hpp"

namespace expertmatch::rankfg {

// Above this many variables the partition function switches from exact
// enumeration to the Bethe approximation.
inline constexpr int kExactPartitionLimit = 20;

struct Params {
  std::array<double, features::kLocalDim> alpha{};
  std::array<double, features::kCorrDim> beta{};
};

// theta = alpha ++ beta; same layout as sufficient statistics and gradients.
using StatsVector = std::array<double, features::kParamDim>;

StatsVector to_stats_vector(const Params& params);
Params from_stats_vector(const StatsVector& theta);

// One question's candidate pool as a factor graph: a binary variable and a
// local factor exp(alpha . psi(q,v,y)) per candidate, plus one pairwise
// factor exp(beta_l . [y_i = y_j]) per intra-pool relation edge per kind.
struct FactorGraphInstance {
  struct PairFactor {
    int a = 0;  // variable indices, a < b
    int b = 0;
    core::RelationKind kind = core::RelationKind::friendship;
  };

  std::string question_id;
  std::vector<std::string> expert_ids;
  std::vector<features::LocalFeatureVector> psi;  // y=1 local features
  std::vector<PairFactor> pairs;
  std::vector<std::vector<int>> var_pairs;  // variable -> incident pair ids

  int variable_count() const { return static_cast<int>(expert_ids.size()); }
  int local_factor_count() const { return variable_count(); }
  int pair_factor_count() const { return static_cast<int>(pairs.size()); }
};

FactorGraphInstance build_factor_graph(
    const std::string& question_id, const std::vector<std::string>& candidate_ids,
    const std::vector<features::LocalFeatureVector>& psi,
    const features::RelationMap& relations);

// Message passing knobs. The seed drives the per-sweep random BFS root.
struct BpConfig {
  double tolerance = 1e-10;  // max message change for convergence
  int max_sweeps = 100;
  double damping = 0.5;  // applied on cyclic components only
  uint64_t seed = 1;
};

struct BpResult {
  std::vector<double> marginal_p1;  // P(y_i = 1) per variable
  std::vector<double> pair_agree;   // P(y_a = y_b) per pairwise factor
  bool converged = false;
  double residual = 0.0;
  int sweeps = 0;
  bool loopy = false;  // any component with a cycle
};

// Sum-product with a random-root BFS-tree schedule: messages flow leaves to
// root, root to leaves, then across the remaining cycle-closing edges, until
// the largest message change drops under the tolerance. Exact on acyclic
// components; damped on cyclic ones. Non-convergence is reported in the
// result, never thrown.
BpResult sum_product_marginals(const FactorGraphInstance& graph, const Params& params,
                               const BpConfig& config);

struct LogZResult {
  double value = 0.0;
  bool exact = false;  // enumeration vs Bethe approximation
};

LogZResult log_partition(const FactorGraphInstance& graph, const Params& params,
                         const BpConfig& config);

// Phi(labels): summed local features for y=1 variables followed by per-kind
// counts of label-agreeing related pairs.
StatsVector sufficient_stats(const FactorGraphInstance& graph,
                             const std::vector<int>& labels);

// log P(labels | graph; params) = theta . Phi - log Z.
double log_likelihood(const FactorGraphInstance& graph, const Params& params,
                      const std::vector<int>& labels, const BpConfig& config);

// Phi(observed) - E[Phi], expectations from sum-product beliefs (exact on
// acyclic graphs).
StatsVector gradient(const FactorGraphInstance& graph, const Params& params,
                     const std::vector<int>& labels, const BpConfig& config);

struct TrainingInstance {
  FactorGraphInstance graph;
  std::vector<int> labels;  // 0/1 per variable
};

struct TrainConfig {
  double learning_rate = 0.01;
  int max_iterations = 500;
  double gradient_tolerance = 1e-6;  // on the max-norm of the gradient
  // true: step on the summed per-question gradient; false (default): step on
  // the per-question average, which keeps one learning rate usable across
  // training-set sizes
  bool sum_gradients = false;
  double l2 = 0.0;  // optional ridge penalty on theta, off by default
  bool freeze_beta = false;  // hold correlation weights at zero
  BpConfig bp;
  uint64_t seed = 1;
  int workers = 1;
};

struct TrainResult {
  Params params;
  // total log-likelihood at the start of each iteration, plus the final value
  std::vector<double> likelihood_trace;
  int iterations = 0;
  bool converged = false;
  double gradient_norm = 0.0;
};

// Batch gradient ascent from theta = 0. Deterministic for a fixed config,
// including across worker counts.
TrainResult train(const std::vector<TrainingInstance>& data, const TrainConfig& config);

struct MapResult {
  std::vector<int> labels;
  bool converged = true;
  double residual = 0.0;
};

// Most likely joint labeling. Acyclic components are solved exactly by
// max-sum with traceback; cyclic ones run damped max-sum and take per-variable
// argmax. Exact ties resolve toward y=0.
MapResult max_sum_map(const FactorGraphInstance& graph, const Params& params,
                      const BpConfig& config);

enum class ScoreSource { marginal, max_marginal, local };

struct RankedCandidate {
  std::string expert_id;
  double score = 0.0;
};

// Candidates by descending acceptance score (ties by id). The default score
// is the sum-product marginal P(y=1).
std::vector<RankedCandidate> rank_candidates(const FactorGraphInstance& graph,
                                             const Params& params,
                                             const BpConfig& config,
                                             ScoreSource source = ScoreSource::marginal);

struct ModelMetadata {
  uint64_t seed = 0;
  int iterations = 0;
  double final_log_likelihood = 0.0;
  bool converged = false;
  double learning_rate = 0.0;
};

std::string model_json(const Params& params, const ModelMetadata& metadata);

void save_model(const Params& params, const ModelMetadata& metadata,
                const std::filesystem::path& path);

struct LoadedModel {
  Params params;
  ModelMetadata metadata;
};

LoadedModel load_model(const std::filesystem::path& path);

}  // namespace expertmatch::rankfg
