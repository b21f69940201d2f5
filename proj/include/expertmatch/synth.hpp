#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "expertmatch/core.hpp"
#include "expertmatch/embedding.hpp"
#include "expertmatch/errors.hpp"
#include "expertmatch/rankfg.hpp"

namespace expertmatch::synth {

// Exact enumeration sampling caps the pool size.
inline constexpr int kMaxCandidates = 15;

struct SynthConfig {
  int questions = 200;
  int candidates_per_question = 10;  // <= kMaxCandidates
  rankfg::Params planted;            // ground-truth weights driving the labels

  int num_experts = 100;
  int vocabulary = 48;  // tokens w0000..: each belongs to one topic
  int topics = 4;
  int dimension = 8;  // embedding width

  double friendship_density = 0.05;  // per expert pair
  int nationality_groups = 5;        // fewer groups = denser same_nationality
  int affiliation_groups = 8;
  double academia_rate = 0.6;

  // Gaussian jitter added to the feature vectors only while sampling labels;
  // the stored dataset stays clean, so a nonzero value decouples the labels
  // from what a trainer later recomputes.
  double feature_noise = 0.0;

  uint64_t seed = 1;
};

struct SynthResult {
  core::Dataset dataset;
  embedding::EmbeddingTable table;
  rankfg::Params planted;
};

// Topic-structured corpus, attribute groups, friendships, and per-question
// candidate pools whose agree/decline labels are drawn exactly from the
// factor-graph joint under the planted weights (inverse CDF over all 2^N
// configurations). Deterministic in config.seed.
SynthResult synth_generate(const SynthConfig& config);

// One exact joint sample; exposed so tests can compare empirical frequencies
// against enumerated probabilities.
std::vector<int> sample_labels(const rankfg::FactorGraphInstance& graph,
                               const rankfg::Params& params, std::mt19937_64& rng);

}  // namespace expertmatch::synth
