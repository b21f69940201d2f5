#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "expertmatch/errors.hpp"

namespace expertmatch::embedding {

struct SkipgramConfig {
  enum class Mode { full_softmax, negative_sampling };
  int dimension = 50;          // m
  int window = 5;              // c
  int epochs = 5;
  double learning_rate = 0.05;
  Mode mode = Mode::full_softmax;
  int negative_samples = 5;    // only in negative_sampling mode
  uint64_t seed = 1;
};

// Word vectors. `input_vectors` (v_w) are the embeddings handed to the
// transport module; `output_vectors` (v'_w) exist only on freshly trained
// tables and are empty after load_vectors.
struct EmbeddingTable {
  int dimension = 0;
  std::vector<std::string> words;
  std::unordered_map<std::string, int> vocab;
  std::vector<std::vector<double>> input_vectors;
  std::vector<std::vector<double>> output_vectors;

  std::optional<int> index_of(std::string_view word) const {
    auto it = vocab.find(std::string(word));
    if (it == vocab.end()) return std::nullopt;
    return it->second;
  }
};

struct SkipgramResult {
  EmbeddingTable table;
  // average log-likelihood per (center, context) pair, evaluated on the full
  // corpus after each epoch
  std::vector<double> epoch_objective;
};

// Maximizes the average log p(context|center) over all in-window pairs by
// SGD. Deterministic given config.seed. Full softmax requires vocab <= 20000.
SkipgramResult train_skipgram(const std::vector<std::vector<std::string>>& corpus,
                              const SkipgramConfig& config);

// p(.|input_index) under the full softmax; sums to 1.
std::vector<double> softmax_distribution(const EmbeddingTable& table,
                                         int input_index);

// Full-corpus value of the skip-gram objective for a given table (full
// softmax). Used for objective traces and by gradient checks.
double skipgram_objective(const EmbeddingTable& table,
                          const std::vector<std::vector<std::string>>& corpus,
                          int window);

// Batch gradient of skipgram_objective with respect to every input and output
// vector component, same shapes as the table's vectors.
struct SkipgramGradient {
  std::vector<std::vector<double>> input;
  std::vector<std::vector<double>> output;
};
SkipgramGradient skipgram_batch_gradient(
    const EmbeddingTable& table,
    const std::vector<std::vector<std::string>>& corpus, int window);

// Sparse normalized bag-of-words over the table's vocabulary; weights sum
// to 1. Indices ascending.
struct NbowVector {
  std::vector<std::pair<int, double>> weights;
};

NbowVector nbow(const std::vector<std::string>& tokens, const EmbeddingTable& table);

// Text format: "<vocab_count> <dimension>" header, then one "<word> <f1> ...
// <fm>" line per word; decimal round-trip exact.
void save_vectors(const EmbeddingTable& table, const std::filesystem::path& path);
EmbeddingTable load_vectors(const std::filesystem::path& path);

}  // namespace expertmatch::embedding
