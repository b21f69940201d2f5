#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "expertmatch/core.hpp"

namespace expertmatch::retrieval {

// Out-of-collection query words score this instead of zero, so one unseen
// word cannot annihilate every expert's score identically.
inline constexpr double kOovFloor = 1e-10;

// One pseudo-document per expert (concatenation of the expert's documents)
// plus collection-level counts. Immutable after build.
struct CollectionIndex {
  double lambda = 0.0;  // Dirichlet smoothing weight
  std::vector<std::string> expert_ids;
  std::vector<std::unordered_map<std::string, int64_t>> doc_term_counts;
  std::vector<int64_t> doc_lengths;
  std::unordered_map<std::string, int64_t> collection_counts;
  int64_t collection_length = 0;

  // -1 when the expert is not indexed.
  int doc_index_of(std::string_view expert_id) const;

 private:
  friend CollectionIndex build_index(const core::Dataset&, double);
  friend CollectionIndex load_index(const std::filesystem::path&);
  std::unordered_map<std::string, int> index_by_expert_;
};

struct ScoredExpert {
  std::string expert_id;
  double log_score = 0.0;
};

struct CandidateList {
  std::string question_id;
  std::vector<ScoredExpert> ranked;  // log-score descending, id ascending on ties
};

// lambda < 0 selects the default: the average pseudo-document length.
CollectionIndex build_index(const core::Dataset& dataset, double lambda = -1.0);

// Mixture of the document MLE and the collection distribution:
//   (N_d/(N_d+lambda)) * N^w_d/N_d + (1 - N_d/(N_d+lambda)) * N^w_D/N_D
double word_prob(const CollectionIndex& index, std::string_view word, int doc);

// sum over query tokens (with multiplicity) of log word_prob
double query_logprob(const CollectionIndex& index,
                     const std::vector<std::string>& tokens, int doc);

CandidateList generate_candidates(const CollectionIndex& index,
                                  const core::Question& question, int k);

// Private binary cache, rebuildable from the dataset.
void save_index(const CollectionIndex& index, const std::filesystem::path& path);
CollectionIndex load_index(const std::filesystem::path& path);

}  // namespace expertmatch::retrieval
