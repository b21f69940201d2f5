#pragma once

#include <array>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "expertmatch/core.hpp"
#include "expertmatch/embedding.hpp"
#include "expertmatch/errors.hpp"
#include "expertmatch/retrieval.hpp"

namespace expertmatch::features {

inline constexpr int kLocalDim = 8;
inline constexpr int kCorrDim = 3;
inline constexpr int kParamDim = kLocalDim + kCorrDim;

// Column order of LocalFeatureVector. The first four are z-scored over the
// candidate pool; qtoe_distance and keyword_jaccard are raw; lm_score is
// min-max normalized within the pool; academia is a 0/1 flag.
extern const std::array<const char*, kLocalDim> kLocalFeatureNames;
// Column order of CorrelationFeatureVector, one per relation kind.
extern const std::array<const char*, kCorrDim> kCorrelationFeatureNames;

using LocalFeatureVector = std::array<double, kLocalDim>;
using CorrelationFeatureVector = std::array<double, kCorrDim>;

// |A∩B| / |A∪B|; both empty -> 0.
double jaccard(const std::set<std::string>& a, const std::set<std::string>& b);

// Document frequencies over the dataset's document collection, for tf-idf.
struct CollectionStats {
  int document_count = 0;
  std::unordered_map<std::string, int> document_frequency;
};

CollectionStats collection_stats(const core::Dataset& dataset);

// Top-k tokens of `tokens` by tf-idf (ties broken lexicographically), merged
// with the author-provided keywords. Empty text with author keywords is a
// plain passthrough; empty text without any is an error.
std::set<std::string> extract_keywords(const std::vector<std::string>& tokens,
                                       const std::set<std::string>& author_keywords,
                                       int k, const CollectionStats& stats);

// psi(q, v, y): the pool-normalized vector for y=1, all zeros for y=0, so
// alpha reads directly as log-odds weights for accepting.
LocalFeatureVector local_features(const LocalFeatureVector& raw, int y);

// phi(y_i, y_j): entry l is 1 iff relation l holds between the pair and the
// two labels agree.
CorrelationFeatureVector correlation_features(const std::set<core::RelationKind>& kinds,
                                              int y_i, int y_j);

// Relation kinds per unordered expert pair (keys ordered a < b).
using RelationMap =
    std::map<std::pair<std::string, std::string>, std::set<core::RelationKind>>;
RelationMap relation_map(const std::vector<core::RelationEdge>& edges);

struct FeatureConfig {
  enum class QtoeMode { exact, relaxed };
  QtoeMode qtoe_mode = QtoeMode::exact;
  bool use_lm_feature = true;  // off -> lm column pinned to 0
  int keyword_k = 5;           // tf-idf terms taken from question text
  // off -> curated interest keywords only; on -> union with top terms of the
  // expert's own documents
  bool derive_interests_from_documents = false;
  int derived_interest_k = 10;
};

// Raw per-pair scores, before any pool normalization. What the ranking
// baselines consume.
struct RawScores {
  double qtoe = 0.0;     // distance: smaller is closer
  double jaccard = 0.0;  // similarity: larger is closer
  double lm = 0.0;       // query log-probability: larger is closer
};

// Binds a dataset, its retrieval index and an embedding table, and turns
// (question, candidate pool) into feature vectors. Const methods are
// thread-safe; everything mutable is precomputed in the constructor.
class FeatureExtractor {
 public:
  FeatureExtractor(const core::Dataset& dataset,
                   const retrieval::CollectionIndex& index,
                   const embedding::EmbeddingTable& table,
                   FeatureConfig config = {});

  // Raw (y=1) vectors for the whole pool, aligned with candidate_ids. The
  // statistic columns are z-scored and the lm column min-max normalized
  // across exactly this pool.
  std::vector<LocalFeatureVector> pool_features(
      const core::Question& question,
      const std::vector<std::string>& candidate_ids) const;

  RawScores raw_scores(const core::Question& question,
                       const std::string& expert_id) const;

  // Batch variants for one question against many candidates; question-side
  // work (nBOW, keywords) happens once.
  std::vector<double> qtoe_scores(const core::Question& question,
                                  const std::vector<std::string>& candidate_ids) const;
  std::vector<double> jaccard_scores(const core::Question& question,
                                     const std::vector<std::string>& candidate_ids) const;
  std::vector<double> lm_scores(const core::Question& question,
                                const std::vector<std::string>& candidate_ids) const;

  std::set<std::string> question_keywords(const core::Question& question) const;
  std::set<std::string> expert_interests(const core::Expert& expert) const;

  const FeatureConfig& config() const { return config_; }

 private:
  const embedding::NbowVector& expert_nbow(int doc_index) const;
  embedding::NbowVector question_nbow(const core::Question& question) const;
  double qtoe_distance(const embedding::NbowVector& q,
                       const embedding::NbowVector& v) const;

  const core::Dataset& dataset_;
  const retrieval::CollectionIndex& index_;
  const embedding::EmbeddingTable& table_;
  FeatureConfig config_;
  CollectionStats stats_;
  // per index slot; empty optional when the pseudo-document shares no word
  // with the embedding vocabulary (turns into EmptyAfterFilter at use)
  std::vector<std::optional<embedding::NbowVector>> expert_nbow_;
};

struct FeatureRow {
  std::string question_id;
  std::string expert_id;
  int y = 0;
  LocalFeatureVector psi{};
};

// Header line plus one row per entry; floats full-precision.
void write_feature_csv(std::ostream& out, const std::vector<FeatureRow>& rows);

}  // namespace expertmatch::features
