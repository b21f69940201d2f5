#include "expertmatch/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "expertmatch/transport.hpp"
#include "expertmatch/util.hpp"

namespace expertmatch::features {

const std::array<const char*, kLocalDim> kLocalFeatureNames = {
    "h_index_z",   "publication_count_z", "citation_count_z", "career_length_z",
    "qtoe_distance", "keyword_jaccard",   "lm_score_norm",    "academia",
};

const std::array<const char*, kCorrDim> kCorrelationFeatureNames = {
    "same_nationality",
    "same_affiliation",
    "friendship",
};

double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
  if (a.empty() && b.empty()) return 0.0;
  std::size_t inter = 0;
  for (const auto& x : a) inter += b.count(x);
  const std::size_t uni = a.size() + b.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

CollectionStats collection_stats(const core::Dataset& dataset) {
  CollectionStats stats;
  stats.document_count = static_cast<int>(dataset.documents.size());
  for (const auto& doc : dataset.documents) {
    std::set<std::string> distinct(doc.tokens.begin(), doc.tokens.end());
    for (const auto& tok : distinct) ++stats.document_frequency[tok];
  }
  return stats;
}

namespace {

// tf-idf ranking over a term-count map; ties broken lexicographically so the
// result never depends on hash order.
std::vector<std::string> top_terms(
    const std::unordered_map<std::string, int64_t>& counts, int64_t total,
    int k, const CollectionStats& stats) {
  if (k <= 0 || total == 0) return {};
  std::vector<std::pair<double, std::string>> scored;
  scored.reserve(counts.size());
  const double n = static_cast<double>(stats.document_count);
  for (const auto& [term, count] : counts) {
    const double tf = static_cast<double>(count) / static_cast<double>(total);
    auto it = stats.document_frequency.find(term);
    const double df = it == stats.document_frequency.end() ? 0.0
                                                           : static_cast<double>(it->second);
    const double idf = std::log((n + 1.0) / (df + 1.0));
    scored.emplace_back(tf * idf, term);
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  if (static_cast<int>(scored.size()) > k) scored.resize(static_cast<std::size_t>(k));
  std::vector<std::string> terms;
  terms.reserve(scored.size());
  for (auto& [score, term] : scored) terms.push_back(std::move(term));
  return terms;
}

}  // namespace

std::set<std::string> extract_keywords(const std::vector<std::string>& tokens,
                                       const std::set<std::string>& author_keywords,
                                       int k, const CollectionStats& stats) {
  if (tokens.empty() && author_keywords.empty())
    throw EmptyTextError("no text and no author keywords to extract from");
  std::unordered_map<std::string, int64_t> counts;
  for (const auto& tok : tokens) ++counts[tok];
  std::set<std::string> keywords = author_keywords;
  for (auto& term : top_terms(counts, static_cast<int64_t>(tokens.size()), k, stats))
    keywords.insert(std::move(term));
  return keywords;
}

LocalFeatureVector local_features(const LocalFeatureVector& raw, int y) {
  return y == 1 ? raw : LocalFeatureVector{};
}

CorrelationFeatureVector correlation_features(const std::set<core::RelationKind>& kinds,
                                              int y_i, int y_j) {
  CorrelationFeatureVector phi{};
  if (y_i != y_j) return phi;
  if (kinds.count(core::RelationKind::same_nationality)) phi[0] = 1.0;
  if (kinds.count(core::RelationKind::same_affiliation)) phi[1] = 1.0;
  if (kinds.count(core::RelationKind::friendship)) phi[2] = 1.0;
  return phi;
}

RelationMap relation_map(const std::vector<core::RelationEdge>& edges) {
  RelationMap map;
  for (const auto& edge : edges)
    map[{edge.expert_a, edge.expert_b}].insert(edge.kind);
  return map;
}

FeatureExtractor::FeatureExtractor(const core::Dataset& dataset,
                                   const retrieval::CollectionIndex& index,
                                   const embedding::EmbeddingTable& table,
                                   FeatureConfig config)
    : dataset_(dataset),
      index_(index),
      table_(table),
      config_(config),
      stats_(collection_stats(dataset)) {
  expert_nbow_.resize(index_.expert_ids.size());
  for (std::size_t d = 0; d < index_.doc_term_counts.size(); ++d) {
    embedding::NbowVector v;
    int64_t total = 0;
    for (const auto& [term, count] : index_.doc_term_counts[d]) {
      if (auto idx = table_.index_of(term)) {
        v.weights.emplace_back(*idx, static_cast<double>(count));
        total += count;
      }
    }
    if (v.weights.empty()) continue;  // stays nullopt
    std::sort(v.weights.begin(), v.weights.end());
    for (auto& [idx, w] : v.weights) w /= static_cast<double>(total);
    expert_nbow_[d] = std::move(v);
  }
}

const embedding::NbowVector& FeatureExtractor::expert_nbow(int doc_index) const {
  const auto& slot = expert_nbow_[static_cast<std::size_t>(doc_index)];
  if (!slot)
    throw EmptyAfterFilterError("expert " + index_.expert_ids[static_cast<std::size_t>(doc_index)] +
                                ": no document token has an embedding");
  return *slot;
}

embedding::NbowVector FeatureExtractor::question_nbow(const core::Question& question) const {
  return embedding::nbow(question.tokens, table_);
}

double FeatureExtractor::qtoe_distance(const embedding::NbowVector& q,
                                       const embedding::NbowVector& v) const {
  if (config_.qtoe_mode == FeatureConfig::QtoeMode::relaxed)
    return transport::qtoe_relaxed(q, v, table_);
  return transport::qtoe_exact(q, v, table_).distance;
}

std::set<std::string> FeatureExtractor::question_keywords(const core::Question& question) const {
  return extract_keywords(question.tokens, question.author_keywords,
                          config_.keyword_k, stats_);
}

std::set<std::string> FeatureExtractor::expert_interests(const core::Expert& expert) const {
  std::set<std::string> interests = expert.interest_keywords;
  if (config_.derive_interests_from_documents) {
    const int d = index_.doc_index_of(expert.id);
    if (d >= 0) {
      const auto& counts = index_.doc_term_counts[static_cast<std::size_t>(d)];
      const int64_t total = index_.doc_lengths[static_cast<std::size_t>(d)];
      for (auto& term : top_terms(counts, total, config_.derived_interest_k, stats_))
        interests.insert(std::move(term));
    }
  }
  return interests;
}

RawScores FeatureExtractor::raw_scores(const core::Question& question,
                                       const std::string& expert_id) const {
  const core::Expert* expert = dataset_.find_expert(expert_id);
  if (!expert)
    throw DanglingReferenceError("unknown expert " + expert_id);
  const int d = index_.doc_index_of(expert_id);
  if (d < 0)
    throw DanglingReferenceError("expert " + expert_id + " is not indexed");
  RawScores scores;
  scores.qtoe = qtoe_distance(question_nbow(question), expert_nbow(d));
  scores.jaccard = jaccard(question_keywords(question), expert_interests(*expert));
  scores.lm = retrieval::query_logprob(index_, question.tokens, d);
  return scores;
}

namespace {

int require_doc_index(const retrieval::CollectionIndex& index, const std::string& id) {
  const int d = index.doc_index_of(id);
  if (d < 0) throw DanglingReferenceError("expert " + id + " is not indexed");
  return d;
}

}  // namespace

std::vector<double> FeatureExtractor::qtoe_scores(
    const core::Question& question,
    const std::vector<std::string>& candidate_ids) const {
  const embedding::NbowVector q = question_nbow(question);
  std::vector<double> scores(candidate_ids.size());
  for (std::size_t i = 0; i < candidate_ids.size(); ++i)
    scores[i] = qtoe_distance(q, expert_nbow(require_doc_index(index_, candidate_ids[i])));
  return scores;
}

std::vector<double> FeatureExtractor::jaccard_scores(
    const core::Question& question,
    const std::vector<std::string>& candidate_ids) const {
  const std::set<std::string> keywords = question_keywords(question);
  std::vector<double> scores(candidate_ids.size());
  for (std::size_t i = 0; i < candidate_ids.size(); ++i) {
    const core::Expert* expert = dataset_.find_expert(candidate_ids[i]);
    if (!expert) throw DanglingReferenceError("unknown expert " + candidate_ids[i]);
    scores[i] = jaccard(keywords, expert_interests(*expert));
  }
  return scores;
}

std::vector<double> FeatureExtractor::lm_scores(
    const core::Question& question,
    const std::vector<std::string>& candidate_ids) const {
  std::vector<double> scores(candidate_ids.size());
  for (std::size_t i = 0; i < candidate_ids.size(); ++i)
    scores[i] = retrieval::query_logprob(index_, question.tokens,
                                         require_doc_index(index_, candidate_ids[i]));
  return scores;
}

std::vector<LocalFeatureVector> FeatureExtractor::pool_features(
    const core::Question& question,
    const std::vector<std::string>& candidate_ids) const {
  std::vector<LocalFeatureVector> pool(candidate_ids.size());
  if (candidate_ids.empty()) return pool;

  const embedding::NbowVector q_nbow = question_nbow(question);
  const std::set<std::string> q_keywords = question_keywords(question);

  for (std::size_t i = 0; i < candidate_ids.size(); ++i) {
    const core::Expert* expert = dataset_.find_expert(candidate_ids[i]);
    if (!expert)
      throw DanglingReferenceError("unknown expert " + candidate_ids[i]);
    const int d = index_.doc_index_of(candidate_ids[i]);
    if (d < 0)
      throw DanglingReferenceError("expert " + candidate_ids[i] + " is not indexed");
    LocalFeatureVector& f = pool[i];
    f[0] = static_cast<double>(expert->h_index);
    f[1] = static_cast<double>(expert->publication_count);
    f[2] = static_cast<double>(expert->citation_count);
    f[3] = static_cast<double>(expert->career_length);
    f[4] = qtoe_distance(q_nbow, expert_nbow(d));
    f[5] = jaccard(q_keywords, expert_interests(*expert));
    f[6] = config_.use_lm_feature
               ? retrieval::query_logprob(index_, question.tokens, d)
               : 0.0;
    f[7] = expert->organization == core::Organization::academia ? 1.0 : 0.0;
  }

  const double n = static_cast<double>(pool.size());
  for (int col = 0; col < 4; ++col) {
    double mean = 0.0;
    for (const auto& f : pool) mean += f[col];
    mean /= n;
    double var = 0.0;
    for (const auto& f : pool) var += (f[col] - mean) * (f[col] - mean);
    var /= n;
    const double sd = std::sqrt(var);
    for (auto& f : pool) f[col] = sd > 0.0 ? (f[col] - mean) / sd : 0.0;
  }
  if (config_.use_lm_feature) {
    double lo = pool[0][6], hi = pool[0][6];
    for (const auto& f : pool) {
      lo = std::min(lo, f[6]);
      hi = std::max(hi, f[6]);
    }
    for (auto& f : pool) f[6] = hi > lo ? (f[6] - lo) / (hi - lo) : 0.0;
  }
  return pool;
}

void write_feature_csv(std::ostream& out, const std::vector<FeatureRow>& rows) {
  out << "question_id,expert_id,y";
  for (const char* name : kLocalFeatureNames) out << ',' << name;
  out << '\n';
  for (const auto& row : rows) {
    out << row.question_id << ',' << row.expert_id << ',' << row.y;
    for (double x : row.psi) out << ',' << format_double(x);
    out << '\n';
  }
}

}  // namespace expertmatch::features
