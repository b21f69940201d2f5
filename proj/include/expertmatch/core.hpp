#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "expertmatch/errors.hpp"

namespace expertmatch::core {

enum class Organization { academia, industry, unknown };
enum class RelationKind { same_nationality, same_affiliation, friendship };
enum class ResponseLabel { agree, decline };

std::string to_string(Organization org);
std::string to_string(RelationKind kind);
std::string to_string(ResponseLabel label);

struct Expert {
  std::string id;
  std::string name;
  std::optional<std::string> nationality;
  std::optional<std::string> affiliation;
  Organization organization = Organization::unknown;
  long long h_index = 0;
  long long publication_count = 0;
  long long citation_count = 0;
  long long career_length = 0;  // years
  std::set<std::string> interest_keywords;
  std::vector<std::string> document_ids;

  bool operator==(const Expert&) const = default;
};

struct Question {
  std::string id;
  std::string text;
  std::set<std::string> author_keywords;
  std::vector<std::string> tokens;  // derived from text by normalize_tokens

  bool operator==(const Question&) const = default;
};

struct Document {
  std::string id;
  std::vector<std::string> tokens;

  bool operator==(const Document&) const = default;
};

// Unordered pair; stored with expert_a < expert_b.
struct RelationEdge {
  std::string expert_a;
  std::string expert_b;
  RelationKind kind = RelationKind::friendship;

  bool operator==(const RelationEdge&) const = default;
  bool operator<(const RelationEdge& o) const {
    return std::tie(expert_a, expert_b, kind) <
           std::tie(o.expert_a, o.expert_b, o.kind);
  }
};

struct ResponseRecord {
  std::string question_id;
  std::string expert_id;
  ResponseLabel label = ResponseLabel::decline;

  bool operator==(const ResponseRecord&) const = default;
};

// Immutable after load; safe for concurrent readers.
struct Dataset {
  std::vector<Expert> experts;
  std::vector<Question> questions;
  std::vector<Document> documents;
  std::vector<RelationEdge> friendship_edges;  // explicit friendship only
  std::vector<ResponseRecord> responses;

  bool operator==(const Dataset&) const = default;

  const Expert* find_expert(std::string_view id) const;
  const Question* find_question(std::string_view id) const;
  const Document* find_document(std::string_view id) const;
  // Responses for one question, in file order.
  std::vector<const ResponseRecord*> responses_for(std::string_view question_id) const;

  void rebuild_lookup();  // called by load_dataset / after manual edits

 private:
  std::unordered_map<std::string, std::size_t> expert_by_id_;
  std::unordered_map<std::string, std::size_t> question_by_id_;
  std::unordered_map<std::string, std::size_t> document_by_id_;
  std::unordered_map<std::string, std::vector<std::size_t>> responses_by_question_;
};

// Lowercases ASCII, keeps letters/digits (multi-byte UTF-8 sequences pass
// through untouched), splits on whitespace, punctuation and hyphens.
// Idempotent on its own output joined by spaces.
std::vector<std::string> normalize_tokens(std::string_view text);

// Loads the five JSONL files (experts, questions, documents, edges,
// responses) from `dir` and verifies referential integrity.
Dataset load_dataset(const std::filesystem::path& dir);

// Canonical serialization; load_dataset(save_dataset(d)) == d.
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);

// same_nationality / same_affiliation pairs by normalized exact match on
// non-missing attributes, plus the explicit friendship edges, deduplicated.
std::vector<RelationEdge> derive_relations(const Dataset& dataset);

// Question-level split: floor(ratio*Q + 0.5) train questions, responses
// travel with their question. Deterministic in `seed`.
std::pair<Dataset, Dataset> split_dataset(const Dataset& dataset,
                                          double train_ratio, uint64_t seed);

}  // namespace expertmatch::core
