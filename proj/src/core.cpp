#include "expertmatch/core.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "expertmatch/util.hpp"

namespace expertmatch::core {

using json = nlohmann::ordered_json;

std::string to_string(Organization org) {
  switch (org) {
    case Organization::academia: return "academia";
    case Organization::industry: return "industry";
    default: return "unknown";
  }
}

std::string to_string(RelationKind kind) {
  switch (kind) {
    case RelationKind::same_nationality: return "same_nationality";
    case RelationKind::same_affiliation: return "same_affiliation";
    default: return "friendship";
  }
}

std::string to_string(ResponseLabel label) {
  return label == ResponseLabel::agree ? "agree" : "decline";
}

std::vector<std::string> normalize_tokens(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (unsigned char c : text) {
    if (c >= 0x80) {  // keep multi-byte UTF-8 sequences as-is
      current.push_back(static_cast<char>(c));
    } else if (std::isalnum(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else {
      if (!current.empty()) tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

const Expert* Dataset::find_expert(std::string_view id) const {
  auto it = expert_by_id_.find(std::string(id));
  return it == expert_by_id_.end() ? nullptr : &experts[it->second];
}

const Question* Dataset::find_question(std::string_view id) const {
  auto it = question_by_id_.find(std::string(id));
  return it == question_by_id_.end() ? nullptr : &questions[it->second];
}

const Document* Dataset::find_document(std::string_view id) const {
  auto it = document_by_id_.find(std::string(id));
  return it == document_by_id_.end() ? nullptr : &documents[it->second];
}

std::vector<const ResponseRecord*> Dataset::responses_for(
    std::string_view question_id) const {
  std::vector<const ResponseRecord*> out;
  auto it = responses_by_question_.find(std::string(question_id));
  if (it == responses_by_question_.end()) return out;
  out.reserve(it->second.size());
  for (std::size_t i : it->second) out.push_back(&responses[i]);
  return out;
}

void Dataset::rebuild_lookup() {
  expert_by_id_.clear();
  question_by_id_.clear();
  document_by_id_.clear();
  responses_by_question_.clear();
  for (std::size_t i = 0; i < experts.size(); ++i) expert_by_id_[experts[i].id] = i;
  for (std::size_t i = 0; i < questions.size(); ++i) question_by_id_[questions[i].id] = i;
  for (std::size_t i = 0; i < documents.size(); ++i) document_by_id_[documents[i].id] = i;
  for (std::size_t i = 0; i < responses.size(); ++i)
    responses_by_question_[responses[i].question_id].push_back(i);
}

namespace {

std::string lower_trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  std::string out(s.substr(b, e - b));
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// Iterates non-empty lines of a JSONL file, reporting line numbers in errors.
void for_each_record(const std::filesystem::path& file,
                     const std::function<void(const json&, int)>& fn) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open " + file.string());
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(file.filename().string() + ":" + std::to_string(lineno) +
                       ": " + e.what());
    }
    if (!rec.is_object())
      throw ParseError(file.filename().string() + ":" + std::to_string(lineno) +
                       ": expected a JSON object");
    fn(rec, lineno);
  }
}

std::string require_string(const json& rec, const char* key,
                           const std::string& where) {
  if (!rec.contains(key) || !rec[key].is_string())
    throw ParseError(where + ": missing string field '" + key + "'");
  return rec[key].get<std::string>();
}

long long nonneg_int(const json& rec, const char* key, const std::string& where) {
  if (!rec.contains(key)) return 0;
  if (!rec[key].is_number_integer() || rec[key].get<long long>() < 0)
    throw ParseError(where + ": field '" + key + "' must be a non-negative integer");
  return rec[key].get<long long>();
}

std::string where_of(const std::filesystem::path& file, int lineno) {
  return file.filename().string() + ":" + std::to_string(lineno);
}

}  // namespace

Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset ds;
  const auto experts_file = dir / "experts.jsonl";
  const auto questions_file = dir / "questions.jsonl";
  const auto documents_file = dir / "documents.jsonl";
  const auto edges_file = dir / "edges.jsonl";
  const auto responses_file = dir / "responses.jsonl";

  for_each_record(experts_file, [&](const json& rec, int lineno) {
    const std::string where = where_of(experts_file, lineno);
    Expert e;
    e.id = require_string(rec, "id", where);
    if (rec.contains("name") && rec["name"].is_string())
      e.name = rec["name"].get<std::string>();
    if (rec.contains("nationality") && rec["nationality"].is_string() &&
        !rec["nationality"].get<std::string>().empty())
      e.nationality = rec["nationality"].get<std::string>();
    if (rec.contains("affiliation") && rec["affiliation"].is_string() &&
        !rec["affiliation"].get<std::string>().empty())
      e.affiliation = rec["affiliation"].get<std::string>();
    if (rec.contains("organization")) {
      const std::string org = rec["organization"].get<std::string>();
      if (org == "academia") e.organization = Organization::academia;
      else if (org == "industry") e.organization = Organization::industry;
      else if (org == "unknown") e.organization = Organization::unknown;
      else throw ParseError(where + ": unknown organization '" + org + "'");
    }
    e.h_index = nonneg_int(rec, "h_index", where);
    e.publication_count = nonneg_int(rec, "publication_count", where);
    e.citation_count = nonneg_int(rec, "citation_count", where);
    e.career_length = nonneg_int(rec, "career_length", where);
    if (rec.contains("interest_keywords"))
      for (const auto& k : rec["interest_keywords"])
        e.interest_keywords.insert(k.get<std::string>());
    if (rec.contains("document_ids"))
      for (const auto& d : rec["document_ids"])
        e.document_ids.push_back(d.get<std::string>());
    ds.experts.push_back(std::move(e));
  });

  for_each_record(questions_file, [&](const json& rec, int lineno) {
    const std::string where = where_of(questions_file, lineno);
    Question q;
    q.id = require_string(rec, "id", where);
    q.text = require_string(rec, "text", where);
    if (rec.contains("author_keywords"))
      for (const auto& k : rec["author_keywords"])
        q.author_keywords.insert(k.get<std::string>());
    q.tokens = normalize_tokens(q.text);
    ds.questions.push_back(std::move(q));
  });

  for_each_record(documents_file, [&](const json& rec, int lineno) {
    const std::string where = where_of(documents_file, lineno);
    Document d;
    d.id = require_string(rec, "id", where);
    d.tokens = normalize_tokens(require_string(rec, "text", where));
    ds.documents.push_back(std::move(d));
  });

  for_each_record(edges_file, [&](const json& rec, int lineno) {
    const std::string where = where_of(edges_file, lineno);
    RelationEdge e;
    e.expert_a = require_string(rec, "a", where);
    e.expert_b = require_string(rec, "b", where);
    const std::string kind = require_string(rec, "kind", where);
    if (kind != "friendship")
      throw ParseError(where + ": only 'friendship' edges may be supplied; '" +
                       kind + "' is derived");
    e.kind = RelationKind::friendship;
    if (e.expert_a == e.expert_b)
      throw ParseError(where + ": self edge on '" + e.expert_a + "'");
    if (e.expert_b < e.expert_a) std::swap(e.expert_a, e.expert_b);
    ds.friendship_edges.push_back(std::move(e));
  });

  for_each_record(responses_file, [&](const json& rec, int lineno) {
    const std::string where = where_of(responses_file, lineno);
    ResponseRecord r;
    r.question_id = require_string(rec, "question_id", where);
    r.expert_id = require_string(rec, "expert_id", where);
    const std::string label = require_string(rec, "label", where);
    if (label == "agree") {
      r.label = ResponseLabel::agree;
    } else if (label == "decline" || label == "unavailable" ||
               label == "no_response") {
      r.label = ResponseLabel::decline;  // non-agreement counts as decline
    } else {
      throw ParseError(where + ": unknown label '" + label + "'");
    }
    ds.responses.push_back(std::move(r));
  });

  if (ds.experts.empty() || ds.documents.empty())
    throw EmptyDatasetError("dataset needs at least one expert and one document");

  // duplicate ids
  {
    std::set<std::string> seen;
    for (const auto& e : ds.experts)
      if (!seen.insert(e.id).second) throw DuplicateIdError("expert '" + e.id + "'");
    seen.clear();
    for (const auto& q : ds.questions)
      if (!seen.insert(q.id).second) throw DuplicateIdError("question '" + q.id + "'");
    seen.clear();
    for (const auto& d : ds.documents)
      if (!seen.insert(d.id).second) throw DuplicateIdError("document '" + d.id + "'");
    std::set<std::pair<std::string, std::string>> pairs;
    for (const auto& r : ds.responses)
      if (!pairs.insert({r.question_id, r.expert_id}).second)
        throw DuplicateIdError("response (" + r.question_id + ", " + r.expert_id + ")");
  }

  // duplicate friendship edges are tolerated on input; keep one
  {
    std::set<std::pair<std::string, std::string>> seen;
    std::vector<RelationEdge> dedup;
    for (auto& e : ds.friendship_edges)
      if (seen.insert({e.expert_a, e.expert_b}).second) dedup.push_back(std::move(e));
    ds.friendship_edges = std::move(dedup);
  }

  ds.rebuild_lookup();

  // referential integrity
  for (const auto& e : ds.experts)
    for (const auto& doc_id : e.document_ids)
      if (!ds.find_document(doc_id))
        throw DanglingReferenceError("expert '" + e.id +
                                     "' references missing document '" + doc_id + "'");
  for (const auto& e : ds.friendship_edges) {
    if (!ds.find_expert(e.expert_a))
      throw DanglingReferenceError("edge references missing expert '" + e.expert_a + "'");
    if (!ds.find_expert(e.expert_b))
      throw DanglingReferenceError("edge references missing expert '" + e.expert_b + "'");
  }
  for (const auto& r : ds.responses) {
    if (!ds.find_question(r.question_id))
      throw DanglingReferenceError("response references missing question '" +
                                   r.question_id + "'");
    if (!ds.find_expert(r.expert_id))
      throw DanglingReferenceError("response references missing expert '" +
                                   r.expert_id + "'");
  }
  return ds;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw IoError(std::string("cannot write ") + name);
    return out;
  };
  {
    auto out = open("experts.jsonl");
    for (const auto& e : dataset.experts) {
      json rec;
      rec["id"] = e.id;
      rec["name"] = e.name;
      rec["nationality"] = e.nationality ? json(*e.nationality) : json();
      rec["affiliation"] = e.affiliation ? json(*e.affiliation) : json();
      rec["organization"] = to_string(e.organization);
      rec["h_index"] = e.h_index;
      rec["publication_count"] = e.publication_count;
      rec["citation_count"] = e.citation_count;
      rec["career_length"] = e.career_length;
      rec["interest_keywords"] = e.interest_keywords;
      rec["document_ids"] = e.document_ids;
      out << rec.dump() << "\n";
    }
  }
  {
    auto out = open("questions.jsonl");
    for (const auto& q : dataset.questions) {
      json rec;
      rec["id"] = q.id;
      rec["text"] = q.text;
      rec["author_keywords"] = q.author_keywords;
      out << rec.dump() << "\n";
    }
  }
  {
    auto out = open("documents.jsonl");
    for (const auto& d : dataset.documents) {
      json rec;
      rec["id"] = d.id;
      std::string text;
      for (std::size_t i = 0; i < d.tokens.size(); ++i) {
        if (i) text += ' ';
        text += d.tokens[i];
      }
      rec["text"] = text;
      out << rec.dump() << "\n";
    }
  }
  {
    auto out = open("edges.jsonl");
    for (const auto& e : dataset.friendship_edges) {
      json rec;
      rec["a"] = e.expert_a;
      rec["b"] = e.expert_b;
      rec["kind"] = "friendship";
      out << rec.dump() << "\n";
    }
  }
  {
    auto out = open("responses.jsonl");
    for (const auto& r : dataset.responses) {
      json rec;
      rec["question_id"] = r.question_id;
      rec["expert_id"] = r.expert_id;
      rec["label"] = to_string(r.label);
      out << rec.dump() << "\n";
    }
  }
}

std::vector<RelationEdge> derive_relations(const Dataset& dataset) {
  std::set<RelationEdge> edges(dataset.friendship_edges.begin(),
                               dataset.friendship_edges.end());
  const auto& xs = dataset.experts;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    for (std::size_t j = i + 1; j < xs.size(); ++j) {
      const Expert& a = xs[i];
      const Expert& b = xs[j];
      RelationEdge e;
      e.expert_a = std::min(a.id, b.id);
      e.expert_b = std::max(a.id, b.id);
      if (a.nationality && b.nationality &&
          lower_trim(*a.nationality) == lower_trim(*b.nationality)) {
        e.kind = RelationKind::same_nationality;
        edges.insert(e);
      }
      if (a.affiliation && b.affiliation &&
          lower_trim(*a.affiliation) == lower_trim(*b.affiliation)) {
        e.kind = RelationKind::same_affiliation;
        edges.insert(e);
      }
    }
  }
  return {edges.begin(), edges.end()};
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& dataset,
                                          double train_ratio, uint64_t seed) {
  if (!(train_ratio > 0.0 && train_ratio < 1.0))
    throw InvalidRatioError("train ratio must be strictly between 0 and 1");
  const std::size_t q = dataset.questions.size();
  if (q < 2) throw TooFewQuestionsError("need at least 2 questions to split");

  std::vector<std::size_t> order(q);
  for (std::size_t i = 0; i < q; ++i) order[i] = i;
  // explicit Fisher-Yates so the partition is stable across standard libraries
  std::mt19937_64 rng(seed);
  for (std::size_t i = q - 1; i > 0; --i) {
    std::size_t j = static_cast<std::size_t>(rng() % (i + 1));
    std::swap(order[i], order[j]);
  }
  const auto n_train =
      static_cast<std::size_t>(std::floor(train_ratio * static_cast<double>(q) + 0.5));

  std::vector<bool> in_train(q, false);
  for (std::size_t i = 0; i < n_train && i < q; ++i) in_train[order[i]] = true;

  Dataset train, test;
  train.experts = test.experts = dataset.experts;
  train.documents = test.documents = dataset.documents;
  train.friendship_edges = test.friendship_edges = dataset.friendship_edges;
  for (std::size_t i = 0; i < q; ++i)
    (in_train[i] ? train : test).questions.push_back(dataset.questions[i]);
  for (const auto& r : dataset.responses) {
    const Question* qp = dataset.find_question(r.question_id);
    std::size_t idx = static_cast<std::size_t>(qp - dataset.questions.data());
    (in_train[idx] ? train : test).responses.push_back(r);
  }
  train.rebuild_lookup();
  test.rebuild_lookup();
  return {std::move(train), std::move(test)};
}

}  // namespace expertmatch::core
