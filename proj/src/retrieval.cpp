#include "expertmatch/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace expertmatch::retrieval {

int CollectionIndex::doc_index_of(std::string_view expert_id) const {
  auto it = index_by_expert_.find(std::string(expert_id));
  return it == index_by_expert_.end() ? -1 : it->second;
}

CollectionIndex build_index(const core::Dataset& dataset, double lambda) {
  CollectionIndex index;
  index.expert_ids.reserve(dataset.experts.size());
  for (const auto& expert : dataset.experts) {
    std::unordered_map<std::string, int64_t> counts;
    int64_t length = 0;
    for (const auto& doc_id : expert.document_ids) {
      const core::Document* doc = dataset.find_document(doc_id);
      if (!doc) throw DanglingReferenceError("missing document '" + doc_id + "'");
      for (const auto& tok : doc->tokens) {
        ++counts[tok];
        ++length;
      }
    }
    if (length == 0)
      throw EmptyDocumentSetError("expert '" + expert.id +
                                  "' has no document tokens");
    for (const auto& [tok, n] : counts) index.collection_counts[tok] += n;
    index.collection_length += length;
    index.index_by_expert_[expert.id] = static_cast<int>(index.expert_ids.size());
    index.expert_ids.push_back(expert.id);
    index.doc_term_counts.push_back(std::move(counts));
    index.doc_lengths.push_back(length);
  }
  if (lambda < 0.0) {
    index.lambda = static_cast<double>(index.collection_length) /
                   static_cast<double>(index.expert_ids.size());
  } else {
    index.lambda = lambda;
  }
  return index;
}

double word_prob(const CollectionIndex& index, std::string_view word, int doc) {
  auto coll_it = index.collection_counts.find(std::string(word));
  if (coll_it == index.collection_counts.end()) return kOovFloor;
  const double n_d = static_cast<double>(index.doc_lengths[doc]);
  const auto& counts = index.doc_term_counts[doc];
  auto doc_it = counts.find(std::string(word));
  const double n_w_d = doc_it == counts.end() ? 0.0 : static_cast<double>(doc_it->second);
  const double n_w_coll = static_cast<double>(coll_it->second);
  const double n_coll = static_cast<double>(index.collection_length);
  const double mix = n_d / (n_d + index.lambda);
  return mix * (n_w_d / n_d) + (1.0 - mix) * (n_w_coll / n_coll);
}

double query_logprob(const CollectionIndex& index,
                     const std::vector<std::string>& tokens, int doc) {
  if (tokens.empty()) throw EmptyQueryError("question has no tokens");
  double sum = 0.0;
  for (const auto& tok : tokens) sum += std::log(word_prob(index, tok, doc));
  return sum;
}

CandidateList generate_candidates(const CollectionIndex& index,
                                  const core::Question& question, int k) {
  CandidateList list;
  list.question_id = question.id;
  list.ranked.reserve(index.expert_ids.size());
  for (std::size_t d = 0; d < index.expert_ids.size(); ++d) {
    list.ranked.push_back({index.expert_ids[d],
                           query_logprob(index, question.tokens, static_cast<int>(d))});
  }
  std::sort(list.ranked.begin(), list.ranked.end(),
            [](const ScoredExpert& a, const ScoredExpert& b) {
              if (a.log_score != b.log_score) return a.log_score > b.log_score;
              return a.expert_id < b.expert_id;
            });
  if (k >= 1 && static_cast<std::size_t>(k) < list.ranked.size())
    list.ranked.resize(static_cast<std::size_t>(k));
  return list;
}

namespace {

void write_u64(std::ofstream& out, uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

void write_str(std::ofstream& out, const std::string& s) {
  write_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

uint64_t read_u64(std::ifstream& in) {
  uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw FormatError("truncated index file");
  return v;
}

std::string read_str(std::ifstream& in) {
  std::string s(read_u64(in), '\0');
  in.read(s.data(), static_cast<std::streamsize>(s.size()));
  if (!in) throw FormatError("truncated index file");
  return s;
}

}  // namespace

void save_index(const CollectionIndex& index, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  write_u64(out, 0x30584449584d45ULL);  // "EMXIDX0"
  out.write(reinterpret_cast<const char*>(&index.lambda), sizeof(double));
  write_u64(out, index.expert_ids.size());
  for (std::size_t d = 0; d < index.expert_ids.size(); ++d) {
    write_str(out, index.expert_ids[d]);
    write_u64(out, static_cast<uint64_t>(index.doc_lengths[d]));
    write_u64(out, index.doc_term_counts[d].size());
    std::vector<std::pair<std::string, int64_t>> items(
        index.doc_term_counts[d].begin(), index.doc_term_counts[d].end());
    std::sort(items.begin(), items.end());
    for (const auto& [tok, n] : items) {
      write_str(out, tok);
      write_u64(out, static_cast<uint64_t>(n));
    }
  }
}

CollectionIndex load_index(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  if (read_u64(in) != 0x30584449584d45ULL) throw FormatError("bad index magic");
  CollectionIndex index;
  in.read(reinterpret_cast<char*>(&index.lambda), sizeof(double));
  const uint64_t n_docs = read_u64(in);
  for (uint64_t d = 0; d < n_docs; ++d) {
    std::string id = read_str(in);
    int64_t length = static_cast<int64_t>(read_u64(in));
    uint64_t n_terms = read_u64(in);
    std::unordered_map<std::string, int64_t> counts;
    for (uint64_t t = 0; t < n_terms; ++t) {
      std::string tok = read_str(in);
      int64_t n = static_cast<int64_t>(read_u64(in));
      counts[tok] = n;
      index.collection_counts[tok] += n;
    }
    index.collection_length += length;
    index.index_by_expert_[id] = static_cast<int>(index.expert_ids.size());
    index.expert_ids.push_back(std::move(id));
    index.doc_term_counts.push_back(std::move(counts));
    index.doc_lengths.push_back(length);
  }
  return index;
}

}  // namespace expertmatch::retrieval
