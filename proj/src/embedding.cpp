#include "expertmatch/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "expertmatch/util.hpp"

namespace expertmatch::embedding {

namespace {

constexpr int kFullSoftmaxVocabGuard = 20000;

// Frequency-descending, ties lexicographic; deterministic.
EmbeddingTable make_table(const std::vector<std::vector<std::string>>& corpus,
                          int dimension, uint64_t seed) {
  std::unordered_map<std::string, int64_t> freq;
  for (const auto& seq : corpus)
    for (const auto& tok : seq) ++freq[tok];
  if (freq.size() < 2)
    throw VocabularyTooSmallError("skip-gram needs at least 2 distinct words");

  std::vector<std::pair<std::string, int64_t>> by_freq(freq.begin(), freq.end());
  std::sort(by_freq.begin(), by_freq.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  EmbeddingTable table;
  table.dimension = dimension;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> init(-0.5 / dimension, 0.5 / dimension);
  for (const auto& [word, n] : by_freq) {
    table.vocab[word] = static_cast<int>(table.words.size());
    table.words.push_back(word);
    std::vector<double> v(dimension);
    for (double& x : v) x = init(rng);
    table.input_vectors.push_back(std::move(v));
    table.output_vectors.emplace_back(dimension, 0.0);
  }
  return table;
}

std::vector<std::vector<int>> to_ids(const std::vector<std::vector<std::string>>& corpus,
                                     const EmbeddingTable& table) {
  std::vector<std::vector<int>> out;
  out.reserve(corpus.size());
  for (const auto& seq : corpus) {
    std::vector<int> ids;
    ids.reserve(seq.size());
    for (const auto& tok : seq) ids.push_back(table.vocab.at(tok));
    out.push_back(std::move(ids));
  }
  return out;
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::vector<double> softmax_scores(const EmbeddingTable& table, int input_index) {
  const std::vector<double>& v_in = table.input_vectors[input_index];
  std::vector<double> p(table.words.size());
  double max_score = -1e300;
  for (std::size_t w = 0; w < p.size(); ++w) {
    p[w] = dot(table.output_vectors[w], v_in);
    max_score = std::max(max_score, p[w]);
  }
  double z = 0.0;
  for (double& x : p) {
    x = std::exp(x - max_score);
    z += x;
  }
  for (double& x : p) x /= z;
  return p;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// One SGD step on log p(context|center) under the full softmax.
void softmax_update(EmbeddingTable& table, int center, int context, double lr) {
  const std::vector<double> p = softmax_distribution(table, center);
  const int m = table.dimension;
  std::vector<double> grad_in(m, 0.0);
  for (std::size_t w = 0; w < table.words.size(); ++w) {
    const double coeff = (static_cast<int>(w) == context ? 1.0 : 0.0) - p[w];
    auto& v_out = table.output_vectors[w];
    const auto& v_in = table.input_vectors[center];
    for (int d = 0; d < m; ++d) {
      grad_in[d] += coeff * v_out[d];
      v_out[d] += lr * coeff * v_in[d];
    }
  }
  auto& v_in = table.input_vectors[center];
  for (int d = 0; d < m; ++d) v_in[d] += lr * grad_in[d];
}

// Negative-sampling step: one positive, k draws from the unigram^0.75 table.
void negative_update(EmbeddingTable& table, int center, int context, double lr,
                     int k, const std::vector<double>& cdf, std::mt19937_64& rng) {
  const int m = table.dimension;
  auto& v_in = table.input_vectors[center];
  std::vector<double> grad_in(m, 0.0);
  auto push = [&](int target, double label) {
    auto& v_out = table.output_vectors[target];
    const double g = label - sigmoid(dot(v_out, v_in));
    for (int d = 0; d < m; ++d) {
      grad_in[d] += g * v_out[d];
      v_out[d] += lr * g * v_in[d];
    }
  };
  push(context, 1.0);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (int neg = 0; neg < k; ++neg) {
    const double u = uni(rng);
    int target = static_cast<int>(
        std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
    if (target >= static_cast<int>(table.words.size()))
      target = static_cast<int>(table.words.size()) - 1;
    if (target == context) continue;
    push(target, 0.0);
  }
  for (int d = 0; d < m; ++d) v_in[d] += lr * grad_in[d];
}

std::vector<double> unigram_cdf(const std::vector<std::vector<int>>& corpus,
                                std::size_t vocab_size) {
  std::vector<double> weight(vocab_size, 0.0);
  for (const auto& seq : corpus)
    for (int id : seq) weight[static_cast<std::size_t>(id)] += 1.0;
  double total = 0.0;
  for (double& w : weight) {
    w = std::pow(w, 0.75);
    total += w;
  }
  std::vector<double> cdf(vocab_size);
  double acc = 0.0;
  for (std::size_t i = 0; i < vocab_size; ++i) {
    acc += weight[i] / total;
    cdf[i] = acc;
  }
  cdf.back() = 1.0;
  return cdf;
}

}  // namespace

std::vector<double> softmax_distribution(const EmbeddingTable& table,
                                         int input_index) {
  return softmax_scores(table, input_index);
}

double skipgram_objective(const EmbeddingTable& table,
                          const std::vector<std::vector<std::string>>& corpus,
                          int window) {
  const auto ids = to_ids(corpus, table);
  double total = 0.0;
  int64_t pairs = 0;
  for (const auto& seq : ids) {
    const int n = static_cast<int>(seq.size());
    for (int t = 0; t < n; ++t) {
      const std::vector<double> p = softmax_distribution(table, seq[t]);
      for (int j = -window; j <= window; ++j) {
        if (j == 0 || t + j < 0 || t + j >= n) continue;
        total += std::log(p[static_cast<std::size_t>(seq[t + j])]);
        ++pairs;
      }
    }
  }
  return pairs == 0 ? 0.0 : total / static_cast<double>(pairs);
}

SkipgramGradient skipgram_batch_gradient(
    const EmbeddingTable& table,
    const std::vector<std::vector<std::string>>& corpus, int window) {
  const auto ids = to_ids(corpus, table);
  const int m = table.dimension;
  SkipgramGradient grad;
  grad.input.assign(table.words.size(), std::vector<double>(m, 0.0));
  grad.output.assign(table.words.size(), std::vector<double>(m, 0.0));
  int64_t pairs = 0;
  for (const auto& seq : ids) {
    const int n = static_cast<int>(seq.size());
    for (int t = 0; t < n; ++t)
      for (int j = -window; j <= window; ++j)
        if (j != 0 && t + j >= 0 && t + j < n) ++pairs;
  }
  if (pairs == 0) return grad;
  const double scale = 1.0 / static_cast<double>(pairs);
  for (const auto& seq : ids) {
    const int n = static_cast<int>(seq.size());
    for (int t = 0; t < n; ++t) {
      const int center = seq[t];
      const std::vector<double> p = softmax_distribution(table, center);
      for (int j = -window; j <= window; ++j) {
        if (j == 0 || t + j < 0 || t + j >= n) continue;
        const int context = seq[t + j];
        const auto& v_in = table.input_vectors[center];
        for (std::size_t w = 0; w < table.words.size(); ++w) {
          const double coeff = (static_cast<int>(w) == context ? 1.0 : 0.0) - p[w];
          const auto& v_out = table.output_vectors[w];
          for (int d = 0; d < m; ++d) {
            grad.input[center][d] += scale * coeff * v_out[d];
            grad.output[w][d] += scale * coeff * v_in[d];
          }
        }
      }
    }
  }
  return grad;
}

SkipgramResult train_skipgram(const std::vector<std::vector<std::string>>& corpus,
                              const SkipgramConfig& config) {
  SkipgramResult result;
  result.table = make_table(corpus, config.dimension, config.seed);
  EmbeddingTable& table = result.table;
  if (config.mode == SkipgramConfig::Mode::full_softmax &&
      static_cast<int>(table.words.size()) > kFullSoftmaxVocabGuard)
    throw GuardExceededError("full softmax limited to vocabularies of 20000 words; "
                             "use negative sampling");

  const auto ids = to_ids(corpus, table);
  std::mt19937_64 rng(derive_seed(config.seed, 0x6e65676174697665ULL));
  const std::vector<double> cdf =
      config.mode == SkipgramConfig::Mode::negative_sampling
          ? unigram_cdf(ids, table.words.size())
          : std::vector<double>{};

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (const auto& seq : ids) {
      const int n = static_cast<int>(seq.size());
      for (int t = 0; t < n; ++t) {
        for (int j = -config.window; j <= config.window; ++j) {
          if (j == 0 || t + j < 0 || t + j >= n) continue;
          if (config.mode == SkipgramConfig::Mode::full_softmax) {
            softmax_update(table, seq[t], seq[t + j], config.learning_rate);
          } else {
            negative_update(table, seq[t], seq[t + j], config.learning_rate,
                            config.negative_samples, cdf, rng);
          }
        }
      }
    }
    result.epoch_objective.push_back(
        skipgram_objective(table, corpus, config.window));
  }
  return result;
}

NbowVector nbow(const std::vector<std::string>& tokens, const EmbeddingTable& table) {
  std::unordered_map<int, int64_t> counts;
  int64_t total = 0;
  for (const auto& tok : tokens) {
    if (auto idx = table.index_of(tok)) {
      ++counts[*idx];
      ++total;
    }
  }
  if (total == 0)
    throw EmptyAfterFilterError("no token has an embedding");
  NbowVector v;
  v.weights.reserve(counts.size());
  for (const auto& [idx, n] : counts)
    v.weights.emplace_back(idx, static_cast<double>(n) / static_cast<double>(total));
  std::sort(v.weights.begin(), v.weights.end());
  return v;
}

void save_vectors(const EmbeddingTable& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << table.words.size() << " " << table.dimension << "\n";
  for (std::size_t w = 0; w < table.words.size(); ++w) {
    out << table.words[w];
    for (double x : table.input_vectors[w]) out << " " << format_double(x);
    out << "\n";
  }
}

EmbeddingTable load_vectors(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError("missing vector file header");
  std::size_t count = 0;
  int dimension = 0;
  {
    std::istringstream header(line);
    if (!(header >> count >> dimension) || dimension <= 0)
      throw FormatError("bad vector file header '" + line + "'");
  }
  EmbeddingTable table;
  table.dimension = dimension;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string word;
    if (!(row >> word)) throw FormatError("bad vector line '" + line + "'");
    std::vector<double> v(static_cast<std::size_t>(dimension));
    for (int d = 0; d < dimension; ++d)
      if (!(row >> v[static_cast<std::size_t>(d)]))
        throw FormatError("vector for '" + word + "' has fewer than " +
                          std::to_string(dimension) + " components");
    double extra;
    if (row >> extra)
      throw FormatError("vector for '" + word + "' has more than " +
                        std::to_string(dimension) + " components");
    if (table.vocab.count(word))
      throw FormatError("duplicate word '" + word + "' in vector file");
    table.vocab[word] = static_cast<int>(table.words.size());
    table.words.push_back(word);
    table.input_vectors.push_back(std::move(v));
  }
  if (table.words.size() != count)
    throw FormatError("header declares " + std::to_string(count) + " words, file has " +
                      std::to_string(table.words.size()));
  return table;
}

}  // namespace expertmatch::embedding
