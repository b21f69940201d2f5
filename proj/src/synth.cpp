#include "expertmatch/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <string>

#include "expertmatch/features.hpp"
#include "expertmatch/retrieval.hpp"
#include "expertmatch/util.hpp"

namespace expertmatch::synth {

namespace {

// mt19937_64 output is pinned by the standard; these fixed mappings keep every
// draw identical across platforms (library distributions are not).
double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

double gauss(std::mt19937_64& rng) {
  double u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  if (u1 < 1e-300) u1 = 1e-300;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

long long lognormal_count(std::mt19937_64& rng, double mu, double sigma) {
  return std::llround(std::exp(mu + sigma * gauss(rng)));
}

std::string padded(const char* prefix, int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%s%04d", prefix, i);
  return buf;
}

void validate(const SynthConfig& c) {
  if (c.candidates_per_question > kMaxCandidates)
    throw TooManyCandidatesError("exact sampling enumerates 2^N configurations; "
                                 "candidates per question is capped at " +
                                 std::to_string(kMaxCandidates));
  if (c.questions < 1 || c.candidates_per_question < 1 || c.num_experts < 1 ||
      c.vocabulary < 1 || c.topics < 1 || c.dimension < 1 ||
      c.nationality_groups < 1 || c.affiliation_groups < 1)
    throw FormatError("synth counts must all be positive");
  if (c.candidates_per_question > c.num_experts)
    throw FormatError("candidate pool cannot exceed the number of experts");
  if (c.vocabulary < c.topics)
    throw FormatError("need at least one word per topic");
  if (c.friendship_density < 0.0 || c.friendship_density > 1.0 ||
      c.academia_rate < 0.0 || c.academia_rate > 1.0)
    throw InvalidRatioError("densities and rates must lie in [0,1]");
  if (c.feature_noise < 0.0)
    throw FormatError("feature noise scale cannot be negative");
}

}  // namespace

std::vector<int> sample_labels(const rankfg::FactorGraphInstance& graph,
                               const rankfg::Params& params, std::mt19937_64& rng) {
  const int n = graph.variable_count();
  if (n > kMaxCandidates)
    throw TooManyCandidatesError("cannot enumerate a pool of " + std::to_string(n));
  std::vector<double> lu1(static_cast<std::size_t>(n));
  for (int v = 0; v < n; ++v) {
    double dot = 0.0;
    for (int c = 0; c < features::kLocalDim; ++c)
      dot += params.alpha[c] * graph.psi[static_cast<std::size_t>(v)][c];
    lu1[static_cast<std::size_t>(v)] = dot;
  }
  const uint64_t total = uint64_t{1} << n;
  std::vector<double> weight(total);
  double max_score = -std::numeric_limits<double>::infinity();
  for (uint64_t mask = 0; mask < total; ++mask) {
    double score = 0.0;
    for (int v = 0; v < n; ++v)
      if (mask >> v & 1) score += lu1[static_cast<std::size_t>(v)];
    for (const auto& pr : graph.pairs)
      if (((mask >> pr.a) & 1) == ((mask >> pr.b) & 1))
        score += params.beta[pr.kind == core::RelationKind::same_nationality ? 0
                             : pr.kind == core::RelationKind::same_affiliation ? 1
                                                                               : 2];
    weight[mask] = score;
    max_score = std::max(max_score, score);
  }
  double z = 0.0;
  for (uint64_t mask = 0; mask < total; ++mask) {
    weight[mask] = std::exp(weight[mask] - max_score);
    z += weight[mask];
  }
  const double u = uniform01(rng) * z;
  double cum = 0.0;
  uint64_t picked = total - 1;
  for (uint64_t mask = 0; mask < total; ++mask) {
    cum += weight[mask];
    if (u < cum) {
      picked = mask;
      break;
    }
  }
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (int v = 0; v < n; ++v) labels[static_cast<std::size_t>(v)] = (picked >> v) & 1;
  return labels;
}

SynthResult synth_generate(const SynthConfig& config) {
  validate(config);
  SynthResult result;
  result.planted = config.planted;

  // word embeddings: per-topic cluster centers plus per-word jitter
  {
    std::mt19937_64 rng(derive_seed(config.seed, 0x656d62ULL));
    auto& table = result.table;
    table.dimension = config.dimension;
    std::vector<std::vector<double>> centers(static_cast<std::size_t>(config.topics));
    for (auto& c : centers) {
      c.resize(static_cast<std::size_t>(config.dimension));
      for (double& x : c) x = uniform(rng, -1.0, 1.0);
    }
    for (int w = 0; w < config.vocabulary; ++w) {
      table.words.push_back(padded("w", w));
      table.vocab[table.words.back()] = w;
      std::vector<double> vec = centers[static_cast<std::size_t>(w % config.topics)];
      for (double& x : vec) x += 0.15 * gauss(rng);
      table.input_vectors.push_back(std::move(vec));
    }
  }

  auto topic_words = [&](int topic) {
    std::vector<int> words;
    for (int w = topic; w < config.vocabulary; w += config.topics) words.push_back(w);
    return words;
  };
  auto draw_topic_token = [&](std::mt19937_64& rng, int topic) {
    // words of the topic four times out of five, anything otherwise
    if (uniform01(rng) < 0.8) {
      const auto words = topic_words(topic);
      return result.table.words[static_cast<std::size_t>(
          words[static_cast<std::size_t>(rng() % words.size())])];
    }
    return result.table.words[static_cast<std::size_t>(rng() % static_cast<uint64_t>(config.vocabulary))];
  };

  auto& ds = result.dataset;

  // experts, documents, attribute groups
  {
    std::mt19937_64 rng(derive_seed(config.seed, 0x657870ULL));
    int doc_counter = 0;
    for (int i = 0; i < config.num_experts; ++i) {
      core::Expert e;
      e.id = padded("e", i);
      e.name = "Expert " + std::to_string(i);
      const int topic = i % config.topics;
      e.nationality = padded("nat", static_cast<int>(rng() % static_cast<uint64_t>(config.nationality_groups)));
      e.affiliation = padded("aff", static_cast<int>(rng() % static_cast<uint64_t>(config.affiliation_groups)));
      e.organization = uniform01(rng) < config.academia_rate ? core::Organization::academia
                                                            : core::Organization::industry;
      e.h_index = std::max<long long>(0, lognormal_count(rng, 2.0, 0.8));
      e.publication_count = std::max<long long>(1, lognormal_count(rng, 3.0, 1.0));
      e.citation_count = std::max<long long>(0, lognormal_count(rng, 5.0, 1.2));
      e.career_length = std::max<long long>(1, lognormal_count(rng, 2.2, 0.6));
      const auto words = topic_words(topic);
      const int n_interests = 3 + static_cast<int>(rng() % 3);
      for (int k = 0; k < n_interests && k < static_cast<int>(words.size()); ++k)
        e.interest_keywords.insert(result.table.words[static_cast<std::size_t>(
            words[static_cast<std::size_t>((rng() + static_cast<uint64_t>(k)) % words.size())])]);
      const int n_docs = 1 + static_cast<int>(rng() % 2);
      for (int d = 0; d < n_docs; ++d) {
        core::Document doc;
        doc.id = padded("d", doc_counter++);
        const int len = 25 + static_cast<int>(rng() % 10);
        for (int t = 0; t < len; ++t) doc.tokens.push_back(draw_topic_token(rng, topic));
        e.document_ids.push_back(doc.id);
        ds.documents.push_back(std::move(doc));
      }
      ds.experts.push_back(std::move(e));
    }
  }

  // friendships: one Bernoulli draw per unordered pair, fixed pair order
  {
    std::mt19937_64 rng(derive_seed(config.seed, 0x667269ULL));
    for (int i = 0; i < config.num_experts; ++i)
      for (int j = i + 1; j < config.num_experts; ++j)
        if (uniform01(rng) < config.friendship_density)
          ds.friendship_edges.push_back({ds.experts[static_cast<std::size_t>(i)].id,
                                         ds.experts[static_cast<std::size_t>(j)].id,
                                         core::RelationKind::friendship});
  }

  // questions with topic-matched text and a uniform candidate pool
  std::vector<std::vector<std::string>> pools(static_cast<std::size_t>(config.questions));
  {
    std::mt19937_64 rng(derive_seed(config.seed, 0x717374ULL));
    for (int q = 0; q < config.questions; ++q) {
      core::Question question;
      question.id = padded("q", q);
      const int topic = q % config.topics;
      const int len = 8 + static_cast<int>(rng() % 5);
      std::vector<std::string> tokens;
      for (int t = 0; t < len; ++t) tokens.push_back(draw_topic_token(rng, topic));
      question.text = tokens[0];
      for (std::size_t t = 1; t < tokens.size(); ++t) question.text += " " + tokens[t];
      const auto words = topic_words(topic);
      question.author_keywords.insert(
          result.table.words[static_cast<std::size_t>(words[static_cast<std::size_t>(rng() % words.size())])]);
      question.author_keywords.insert(
          result.table.words[static_cast<std::size_t>(words[static_cast<std::size_t>(rng() % words.size())])]);
      question.tokens = core::normalize_tokens(question.text);
      ds.questions.push_back(std::move(question));

      // partial Fisher-Yates draw without replacement
      std::vector<int> idx(static_cast<std::size_t>(config.num_experts));
      for (int i = 0; i < config.num_experts; ++i) idx[static_cast<std::size_t>(i)] = i;
      for (int k = 0; k < config.candidates_per_question; ++k) {
        const int pick = k + static_cast<int>(rng() % static_cast<uint64_t>(config.num_experts - k));
        std::swap(idx[static_cast<std::size_t>(k)], idx[static_cast<std::size_t>(pick)]);
        pools[static_cast<std::size_t>(q)].push_back(
            ds.experts[static_cast<std::size_t>(idx[static_cast<std::size_t>(k)])].id);
      }
      std::sort(pools[static_cast<std::size_t>(q)].begin(), pools[static_cast<std::size_t>(q)].end());
    }
  }
  ds.rebuild_lookup();

  // labels: run the real feature pipeline, then draw each pool's joint
  // configuration exactly from the planted distribution
  const retrieval::CollectionIndex index = retrieval::build_index(ds);
  const features::FeatureExtractor extractor(ds, index, result.table);
  const features::RelationMap relations = features::relation_map(core::derive_relations(ds));

  std::vector<std::vector<int>> labels(static_cast<std::size_t>(config.questions));
  for (int q = 0; q < config.questions; ++q) {
    const auto& question = ds.questions[static_cast<std::size_t>(q)];
    auto psi = extractor.pool_features(question, pools[static_cast<std::size_t>(q)]);
    std::mt19937_64 rng(derive_seed(config.seed, 0x6c6162ULL + static_cast<uint64_t>(q)));
    if (config.feature_noise > 0.0)
      for (auto& f : psi)
        for (double& x : f) x += config.feature_noise * gauss(rng);
    const auto graph =
        rankfg::build_factor_graph(question.id, pools[static_cast<std::size_t>(q)], psi, relations);
    labels[static_cast<std::size_t>(q)] = sample_labels(graph, config.planted, rng);
  }

  for (int q = 0; q < config.questions; ++q)
    for (std::size_t i = 0; i < pools[static_cast<std::size_t>(q)].size(); ++i)
      ds.responses.push_back({ds.questions[static_cast<std::size_t>(q)].id,
                              pools[static_cast<std::size_t>(q)][i],
                              labels[static_cast<std::size_t>(q)][i] == 1
                                  ? core::ResponseLabel::agree
                                  : core::ResponseLabel::decline});
  ds.rebuild_lookup();
  return result;
}

}  // namespace expertmatch::synth
