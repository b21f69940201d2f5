#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "expertmatch/core.hpp"
#include "expertmatch/errors.hpp"
#include "expertmatch/features.hpp"
#include "expertmatch/retrieval.hpp"
#include "expertmatch/transport.hpp"

namespace core = expertmatch::core;
namespace features = expertmatch::features;
namespace retrieval = expertmatch::retrieval;
namespace embedding = expertmatch::embedding;

namespace {

// Four experts with distinct statistics, two topical documents and one
// question, plus fixed 2-d embeddings for every token in play.
struct Fixture {
  core::Dataset ds;
  embedding::EmbeddingTable table;
  retrieval::CollectionIndex index;

  Fixture() {
    auto expert = [&](const std::string& id, core::Organization org, int h, int pubs,
                      int cites, int career, std::set<std::string> interests,
                      std::vector<std::string> docs) {
      core::Expert e;
      e.id = id;
      e.organization = org;
      e.h_index = h;
      e.publication_count = pubs;
      e.citation_count = cites;
      e.career_length = career;
      e.interest_keywords = std::move(interests);
      e.document_ids = std::move(docs);
      ds.experts.push_back(std::move(e));
    };
    auto document = [&](const std::string& id, const std::string& text) {
      core::Document d;
      d.id = id;
      d.tokens = core::normalize_tokens(text);
      ds.documents.push_back(std::move(d));
    };
    expert("e1", core::Organization::academia, 10, 20, 100, 10,
           {"graphs", "ranking"}, {"d1"});
    expert("e2", core::Organization::industry, 2, 4, 10, 2, {"sampling"}, {"d2"});
    expert("e3", core::Organization::unknown, 6, 12, 60, 6, {}, {"d1"});
    expert("e4", core::Organization::academia, 4, 8, 30, 4, {"graphs"}, {"d2"});
    document("d1", "graphs ranking graphs experts");
    document("d2", "sampling surveys estimation");

    core::Question q;
    q.id = "q1";
    q.text = "ranking experts graphs";
    q.author_keywords = {"ranking"};
    q.tokens = core::normalize_tokens(q.text);
    ds.questions.push_back(std::move(q));
    ds.rebuild_lookup();

    table.dimension = 2;
    int next = 0;
    auto add_word = [&](const std::string& w, double x, double y) {
      table.vocab[w] = next++;
      table.words.push_back(w);
      table.input_vectors.push_back({x, y});
    };
    add_word("graphs", 0.0, 0.0);
    add_word("ranking", 1.0, 0.0);
    add_word("experts", 0.0, 1.0);
    add_word("sampling", 5.0, 5.0);
    add_word("surveys", 6.0, 5.0);
    add_word("estimation", 5.0, 6.0);

    index = retrieval::build_index(ds);
  }

  const core::Question& question() const { return ds.questions[0]; }
};

}  // namespace

TEST_CASE("jaccard handles the usual cases") {
  CHECK(features::jaccard({"a", "b"}, {"b", "c"}) == doctest::Approx(1.0 / 3.0));
  CHECK(features::jaccard({"a"}, {"a"}) == 1.0);
  CHECK(features::jaccard({"a"}, {"b"}) == 0.0);
  CHECK(features::jaccard({}, {"b"}) == 0.0);
  CHECK(features::jaccard({}, {}) == 0.0);  // both empty: defined as zero
}

TEST_CASE("keyword extraction ranks by tf-idf with lexicographic ties") {
  features::CollectionStats stats;
  stats.document_count = 3;
  stats.document_frequency = {{"apple", 1}, {"banana", 2}, {"cherry", 1}, {"durian", 1}};

  // apple and cherry tie on tf-idf and both beat banana (common word)
  const std::vector<std::string> tokens = {"apple", "banana", "banana", "cherry"};
  CHECK(features::extract_keywords(tokens, {}, 2, stats) ==
        std::set<std::string>{"apple", "cherry"});
  CHECK(features::extract_keywords(tokens, {}, 3, stats) ==
        std::set<std::string>{"apple", "banana", "cherry"});
  // author keywords always pass through
  CHECK(features::extract_keywords(tokens, {"zeta"}, 1, stats) ==
        std::set<std::string>{"apple", "zeta"});
  // no text, only author keywords: plain passthrough
  CHECK(features::extract_keywords({}, {"zeta"}, 5, stats) ==
        std::set<std::string>{"zeta"});
  // k = 0 keeps author keywords only
  CHECK(features::extract_keywords(tokens, {"zeta"}, 0, stats) ==
        std::set<std::string>{"zeta"});
  CHECK_THROWS_AS(features::extract_keywords({}, {}, 3, stats),
                  expertmatch::EmptyTextError);
}

TEST_CASE("collection stats count documents containing each term") {
  Fixture f;
  const auto stats = features::collection_stats(f.ds);
  CHECK(stats.document_count == 2);
  CHECK(stats.document_frequency.at("graphs") == 1);
  CHECK(stats.document_frequency.at("sampling") == 1);
  CHECK(stats.document_frequency.count("absent") == 0);
}

TEST_CASE("local features vanish for the decline label") {
  features::LocalFeatureVector raw = {1, 2, 3, 4, 5, 6, 7, 8};
  CHECK(features::local_features(raw, 1) == raw);
  CHECK(features::local_features(raw, 0) == features::LocalFeatureVector{});
}

TEST_CASE("correlation features fire only on agreeing labels") {
  const std::set<core::RelationKind> kinds = {core::RelationKind::same_nationality,
                                              core::RelationKind::friendship};
  CHECK(features::correlation_features(kinds, 1, 1) ==
        features::CorrelationFeatureVector{1.0, 0.0, 1.0});
  CHECK(features::correlation_features(kinds, 0, 0) ==
        features::CorrelationFeatureVector{1.0, 0.0, 1.0});
  CHECK(features::correlation_features(kinds, 1, 0) ==
        features::CorrelationFeatureVector{});
  CHECK(features::correlation_features({}, 1, 1) ==
        features::CorrelationFeatureVector{});
}

TEST_CASE("relation map groups kinds per expert pair") {
  std::vector<core::RelationEdge> edges = {
      {"a", "b", core::RelationKind::friendship},
      {"a", "b", core::RelationKind::same_nationality},
      {"b", "c", core::RelationKind::same_affiliation},
  };
  const auto map = features::relation_map(edges);
  CHECK(map.size() == 2);
  CHECK(map.at({"a", "b"}).size() == 2);
  CHECK(map.at({"b", "c"}) ==
        std::set<core::RelationKind>{core::RelationKind::same_affiliation});
}

TEST_CASE("statistic columns are z-scored over the candidate pool") {
  Fixture f;
  features::FeatureExtractor extractor(f.ds, f.index, f.table);
  const std::vector<std::string> pool = {"e1", "e2", "e3", "e4"};
  const auto psi = extractor.pool_features(f.question(), pool);
  REQUIRE(psi.size() == 4);

  // columns 0..3 are z-scores: mean 0, population variance 1
  for (int col = 0; col < 4; ++col) {
    double mean = 0.0, var = 0.0;
    for (const auto& row : psi) mean += row[col];
    mean /= 4.0;
    for (const auto& row : psi) var += (row[col] - mean) * (row[col] - mean);
    var /= 4.0;
    CHECK(std::abs(mean) < 1e-12);
    CHECK(var == doctest::Approx(1.0).epsilon(1e-9));
  }
  // h-index orders e1 > e3 > e4 > e2 and z-scoring is monotone
  CHECK(psi[0][0] > psi[2][0]);
  CHECK(psi[2][0] > psi[3][0]);
  CHECK(psi[3][0] > psi[1][0]);
}

TEST_CASE("distance and overlap columns carry the raw pair scores") {
  Fixture f;
  features::FeatureExtractor extractor(f.ds, f.index, f.table);
  const std::vector<std::string> pool = {"e1", "e2", "e3", "e4"};
  const auto psi = extractor.pool_features(f.question(), pool);

  for (std::size_t i = 0; i < pool.size(); ++i) {
    const auto raw = extractor.raw_scores(f.question(), pool[i]);
    CHECK(psi[i][4] == doctest::Approx(raw.qtoe).epsilon(1e-12));
    CHECK(psi[i][5] == doctest::Approx(raw.jaccard).epsilon(1e-12));
  }
  // e1's document sits on the question's support; e2's is far away
  CHECK(psi[0][4] < psi[1][4]);
  // question keywords {experts, graphs, ranking} vs interests
  CHECK(psi[0][5] > 0.0);   // e1 shares graphs + ranking
  CHECK(psi[1][5] == 0.0);  // e2 shares nothing
}

TEST_CASE("retrieval score column is min-max normalized into [0,1]") {
  Fixture f;
  features::FeatureExtractor extractor(f.ds, f.index, f.table);
  const std::vector<std::string> pool = {"e1", "e2", "e3", "e4"};
  const auto psi = extractor.pool_features(f.question(), pool);

  double lo = 1e9, hi = -1e9;
  for (const auto& row : psi) {
    CHECK(row[6] >= 0.0);
    CHECK(row[6] <= 1.0);
    lo = std::min(lo, row[6]);
    hi = std::max(hi, row[6]);
  }
  CHECK(lo == 0.0);
  CHECK(hi == 1.0);
  // e1 and e3 share the topical document, so their scores tie at the top
  CHECK(psi[0][6] == 1.0);
  CHECK(psi[2][6] == 1.0);

  // e1/e3 tie exactly, so with only those two the pool has zero spread and
  // the column collapses to 0
  const auto tied = extractor.pool_features(f.question(), {"e1", "e3"});
  CHECK(tied[0][6] == 0.0);
  CHECK(tied[1][6] == 0.0);
}

TEST_CASE("the retrieval column can be switched off") {
  Fixture f;
  features::FeatureConfig cfg;
  cfg.use_lm_feature = false;
  features::FeatureExtractor extractor(f.ds, f.index, f.table, cfg);
  const auto psi = extractor.pool_features(f.question(), {"e1", "e2", "e3"});
  for (const auto& row : psi) CHECK(row[6] == 0.0);
}

TEST_CASE("academia column is an indicator") {
  Fixture f;
  features::FeatureExtractor extractor(f.ds, f.index, f.table);
  const auto psi = extractor.pool_features(f.question(), {"e1", "e2", "e3", "e4"});
  CHECK(psi[0][7] == 1.0);  // academia
  CHECK(psi[1][7] == 0.0);  // industry
  CHECK(psi[2][7] == 0.0);  // unknown
  CHECK(psi[3][7] == 1.0);  // academia
}

TEST_CASE("relaxed mode lower-bounds the exact distance column") {
  Fixture f;
  features::FeatureConfig exact_cfg, relaxed_cfg;
  relaxed_cfg.qtoe_mode = features::FeatureConfig::QtoeMode::relaxed;
  features::FeatureExtractor exact(f.ds, f.index, f.table, exact_cfg);
  features::FeatureExtractor relaxed(f.ds, f.index, f.table, relaxed_cfg);
  const std::vector<std::string> pool = {"e1", "e2", "e3", "e4"};
  const auto pe = exact.pool_features(f.question(), pool);
  const auto pr = relaxed.pool_features(f.question(), pool);
  for (std::size_t i = 0; i < pool.size(); ++i)
    CHECK(pr[i][4] <= pe[i][4] + 1e-10);
}

TEST_CASE("derived interests add document terms to the curated ones") {
  Fixture f;
  features::FeatureConfig cfg;
  cfg.derive_interests_from_documents = true;
  cfg.derived_interest_k = 2;
  features::FeatureExtractor extractor(f.ds, f.index, f.table, cfg);

  const auto curated_only =
      features::FeatureExtractor(f.ds, f.index, f.table).expert_interests(f.ds.experts[2]);
  CHECK(curated_only.empty());  // e3 curates nothing

  const auto derived = extractor.expert_interests(f.ds.experts[2]);
  CHECK_FALSE(derived.empty());  // but their document supplies terms
  for (const auto& term : derived) CHECK(f.ds.find_document("d1")->tokens.end() !=
                                         std::find(f.ds.find_document("d1")->tokens.begin(),
                                                   f.ds.find_document("d1")->tokens.end(),
                                                   term));
}

TEST_CASE("question keywords merge extracted terms with author keywords") {
  Fixture f;
  features::FeatureExtractor extractor(f.ds, f.index, f.table);
  const auto kw = extractor.question_keywords(f.question());
  CHECK(kw.count("ranking") == 1);  // author keyword
  CHECK(kw.count("graphs") == 1);   // extracted from the text
}

TEST_CASE("batch scores agree with the single-pair path") {
  Fixture f;
  features::FeatureExtractor extractor(f.ds, f.index, f.table);
  const std::vector<std::string> pool = {"e4", "e2", "e1"};
  const auto qtoe = extractor.qtoe_scores(f.question(), pool);
  const auto jac = extractor.jaccard_scores(f.question(), pool);
  const auto lm = extractor.lm_scores(f.question(), pool);
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const auto raw = extractor.raw_scores(f.question(), pool[i]);
    CHECK(qtoe[i] == doctest::Approx(raw.qtoe).epsilon(1e-12));
    CHECK(jac[i] == doctest::Approx(raw.jaccard).epsilon(1e-12));
    CHECK(lm[i] == doctest::Approx(raw.lm).epsilon(1e-12));
  }
}

TEST_CASE("unknown pool members are rejected") {
  Fixture f;
  features::FeatureExtractor extractor(f.ds, f.index, f.table);
  CHECK_THROWS_AS(extractor.pool_features(f.question(), {"e1", "ghost"}),
                  expertmatch::Error);
}
