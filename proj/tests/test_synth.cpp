#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <map>
#include <random>
#include <set>
#include <vector>

#include "expertmatch/core.hpp"
#include "expertmatch/errors.hpp"
#include "expertmatch/features.hpp"
#include "expertmatch/synth.hpp"
#include "oracles.hpp"

namespace core = expertmatch::core;
namespace features = expertmatch::features;
namespace rankfg = expertmatch::rankfg;
namespace synth = expertmatch::synth;

namespace {

synth::SynthConfig small_config(uint64_t seed) {
  synth::SynthConfig cfg;
  cfg.questions = 15;
  cfg.candidates_per_question = 5;
  cfg.num_experts = 25;
  cfg.vocabulary = 24;
  cfg.topics = 3;
  cfg.dimension = 5;
  cfg.planted.alpha = {0.8, -0.6, 0.7, -0.5, -1.2, 1.0, 0.6, 0.5};
  cfg.planted.beta = {0.8, 0.6, 1.0};
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("generation is deterministic in the seed") {
  const auto a = synth::synth_generate(small_config(5));
  const auto b = synth::synth_generate(small_config(5));
  CHECK(a.dataset == b.dataset);
  CHECK(a.table.input_vectors == b.table.input_vectors);

  const auto c = synth::synth_generate(small_config(6));
  CHECK_FALSE(a.dataset.responses == c.dataset.responses);
}

TEST_CASE("generated datasets have the configured shape") {
  const auto cfg = small_config(11);
  const auto result = synth::synth_generate(cfg);
  const auto& ds = result.dataset;

  CHECK(static_cast<int>(ds.experts.size()) == cfg.num_experts);
  CHECK(static_cast<int>(ds.questions.size()) == cfg.questions);
  CHECK(static_cast<int>(result.table.words.size()) == cfg.vocabulary);
  CHECK(result.table.dimension == cfg.dimension);
  CHECK(static_cast<int>(ds.responses.size()) ==
        cfg.questions * cfg.candidates_per_question);

  // per question: one response per pool member, pool members distinct
  for (const auto& q : ds.questions) {
    const auto rs = ds.responses_for(q.id);
    CHECK(static_cast<int>(rs.size()) == cfg.candidates_per_question);
    std::set<std::string> seen;
    for (const auto* r : rs) CHECK(seen.insert(r->expert_id).second);
  }
  CHECK(result.planted.alpha == cfg.planted.alpha);
  CHECK(result.planted.beta == cfg.planted.beta);
}

TEST_CASE("generated data passes the real loader's validation") {
  const auto result = synth::synth_generate(small_config(21));
  const auto dir = std::filesystem::temp_directory_path() / "em_synth_roundtrip";
  std::filesystem::remove_all(dir);
  core::save_dataset(result.dataset, dir);
  const auto reloaded = core::load_dataset(dir);
  std::filesystem::remove_all(dir);
  CHECK(reloaded == result.dataset);
}

TEST_CASE("every expert has documents and every word an embedding") {
  const auto result = synth::synth_generate(small_config(31));
  for (const auto& e : result.dataset.experts) {
    CHECK_FALSE(e.document_ids.empty());
    CHECK_FALSE(e.interest_keywords.empty());
  }
  for (const auto& d : result.dataset.documents)
    for (const auto& tok : d.tokens)
      CHECK(result.table.index_of(tok).has_value());
  for (const auto& q : result.dataset.questions)
    CHECK_FALSE(q.tokens.empty());
}

TEST_CASE("exact joint sampling matches enumerated probabilities") {
  // fixed 3-variable graph with one correlation edge; compare empirical
  // configuration frequencies against the enumerated joint
  std::vector<features::LocalFeatureVector> psi(3);
  std::mt19937_64 init(7);
  for (auto& row : psi)
    for (double& x : row) x = oracle::uniform(init, -1.0, 1.0);
  features::RelationMap relations;
  relations[{"a", "b"}] = {core::RelationKind::friendship};
  const auto g = rankfg::build_factor_graph("q", {"a", "b", "c"}, psi, relations);

  rankfg::Params params;
  params.alpha = {0.9, -0.7, 0.4, 0.0, -0.5, 0.3, 0.0, 0.2};
  params.beta = {0.0, 0.0, 1.1};

  const auto reference = oracle::enumerate_distribution(g, params);
  std::mt19937_64 rng(12345);
  const int draws = 40000;
  std::map<uint32_t, int> histogram;
  for (int t = 0; t < draws; ++t) {
    const auto labels = synth::sample_labels(g, params, rng);
    uint32_t mask = 0;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i]) mask |= 1u << i;
    ++histogram[mask];
  }

  double total_variation = 0.0;
  for (uint32_t mask = 0; mask < 8; ++mask) {
    const double expected =
        std::exp(oracle::labeling_score(g, params, mask) - reference.log_z);
    const double observed =
        static_cast<double>(histogram[mask]) / static_cast<double>(draws);
    total_variation += 0.5 * std::abs(expected - observed);
  }
  // 40k draws over 8 cells: TV distance should sit well under 0.01
  CHECK(total_variation < 0.01);
}

TEST_CASE("feature noise perturbs labels but not the stored dataset") {
  auto clean_cfg = small_config(77);
  auto noisy_cfg = clean_cfg;
  noisy_cfg.feature_noise = 2.0;  // large so label flips are near-certain

  const auto clean = synth::synth_generate(clean_cfg);
  const auto noisy = synth::synth_generate(noisy_cfg);

  CHECK(clean.dataset.experts == noisy.dataset.experts);
  CHECK(clean.dataset.questions == noisy.dataset.questions);
  CHECK(clean.dataset.documents == noisy.dataset.documents);
  CHECK(clean.dataset.friendship_edges == noisy.dataset.friendship_edges);
  CHECK(clean.table.input_vectors == noisy.table.input_vectors);

  int label_differences = 0;
  REQUIRE(clean.dataset.responses.size() == noisy.dataset.responses.size());
  for (std::size_t i = 0; i < clean.dataset.responses.size(); ++i) {
    CHECK(clean.dataset.responses[i].question_id ==
          noisy.dataset.responses[i].question_id);
    CHECK(clean.dataset.responses[i].expert_id == noisy.dataset.responses[i].expert_id);
    label_differences +=
        clean.dataset.responses[i].label != noisy.dataset.responses[i].label;
  }
  CHECK(label_differences > 0);
}

TEST_CASE("label rates respond to the planted weights") {
  // strongly positive local weights should produce mostly agreements,
  // strongly negative ones mostly declines
  auto agree_cfg = small_config(13);
  agree_cfg.planted.alpha = {0, 0, 0, 0, 0, 0, 0, 3.0};  // academia bonus
  agree_cfg.planted.beta = {0, 0, 0};
  agree_cfg.academia_rate = 1.0;  // everyone gets the bonus
  const auto agreeable = synth::synth_generate(agree_cfg);

  auto decline_cfg = agree_cfg;
  decline_cfg.planted.alpha = {0, 0, 0, 0, 0, 0, 0, -3.0};
  const auto declining = synth::synth_generate(decline_cfg);

  auto agree_rate = [](const core::Dataset& ds) {
    int agrees = 0;
    for (const auto& r : ds.responses)
      agrees += r.label == core::ResponseLabel::agree;
    return static_cast<double>(agrees) / static_cast<double>(ds.responses.size());
  };
  CHECK(agree_rate(agreeable.dataset) > 0.8);
  CHECK(agree_rate(declining.dataset) < 0.2);
}

TEST_CASE("configuration is validated") {
  auto cfg = small_config(1);
  cfg.candidates_per_question = 16;  // enumeration limit is 15
  CHECK_THROWS_AS(synth::synth_generate(cfg), expertmatch::TooManyCandidatesError);

  cfg = small_config(1);
  cfg.num_experts = 10;
  cfg.candidates_per_question = 14;  // within the cap but more than the experts
  CHECK_THROWS_AS(synth::synth_generate(cfg), expertmatch::FormatError);

  cfg = small_config(1);
  cfg.questions = 0;
  CHECK_THROWS_AS(synth::synth_generate(cfg), expertmatch::FormatError);

  cfg = small_config(1);
  cfg.friendship_density = 1.5;
  CHECK_THROWS_AS(synth::synth_generate(cfg), expertmatch::InvalidRatioError);

  cfg = small_config(1);
  cfg.academia_rate = -0.1;
  CHECK_THROWS_AS(synth::synth_generate(cfg), expertmatch::InvalidRatioError);

  cfg = small_config(1);
  cfg.feature_noise = -1.0;
  CHECK_THROWS_AS(synth::synth_generate(cfg), expertmatch::FormatError);

  cfg = small_config(1);
  cfg.vocabulary = 2;  // fewer words than topics
  CHECK_THROWS_AS(synth::synth_generate(cfg), expertmatch::FormatError);
}
