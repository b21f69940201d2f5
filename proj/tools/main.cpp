// Command-line front end: every subcommand is a pure function of its input
// files and flags, logs go to stderr, data goes to stdout or --out.
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "expertmatch/core.hpp"
#include "expertmatch/embedding.hpp"
#include "expertmatch/errors.hpp"
#include "expertmatch/eval.hpp"
#include "expertmatch/features.hpp"
#include "expertmatch/rankfg.hpp"
#include "expertmatch/retrieval.hpp"
#include "expertmatch/synth.hpp"
#include "expertmatch/transport.hpp"
#include "expertmatch/util.hpp"

namespace em = expertmatch;
using json = nlohmann::ordered_json;

namespace {

// bad invocations (missing required value, unknown enum name) exit 1, unlike
// data errors which exit 2
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Global {
  std::string config_path;
  uint64_t seed = 1;
  std::string out;
  bool quiet = false;
  int workers = 1;
};

void add_global(CLI::App* cmd, Global& g) {
  cmd->add_option("--config", g.config_path, "JSON config file (flat dotted keys)");
  cmd->add_option("--seed", g.seed, "base random seed");
  cmd->add_option("--out", g.out, "write data output here instead of stdout");
  cmd->add_flag("--quiet", g.quiet, "suppress progress logs on stderr");
  cmd->add_option("--workers", g.workers, "worker threads")
      ->check(CLI::PositiveNumber);
}

// Looks up "<command>.<key>" then "<key>" in the config file; explicit
// command-line flags always win.
class Settings {
 public:
  Settings(const CLI::App* cmd, std::string config_path) : cmd_(cmd) {
    if (config_path.empty()) return;
    std::ifstream in(config_path, std::ios::binary);
    if (!in) throw em::IoError("cannot read config " + config_path);
    try {
      in >> data_;
    } catch (const json::exception& e) {
      throw em::ParseError(config_path + ": " + e.what());
    }
    if (!data_.is_object())
      throw em::FormatError(config_path + ": config must be a JSON object");
  }

  template <typename T>
  void pull(const std::string& flag, T& value) const {
    const json* found = find(flag);
    if (!found) return;
    try {
      value = found->get<T>();
    } catch (const json::exception& e) {
      throw em::FormatError("config key '" + flag + "': " + e.what());
    }
  }

  // comma-separated flag value that may appear as a JSON array
  void pull_list(const std::string& flag, std::string& csv) const {
    const json* found = find(flag);
    if (!found) return;
    if (found->is_string()) {
      csv = found->get<std::string>();
      return;
    }
    if (!found->is_array())
      throw em::FormatError("config key '" + flag + "': expected string or array");
    csv.clear();
    for (const auto& item : *found) {
      if (!csv.empty()) csv += ',';
      if (item.is_string())
        csv += item.get<std::string>();
      else
        csv += item.dump();
    }
  }

 private:
  const json* find(const std::string& flag) const {
    if (cmd_->count("--" + flag) > 0) return nullptr;
    auto it = data_.find(cmd_->get_name() + "." + flag);
    if (it == data_.end()) it = data_.find(flag);
    if (it == data_.end()) return nullptr;
    return &*it;
  }

  const CLI::App* cmd_;
  json data_;
};

void log_line(const Global& g, const std::string& message) {
  if (!g.quiet) std::cerr << message << "\n";
}

void emit(const Global& g, const std::string& content) {
  if (g.out.empty()) {
    std::cout << content;
    return;
  }
  std::ofstream out(g.out, std::ios::binary);
  if (!out) throw em::IoError("cannot write " + g.out);
  out << content;
}

std::vector<std::string> split_commas(const std::string& csv) {
  std::vector<std::string> parts;
  std::string part;
  std::istringstream in(csv);
  while (std::getline(in, part, ','))
    if (!part.empty()) parts.push_back(part);
  return parts;
}

std::vector<double> parse_double_list(const std::string& csv, const std::string& flag) {
  std::vector<double> values;
  for (const auto& part : split_commas(csv)) {
    try {
      std::size_t used = 0;
      values.push_back(std::stod(part, &used));
      if (used != part.size()) throw std::invalid_argument("trailing junk");
    } catch (const std::exception&) {
      throw UsageError("--" + flag + ": '" + part + "' is not a number");
    }
  }
  return values;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw em::IoError("cannot read " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

// dataset + embeddings + the derived artifacts most commands share
struct Pipeline {
  em::core::Dataset dataset;
  em::embedding::EmbeddingTable table;
  em::retrieval::CollectionIndex index;
  em::features::RelationMap relations;
  std::unique_ptr<em::features::FeatureExtractor> extractor;
};

std::unique_ptr<Pipeline> open_pipeline(const std::string& data_dir,
                                        const std::string& vectors_path,
                                        const em::features::FeatureConfig& fcfg) {
  auto p = std::make_unique<Pipeline>();
  p->dataset = em::core::load_dataset(data_dir);
  p->table = em::embedding::load_vectors(vectors_path);
  p->index = em::retrieval::build_index(p->dataset);
  p->relations = em::features::relation_map(em::core::derive_relations(p->dataset));
  p->extractor = std::make_unique<em::features::FeatureExtractor>(p->dataset, p->index,
                                                                  p->table, fcfg);
  return p;
}

struct PoolWithLabels {
  std::vector<std::string> ids;
  std::vector<int> labels;
};

PoolWithLabels responded_pool(const em::core::Dataset& ds, const std::string& question_id) {
  std::vector<std::pair<std::string, int>> entries;
  for (const em::core::ResponseRecord* r : ds.responses_for(question_id))
    entries.emplace_back(r->expert_id,
                         r->label == em::core::ResponseLabel::agree ? 1 : 0);
  std::sort(entries.begin(), entries.end());
  PoolWithLabels pool;
  for (auto& [id, label] : entries) {
    pool.ids.push_back(std::move(id));
    pool.labels.push_back(label);
  }
  return pool;
}

em::features::FeatureConfig::QtoeMode parse_qtoe_mode(const std::string& name) {
  if (name == "exact") return em::features::FeatureConfig::QtoeMode::exact;
  if (name == "relaxed") return em::features::FeatureConfig::QtoeMode::relaxed;
  throw UsageError("--qtoe must be 'exact' or 'relaxed'");
}

em::rankfg::ScoreSource parse_score_source(const std::string& name) {
  if (name == "marginal") return em::rankfg::ScoreSource::marginal;
  if (name == "max-marginal") return em::rankfg::ScoreSource::max_marginal;
  if (name == "local") return em::rankfg::ScoreSource::local;
  throw UsageError("--score-source must be 'marginal', 'max-marginal' or 'local'");
}

std::string ranking_jsonl(const std::string& question_id,
                          const std::vector<em::rankfg::RankedCandidate>& ranked) {
  std::string out;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    json line;
    line["question_id"] = question_id;
    line["rank"] = i + 1;
    line["expert_id"] = ranked[i].expert_id;
    line["score"] = ranked[i].score;
    out += line.dump() + "\n";
  }
  return out;
}

// ---------------------------------------------------------------- commands

struct IngestOpts {
  Global g;
  std::string data;
};

void run_ingest(IngestOpts& o, const Settings& s) {
  s.pull("data", o.data);
  if (o.data.empty()) throw UsageError("ingest needs --data <dir>");
  const auto ds = em::core::load_dataset(o.data);
  json summary;
  summary["experts"] = ds.experts.size();
  summary["questions"] = ds.questions.size();
  summary["documents"] = ds.documents.size();
  summary["friendship_edges"] = ds.friendship_edges.size();
  summary["responses"] = ds.responses.size();
  summary["relations"] = em::core::derive_relations(ds).size();
  if (!o.g.out.empty()) {
    em::core::save_dataset(ds, o.g.out);
    log_line(o.g, "wrote canonical dataset to " + o.g.out);
    std::cout << summary.dump(2) << "\n";
  } else {
    std::cout << summary.dump(2) << "\n";
  }
}

struct TrainEmbeddingsOpts {
  Global g;
  std::string data;
  int dimension = 50;
  int window = 5;
  int epochs = 5;
  double learning_rate = 0.05;
  std::string mode = "softmax";
  int negative = 5;
};

void run_train_embeddings(TrainEmbeddingsOpts& o, const Settings& s) {
  s.pull("data", o.data);
  s.pull("dim", o.dimension);
  s.pull("window", o.window);
  s.pull("epochs", o.epochs);
  s.pull("learning-rate", o.learning_rate);
  s.pull("mode", o.mode);
  s.pull("negative", o.negative);
  s.pull("seed", o.g.seed);
  if (o.data.empty()) throw UsageError("train-embeddings needs --data <dir>");
  if (o.g.out.empty()) throw UsageError("train-embeddings needs --out <vectors file>");

  const auto ds = em::core::load_dataset(o.data);
  std::vector<std::vector<std::string>> corpus;
  for (const auto& doc : ds.documents) corpus.push_back(doc.tokens);
  for (const auto& q : ds.questions) corpus.push_back(q.tokens);

  em::embedding::SkipgramConfig cfg;
  cfg.dimension = o.dimension;
  cfg.window = o.window;
  cfg.epochs = o.epochs;
  cfg.learning_rate = o.learning_rate;
  cfg.negative_samples = o.negative;
  cfg.seed = o.g.seed;
  if (o.mode == "softmax") {
    cfg.mode = em::embedding::SkipgramConfig::Mode::full_softmax;
  } else if (o.mode == "negative") {
    cfg.mode = em::embedding::SkipgramConfig::Mode::negative_sampling;
  } else {
    throw UsageError("--mode must be 'softmax' or 'negative'");
  }

  const auto result = em::embedding::train_skipgram(corpus, cfg);
  for (std::size_t e = 0; e < result.epoch_objective.size(); ++e)
    log_line(o.g, "epoch " + std::to_string(e + 1) + " objective " +
                      em::format_double(result.epoch_objective[e]));
  em::embedding::save_vectors(result.table, o.g.out);
  log_line(o.g, "wrote " + std::to_string(result.table.words.size()) + " vectors to " + o.g.out);
}

struct IndexOpts {
  Global g;
  std::string data;
  double lambda = -1.0;
};

void run_index(IndexOpts& o, const Settings& s) {
  s.pull("data", o.data);
  s.pull("lambda", o.lambda);
  if (o.data.empty()) throw UsageError("index needs --data <dir>");
  if (o.g.out.empty()) throw UsageError("index needs --out <cache file>");
  const auto ds = em::core::load_dataset(o.data);
  const auto index = em::retrieval::build_index(ds, o.lambda);
  em::retrieval::save_index(index, o.g.out);
  log_line(o.g, "indexed " + std::to_string(index.expert_ids.size()) +
                    " experts, smoothing weight " + em::format_double(index.lambda));
}

struct DistanceOpts {
  Global g;
  std::string vectors;
  std::string doc_a;
  std::string doc_b;
  bool relaxed = false;
  bool exact = false;
};

void run_distance(DistanceOpts& o, const Settings& s) {
  s.pull("vectors", o.vectors);
  if (o.vectors.empty()) throw UsageError("distance needs --vectors <file>");
  if (o.doc_a.empty() || o.doc_b.empty())
    throw UsageError("distance needs --doc-a <file> and --doc-b <file>");
  const auto table = em::embedding::load_vectors(o.vectors);
  const auto tokens_a = em::core::normalize_tokens(read_text_file(o.doc_a));
  const auto tokens_b = em::core::normalize_tokens(read_text_file(o.doc_b));
  const auto nbow_a = em::embedding::nbow(tokens_a, table);
  const auto nbow_b = em::embedding::nbow(tokens_b, table);
  const double d = o.relaxed
                       ? em::transport::qtoe_relaxed(nbow_a, nbow_b, table)
                       : em::transport::qtoe_exact(nbow_a, nbow_b, table).distance;
  emit(o.g, em::format_double(d) + "\n");
}

struct TrainRankfgOpts {
  Global g;
  std::string data;
  std::string vectors;
  double eta = 0.01;
  int max_iters = 500;
  double tol = 1e-6;
  double l2 = 0.0;
  bool sum_gradients = false;
  std::string qtoe = "exact";
  bool no_lm_feature = false;
  int keyword_k = 5;
  bool derive_interests = false;
};

std::vector<em::rankfg::TrainingInstance> labeled_instances(const Pipeline& p) {
  std::vector<em::rankfg::TrainingInstance> instances;
  for (const auto& q : p.dataset.questions) {
    PoolWithLabels pool = responded_pool(p.dataset, q.id);
    if (pool.ids.empty()) continue;
    auto psi = p.extractor->pool_features(q, pool.ids);
    instances.push_back(
        {em::rankfg::build_factor_graph(q.id, pool.ids, psi, p.relations), pool.labels});
  }
  return instances;
}

void run_train_rankfg(TrainRankfgOpts& o, const Settings& s) {
  s.pull("data", o.data);
  s.pull("vectors", o.vectors);
  s.pull("eta", o.eta);
  s.pull("max-iters", o.max_iters);
  s.pull("tol", o.tol);
  s.pull("l2", o.l2);
  s.pull("sum-gradients", o.sum_gradients);
  s.pull("qtoe", o.qtoe);
  s.pull("no-lm-feature", o.no_lm_feature);
  s.pull("keyword-k", o.keyword_k);
  s.pull("derive-interests", o.derive_interests);
  s.pull("seed", o.g.seed);
  s.pull("workers", o.g.workers);
  if (o.data.empty()) throw UsageError("train-rankfg needs --data <dir>");
  if (o.vectors.empty()) throw UsageError("train-rankfg needs --vectors <file>");

  em::features::FeatureConfig fcfg;
  fcfg.qtoe_mode = parse_qtoe_mode(o.qtoe);
  fcfg.use_lm_feature = !o.no_lm_feature;
  fcfg.keyword_k = o.keyword_k;
  fcfg.derive_interests_from_documents = o.derive_interests;
  const auto p = open_pipeline(o.data, o.vectors, fcfg);
  const auto instances = labeled_instances(*p);
  log_line(o.g, "training on " + std::to_string(instances.size()) + " labeled questions");

  em::rankfg::TrainConfig tc;
  tc.learning_rate = o.eta;
  tc.max_iterations = o.max_iters;
  tc.gradient_tolerance = o.tol;
  tc.l2 = o.l2;
  tc.sum_gradients = o.sum_gradients;
  tc.seed = o.g.seed;
  tc.workers = o.g.workers;
  const auto result = em::rankfg::train(instances, tc);
  log_line(o.g, "stopped after " + std::to_string(result.iterations) +
                    " updates, log-likelihood " +
                    em::format_double(result.likelihood_trace.back()) +
                    ", gradient max-norm " + em::format_double(result.gradient_norm) +
                    (result.converged ? " (converged)" : " (iteration budget)"));

  em::rankfg::ModelMetadata meta;
  meta.seed = o.g.seed;
  meta.iterations = result.iterations;
  meta.final_log_likelihood = result.likelihood_trace.back();
  meta.converged = result.converged;
  meta.learning_rate = o.eta;
  emit(o.g, em::rankfg::model_json(result.params, meta));
}

struct RankOpts {
  Global g;
  std::string data;
  std::string vectors;
  std::string model;
  std::string question;
  int retrieve_k = 0;  // 0 = the question's responded experts
  std::string qtoe = "exact";
  std::string score_source = "marginal";
};

void run_rank(RankOpts& o, const Settings& s, bool retrieve_by_default) {
  s.pull("data", o.data);
  s.pull("vectors", o.vectors);
  s.pull("model", o.model);
  s.pull("question", o.question);
  s.pull("retrieve-k", o.retrieve_k);
  s.pull("qtoe", o.qtoe);
  s.pull("score-source", o.score_source);
  s.pull("seed", o.g.seed);
  if (o.data.empty()) throw UsageError("needs --data <dir>");
  if (o.vectors.empty()) throw UsageError("needs --vectors <file>");
  if (o.model.empty()) throw UsageError("needs --model <file>");
  if (o.question.empty()) throw UsageError("needs --question <id>");
  if (retrieve_by_default && o.retrieve_k <= 0) o.retrieve_k = 50;

  em::features::FeatureConfig fcfg;
  fcfg.qtoe_mode = parse_qtoe_mode(o.qtoe);
  const auto p = open_pipeline(o.data, o.vectors, fcfg);
  const auto model = em::rankfg::load_model(o.model);
  const em::core::Question* question = p->dataset.find_question(o.question);
  if (!question)
    throw em::DanglingReferenceError("unknown question '" + o.question + "'");

  std::vector<std::string> pool;
  if (o.retrieve_k > 0) {
    const auto candidates =
        em::retrieval::generate_candidates(p->index, *question, o.retrieve_k);
    for (const auto& c : candidates.ranked) pool.push_back(c.expert_id);
    log_line(o.g, "retrieved " + std::to_string(pool.size()) + " candidates");
  } else {
    pool = responded_pool(p->dataset, o.question).ids;
    log_line(o.g, "ranking " + std::to_string(pool.size()) + " responded experts");
  }
  if (pool.empty())
    throw em::NoCandidatesError("question " + o.question +
                                " has no candidates; pass --retrieve-k");

  auto psi = p->extractor->pool_features(*question, pool);
  const auto graph = em::rankfg::build_factor_graph(o.question, pool, psi, p->relations);
  em::rankfg::BpConfig bp;
  bp.seed = o.g.seed;
  const auto ranked = em::rankfg::rank_candidates(graph, model.params, bp,
                                                  parse_score_source(o.score_source));
  emit(o.g, ranking_jsonl(o.question, ranked));
}

struct EvaluateOpts {
  Global g;
  std::string data;
  std::string vectors;
  std::string method = "rankfg";
  int repetitions = 10;
  double train_ratio = 0.6;
  std::string metrics = "p@1,p@3,p@5,map,rprec";
  double eta = 0.01;
  int max_iters = 500;
  double tol = 1e-6;
  double l2 = 0.0;
  bool sum_gradients = false;
  std::string qtoe = "exact";
  bool no_lm_feature = false;
  int keyword_k = 5;
  bool derive_interests = false;
  std::string scores;  // external method CSV
  std::string score_source = "marginal";
  std::string csv;  // optional per-repetition CSV export path
};

void run_evaluate(EvaluateOpts& o, const Settings& s) {
  s.pull("data", o.data);
  s.pull("vectors", o.vectors);
  s.pull("method", o.method);
  s.pull("repetitions", o.repetitions);
  s.pull("train-ratio", o.train_ratio);
  s.pull_list("metrics", o.metrics);
  s.pull("eta", o.eta);
  s.pull("max-iters", o.max_iters);
  s.pull("tol", o.tol);
  s.pull("l2", o.l2);
  s.pull("sum-gradients", o.sum_gradients);
  s.pull("qtoe", o.qtoe);
  s.pull("no-lm-feature", o.no_lm_feature);
  s.pull("keyword-k", o.keyword_k);
  s.pull("derive-interests", o.derive_interests);
  s.pull("scores", o.scores);
  s.pull("score-source", o.score_source);
  s.pull("csv", o.csv);
  s.pull("seed", o.g.seed);
  s.pull("workers", o.g.workers);
  if (o.data.empty()) throw UsageError("evaluate needs --data <dir>");
  if (o.vectors.empty()) throw UsageError("evaluate needs --vectors <file>");

  em::eval::ExperimentConfig cfg;
  cfg.method = em::eval::method_from_string(o.method);
  cfg.repetitions = o.repetitions;
  cfg.train_ratio = o.train_ratio;
  cfg.base_seed = o.g.seed;
  cfg.metrics = split_commas(o.metrics);
  cfg.features.qtoe_mode = parse_qtoe_mode(o.qtoe);
  cfg.features.use_lm_feature = !o.no_lm_feature;
  cfg.features.keyword_k = o.keyword_k;
  cfg.features.derive_interests_from_documents = o.derive_interests;
  cfg.train.learning_rate = o.eta;
  cfg.train.max_iterations = o.max_iters;
  cfg.train.gradient_tolerance = o.tol;
  cfg.train.l2 = o.l2;
  cfg.train.sum_gradients = o.sum_gradients;
  cfg.train.seed = o.g.seed;
  cfg.score_source = parse_score_source(o.score_source);
  cfg.workers = o.g.workers;
  if (cfg.method == em::eval::Method::external) {
    if (o.scores.empty()) throw UsageError("method 'external' needs --scores <csv>");
    cfg.external_scores = em::eval::load_scores_csv(o.scores);
  }

  const auto ds = em::core::load_dataset(o.data);
  const auto table = em::embedding::load_vectors(o.vectors);
  const auto report = em::eval::run_experiment(ds, table, cfg);
  if (!o.g.quiet) std::cerr << em::eval::report_table(report);
  if (!o.csv.empty()) {
    std::ofstream out(o.csv, std::ios::binary);
    if (!out) throw em::IoError("cannot write " + o.csv);
    out << em::eval::report_csv(report);
  }
  emit(o.g, em::eval::report_json(report));
}

struct SynthOpts {
  Global g;
  int questions = 200;
  int candidates = 10;
  int experts = 100;
  int vocabulary = 48;
  int topics = 4;
  int dimension = 8;
  double friendship_density = 0.05;
  int nationality_groups = 5;
  int affiliation_groups = 8;
  double academia_rate = 0.6;
  double noise = 0.0;
  std::string alpha;
  std::string beta;
};

// planted defaults: every weight clears magnitude 0.5, correlation weights
// reward agreeing neighbors
const std::array<double, em::features::kLocalDim> kDefaultAlpha = {
    0.8, -0.6, 0.7, -0.5, -1.2, 1.0, 0.6, 0.5};
const std::array<double, em::features::kCorrDim> kDefaultBeta = {0.8, 0.6, 1.0};

void run_synth(SynthOpts& o, const Settings& s) {
  s.pull("questions", o.questions);
  s.pull("candidates", o.candidates);
  s.pull("experts", o.experts);
  s.pull("vocabulary", o.vocabulary);
  s.pull("topics", o.topics);
  s.pull("dimension", o.dimension);
  s.pull("friendship-density", o.friendship_density);
  s.pull("nationality-groups", o.nationality_groups);
  s.pull("affiliation-groups", o.affiliation_groups);
  s.pull("academia-rate", o.academia_rate);
  s.pull("noise", o.noise);
  s.pull_list("alpha", o.alpha);
  s.pull_list("beta", o.beta);
  s.pull("seed", o.g.seed);
  if (o.g.out.empty()) throw UsageError("synth needs --out <dir>");

  em::synth::SynthConfig cfg;
  cfg.questions = o.questions;
  cfg.candidates_per_question = o.candidates;
  cfg.num_experts = o.experts;
  cfg.vocabulary = o.vocabulary;
  cfg.topics = o.topics;
  cfg.dimension = o.dimension;
  cfg.friendship_density = o.friendship_density;
  cfg.nationality_groups = o.nationality_groups;
  cfg.affiliation_groups = o.affiliation_groups;
  cfg.academia_rate = o.academia_rate;
  cfg.feature_noise = o.noise;
  cfg.seed = o.g.seed;
  cfg.planted.alpha = kDefaultAlpha;
  cfg.planted.beta = kDefaultBeta;
  if (!o.alpha.empty()) {
    const auto values = parse_double_list(o.alpha, "alpha");
    if (values.size() != cfg.planted.alpha.size())
      throw UsageError("--alpha needs " + std::to_string(cfg.planted.alpha.size()) +
                       " comma-separated values");
    std::copy(values.begin(), values.end(), cfg.planted.alpha.begin());
  }
  if (!o.beta.empty()) {
    const auto values = parse_double_list(o.beta, "beta");
    if (values.size() != cfg.planted.beta.size())
      throw UsageError("--beta needs " + std::to_string(cfg.planted.beta.size()) +
                       " comma-separated values");
    std::copy(values.begin(), values.end(), cfg.planted.beta.begin());
  }

  const auto result = em::synth::synth_generate(cfg);
  em::core::save_dataset(result.dataset, o.g.out);
  em::embedding::save_vectors(result.table,
                              std::filesystem::path(o.g.out) / "vectors.txt");
  json planted;
  planted["alpha"] = result.planted.alpha;
  planted["beta"] = result.planted.beta;
  planted["seed"] = cfg.seed;
  planted["questions"] = cfg.questions;
  planted["candidates_per_question"] = cfg.candidates_per_question;
  planted["experts"] = cfg.num_experts;
  planted["feature_noise"] = cfg.feature_noise;
  {
    std::ofstream out(std::filesystem::path(o.g.out) / "planted.json", std::ios::binary);
    if (!out) throw em::IoError("cannot write planted.json");
    out << planted.dump(2) << "\n";
  }
  log_line(o.g, "wrote " + std::to_string(result.dataset.experts.size()) + " experts, " +
                    std::to_string(result.dataset.questions.size()) + " questions, " +
                    std::to_string(result.dataset.responses.size()) + " responses to " +
                    o.g.out);
}

struct StatsOpts {
  Global g;
  std::string data;
  int min_correlated = 1;
};

void run_stats(StatsOpts& o, const Settings& s) {
  s.pull("data", o.data);
  s.pull("min-correlated", o.min_correlated);
  if (o.data.empty()) throw UsageError("stats needs --data <dir>");
  const auto ds = em::core::load_dataset(o.data);
  const auto stats = em::eval::decline_stats(ds, o.min_correlated);
  log_line(o.g, "decline rate " + em::format_double(stats.overall_rate) + " (" +
                    std::to_string(stats.total_declines) + "/" +
                    std::to_string(stats.total_responses) + ")");
  emit(o.g, em::eval::decline_stats_json(stats));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"expert matching with decline-aware factor-graph ranking"};
  app.require_subcommand(1);

  IngestOpts ingest;
  auto* cmd_ingest = app.add_subcommand("ingest", "validate a dataset directory");
  add_global(cmd_ingest, ingest.g);
  cmd_ingest->add_option("--data", ingest.data, "dataset directory");

  TrainEmbeddingsOpts emb;
  auto* cmd_emb = app.add_subcommand("train-embeddings", "train word vectors on the corpus");
  add_global(cmd_emb, emb.g);
  cmd_emb->add_option("--data", emb.data, "dataset directory");
  cmd_emb->add_option("--dim", emb.dimension, "embedding width");
  cmd_emb->add_option("--window", emb.window, "context window");
  cmd_emb->add_option("--epochs", emb.epochs, "training epochs");
  cmd_emb->add_option("--learning-rate", emb.learning_rate, "SGD step size");
  cmd_emb->add_option("--mode", emb.mode, "softmax|negative");
  cmd_emb->add_option("--negative", emb.negative, "negative samples per pair");

  IndexOpts index;
  auto* cmd_index = app.add_subcommand("index", "build and persist the retrieval index");
  add_global(cmd_index, index.g);
  cmd_index->add_option("--data", index.data, "dataset directory");
  cmd_index->add_option("--lambda", index.lambda, "smoothing weight (default: average document length)");

  DistanceOpts distance;
  auto* cmd_distance = app.add_subcommand("distance", "distance between two text files");
  add_global(cmd_distance, distance.g);
  cmd_distance->add_option("--vectors", distance.vectors, "word-vector file");
  cmd_distance->add_option("--doc-a", distance.doc_a, "first text file");
  cmd_distance->add_option("--doc-b", distance.doc_b, "second text file");
  auto* flag_exact = cmd_distance->add_flag("--exact", distance.exact, "exact transport (default)");
  cmd_distance->add_flag("--relaxed", distance.relaxed, "fast lower bound")->excludes(flag_exact);

  TrainRankfgOpts trainfg;
  auto* cmd_trainfg = app.add_subcommand("train-rankfg", "fit the ranking factor graph");
  add_global(cmd_trainfg, trainfg.g);
  cmd_trainfg->add_option("--data", trainfg.data, "dataset directory");
  cmd_trainfg->add_option("--vectors", trainfg.vectors, "word-vector file");
  cmd_trainfg->add_option("--eta", trainfg.eta, "learning rate");
  cmd_trainfg->add_option("--max-iters", trainfg.max_iters, "iteration budget");
  cmd_trainfg->add_option("--tol", trainfg.tol, "gradient max-norm stop");
  cmd_trainfg->add_option("--l2", trainfg.l2, "ridge penalty");
  cmd_trainfg->add_flag("--sum-gradients", trainfg.sum_gradients,
                        "sum per-question gradients instead of averaging");
  cmd_trainfg->add_option("--qtoe", trainfg.qtoe, "exact|relaxed");
  cmd_trainfg->add_flag("--no-lm-feature", trainfg.no_lm_feature, "drop the retrieval score feature");
  cmd_trainfg->add_option("--keyword-k", trainfg.keyword_k, "extracted keywords per question");
  cmd_trainfg->add_flag("--derive-interests", trainfg.derive_interests,
                        "augment interests from the expert's documents");

  RankOpts rank;
  auto* cmd_rank = app.add_subcommand("rank", "rank a question's candidates with a model");
  add_global(cmd_rank, rank.g);
  cmd_rank->add_option("--data", rank.data, "dataset directory");
  cmd_rank->add_option("--vectors", rank.vectors, "word-vector file");
  cmd_rank->add_option("--model", rank.model, "model file");
  cmd_rank->add_option("--question", rank.question, "question id");
  cmd_rank->add_option("--retrieve-k", rank.retrieve_k,
                       "rank the top-k retrieved experts instead of responded ones");
  cmd_rank->add_option("--qtoe", rank.qtoe, "exact|relaxed");
  cmd_rank->add_option("--score-source", rank.score_source, "marginal|max-marginal|local");

  RankOpts recommend;
  auto* cmd_recommend =
      app.add_subcommand("recommend", "retrieve, featurize and rank experts for a question");
  add_global(cmd_recommend, recommend.g);
  cmd_recommend->add_option("--data", recommend.data, "dataset directory");
  cmd_recommend->add_option("--vectors", recommend.vectors, "word-vector file");
  cmd_recommend->add_option("--model", recommend.model, "model file");
  cmd_recommend->add_option("--question", recommend.question, "question id");
  cmd_recommend->add_option("--retrieve-k", recommend.retrieve_k, "candidate pool size (default 50)");
  cmd_recommend->add_option("--qtoe", recommend.qtoe, "exact|relaxed");
  cmd_recommend->add_option("--score-source", recommend.score_source,
                            "marginal|max-marginal|local");

  EvaluateOpts evaluate;
  auto* cmd_evaluate = app.add_subcommand("evaluate", "repeated-split ranking experiment");
  add_global(cmd_evaluate, evaluate.g);
  cmd_evaluate->add_option("--data", evaluate.data, "dataset directory");
  cmd_evaluate->add_option("--vectors", evaluate.vectors, "word-vector file");
  cmd_evaluate->add_option("--method", evaluate.method,
                           "jaccard|qtoe|lm|rankfg|rankfg_local|external");
  cmd_evaluate->add_option("--repetitions", evaluate.repetitions, "independent splits");
  cmd_evaluate->add_option("--train-ratio", evaluate.train_ratio, "training share of questions");
  cmd_evaluate->add_option("--metrics", evaluate.metrics, "comma list: p@N, map, rprec");
  cmd_evaluate->add_option("--eta", evaluate.eta, "learning rate");
  cmd_evaluate->add_option("--max-iters", evaluate.max_iters, "iteration budget");
  cmd_evaluate->add_option("--tol", evaluate.tol, "gradient max-norm stop");
  cmd_evaluate->add_option("--l2", evaluate.l2, "ridge penalty");
  cmd_evaluate->add_flag("--sum-gradients", evaluate.sum_gradients,
                         "sum per-question gradients instead of averaging");
  cmd_evaluate->add_option("--qtoe", evaluate.qtoe, "exact|relaxed");
  cmd_evaluate->add_flag("--no-lm-feature", evaluate.no_lm_feature,
                         "drop the retrieval score feature");
  cmd_evaluate->add_option("--keyword-k", evaluate.keyword_k, "extracted keywords per question");
  cmd_evaluate->add_flag("--derive-interests", evaluate.derive_interests,
                         "augment interests from the expert's documents");
  cmd_evaluate->add_option("--scores", evaluate.scores, "external score CSV");
  cmd_evaluate->add_option("--score-source", evaluate.score_source,
                           "marginal|max-marginal|local");
  cmd_evaluate->add_option("--csv", evaluate.csv, "also write per-repetition metrics CSV here");

  SynthOpts synth;
  auto* cmd_synth = app.add_subcommand("synth", "generate a synthetic dataset with known weights");
  add_global(cmd_synth, synth.g);
  cmd_synth->add_option("--questions", synth.questions, "number of questions");
  cmd_synth->add_option("--candidates", synth.candidates, "candidates per question (max 15)");
  cmd_synth->add_option("--experts", synth.experts, "number of experts");
  cmd_synth->add_option("--vocabulary", synth.vocabulary, "vocabulary size");
  cmd_synth->add_option("--topics", synth.topics, "topic clusters");
  cmd_synth->add_option("--dimension", synth.dimension, "embedding width");
  cmd_synth->add_option("--friendship-density", synth.friendship_density,
                        "friendship probability per expert pair");
  cmd_synth->add_option("--nationality-groups", synth.nationality_groups, "nationality groups");
  cmd_synth->add_option("--affiliation-groups", synth.affiliation_groups, "affiliation groups");
  cmd_synth->add_option("--academia-rate", synth.academia_rate, "share of academia experts");
  cmd_synth->add_option("--noise", synth.noise, "feature jitter while sampling labels");
  cmd_synth->add_option("--alpha", synth.alpha, "planted local weights, comma list of 8");
  cmd_synth->add_option("--beta", synth.beta, "planted correlation weights, comma list of 3");

  StatsOpts stats;
  auto* cmd_stats = app.add_subcommand("stats", "decline-rate statistics");
  add_global(cmd_stats, stats.g);
  cmd_stats->add_option("--data", stats.data, "dataset directory");
  cmd_stats->add_option("--min-correlated", stats.min_correlated,
                        "declined related experts needed for the conditional bucket");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*cmd_ingest) {
      run_ingest(ingest, Settings(cmd_ingest, ingest.g.config_path));
    } else if (*cmd_emb) {
      run_train_embeddings(emb, Settings(cmd_emb, emb.g.config_path));
    } else if (*cmd_index) {
      run_index(index, Settings(cmd_index, index.g.config_path));
    } else if (*cmd_distance) {
      run_distance(distance, Settings(cmd_distance, distance.g.config_path));
    } else if (*cmd_trainfg) {
      run_train_rankfg(trainfg, Settings(cmd_trainfg, trainfg.g.config_path));
    } else if (*cmd_rank) {
      run_rank(rank, Settings(cmd_rank, rank.g.config_path), false);
    } else if (*cmd_recommend) {
      run_rank(recommend, Settings(cmd_recommend, recommend.g.config_path), true);
    } else if (*cmd_evaluate) {
      run_evaluate(evaluate, Settings(cmd_evaluate, evaluate.g.config_path));
    } else if (*cmd_synth) {
      run_synth(synth, Settings(cmd_synth, synth.g.config_path));
    } else if (*cmd_stats) {
      run_stats(stats, Settings(cmd_stats, stats.g.config_path));
    }
  } catch (const UsageError& e) {
    std::cerr << "error: usage: " << e.what() << "\n";
    return 1;
  } catch (const em::Error& e) {
    std::cerr << "error: " << e.code() << ": " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
