#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "expertmatch/core.hpp"
#include "expertmatch/errors.hpp"
#include "expertmatch/features.hpp"
#include "expertmatch/rankfg.hpp"

namespace expertmatch::eval {

struct RankedResult {
  std::string question_id;
  std::vector<std::string> expert_ids;  // ranked, best first
  std::vector<int> relevance;           // aligned 0/1 labels
};

// (#relevant in the top min(n, length)) / n.
double precision_at_n(const RankedResult& result, int n);

// Mean of precision@rank over relevant ranks; zero relevant items -> 0.
double average_precision(const RankedResult& result);

double mean_average_precision(const std::vector<RankedResult>& results);

// Precision at rank R where R = #relevant; R = 0 is an error.
double r_prec(const RankedResult& result);

enum class Method { jaccard, qtoe, lm, rankfg, rankfg_local, external };

std::string to_string(Method method);
Method method_from_string(const std::string& name);

// score per (question_id, expert_id), imported from a ranker trained outside
// this codebase
using ExternalScores = std::map<std::pair<std::string, std::string>, double>;

// CSV with a "question_id,expert_id,score" header line.
ExternalScores load_scores_csv(const std::filesystem::path& path);

struct ExperimentConfig {
  Method method = Method::rankfg;
  int repetitions = 10;
  double train_ratio = 0.6;
  uint64_t base_seed = 1;
  // metric names: "p@N" for any N >= 1, "map", "rprec"
  std::vector<std::string> metrics = {"p@1", "p@3", "p@5", "map", "rprec"};
  features::FeatureConfig features;
  rankfg::TrainConfig train;  // learning methods only
  rankfg::ScoreSource score_source = rankfg::ScoreSource::marginal;
  ExternalScores external_scores;  // Method::external only
  int workers = 1;                 // across repetitions
};

struct ExperimentReport {
  std::string method;
  std::vector<std::string> metric_names;
  std::vector<uint64_t> seeds;                      // one per repetition
  std::vector<std::vector<double>> per_repetition;  // [repetition][metric]
  std::vector<double> mean;                         // [metric]
};

// Repeated random train/test splits: per repetition, split with seed
// base_seed + r, fit the method on the training questions when it learns,
// rank each test question's responded experts and average the metrics
// (relevant = responded with "agree"). Deterministic, including across
// worker counts.
ExperimentReport run_experiment(const core::Dataset& dataset,
                                const embedding::EmbeddingTable& table,
                                const ExperimentConfig& config);

// Rank one question's candidates with a non-learning method.
RankedResult baseline_rank(const features::FeatureExtractor& extractor,
                           const core::Question& question,
                           const std::vector<std::string>& candidate_ids,
                           const std::vector<int>& relevance, Method method);

struct DeclineStats {
  int total_responses = 0;
  int total_declines = 0;
  double overall_rate = 0.0;

  struct QuestionRate {
    std::string question_id;
    int responses = 0;
    int declines = 0;
    double rate = 0.0;
  };
  std::vector<QuestionRate> per_question;

  // decline rate split by whether at least min_correlated_declines related
  // experts (by this relation kind) declined the same question
  struct ConditionalRate {
    std::string kind;
    int with_responses = 0;
    int with_declines = 0;
    double with_rate = 0.0;
    int without_responses = 0;
    int without_declines = 0;
    double without_rate = 0.0;
  };
  std::vector<ConditionalRate> conditional;
  int min_correlated_declines = 1;
};

DeclineStats decline_stats(const core::Dataset& dataset, int min_correlated_declines = 1);

// Serializations for the CLI: JSON report, aligned text table, CSV of
// per-repetition metrics.
std::string report_json(const ExperimentReport& report);
std::string report_table(const ExperimentReport& report);
std::string report_csv(const ExperimentReport& report);
std::string decline_stats_json(const DeclineStats& stats);

}  // namespace expertmatch::eval
