#include "expertmatch/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "expertmatch/util.hpp"

namespace expertmatch::eval {

using json = nlohmann::ordered_json;

double precision_at_n(const RankedResult& result, int n) {
  if (n < 1) throw std::invalid_argument("precision_at_n needs n >= 1");
  const std::size_t top = std::min<std::size_t>(static_cast<std::size_t>(n),
                                                result.relevance.size());
  int hits = 0;
  for (std::size_t i = 0; i < top; ++i) hits += result.relevance[i];
  return static_cast<double>(hits) / static_cast<double>(n);
}

double average_precision(const RankedResult& result) {
  int hits = 0;
  double sum = 0.0;
  for (std::size_t i = 0; i < result.relevance.size(); ++i) {
    if (result.relevance[i] != 1) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(i + 1);
  }
  return hits == 0 ? 0.0 : sum / static_cast<double>(hits);
}

double mean_average_precision(const std::vector<RankedResult>& results) {
  if (results.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& r : results) sum += average_precision(r);
  return sum / static_cast<double>(results.size());
}

double r_prec(const RankedResult& result) {
  const int relevant = std::accumulate(result.relevance.begin(), result.relevance.end(), 0);
  if (relevant == 0)
    throw NoRelevantError("question " + result.question_id + " has no relevant expert");
  return precision_at_n(result, relevant);
}

std::string to_string(Method method) {
  switch (method) {
    case Method::jaccard: return "jaccard";
    case Method::qtoe: return "qtoe";
    case Method::lm: return "lm";
    case Method::rankfg: return "rankfg";
    case Method::rankfg_local: return "rankfg_local";
    case Method::external: return "external";
  }
  return "rankfg";
}

Method method_from_string(const std::string& name) {
  if (name == "jaccard") return Method::jaccard;
  if (name == "qtoe") return Method::qtoe;
  if (name == "lm") return Method::lm;
  if (name == "rankfg") return Method::rankfg;
  if (name == "rankfg_local") return Method::rankfg_local;
  if (name == "external") return Method::external;
  throw FormatError("unknown method '" + name + "'");
}

ExternalScores load_scores_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "question_id,expert_id,score")
    throw FormatError(path.string() + ": expected header 'question_id,expert_id,score'");
  ExternalScores scores;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto where = path.string() + ":" + std::to_string(lineno);
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 == std::string::npos ? c1 : c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos)
      throw FormatError(where + ": expected three comma-separated fields");
    const std::string qid = line.substr(0, c1);
    const std::string eid = line.substr(c1 + 1, c2 - c1 - 1);
    double value = 0.0;
    try {
      std::size_t used = 0;
      value = std::stod(line.substr(c2 + 1), &used);
      if (used != line.size() - c2 - 1) throw std::invalid_argument("trailing junk");
    } catch (const std::exception&) {
      throw FormatError(where + ": bad score '" + line.substr(c2 + 1) + "'");
    }
    if (!scores.emplace(std::pair{qid, eid}, value).second)
      throw FormatError(where + ": duplicate pair (" + qid + ", " + eid + ")");
  }
  return scores;
}

namespace {

struct ResponsePool {
  std::vector<std::string> ids;  // ascending
  std::vector<int> relevance;    // 1 = agree
};

ResponsePool responded_pool(const core::Dataset& dataset, const std::string& question_id) {
  std::vector<std::pair<std::string, int>> entries;
  for (const core::ResponseRecord* r : dataset.responses_for(question_id))
    entries.emplace_back(r->expert_id, r->label == core::ResponseLabel::agree ? 1 : 0);
  std::sort(entries.begin(), entries.end());
  ResponsePool pool;
  for (auto& [id, rel] : entries) {
    pool.ids.push_back(std::move(id));
    pool.relevance.push_back(rel);
  }
  return pool;
}

// order candidates by key (direction-adjusted), ties by ascending id
RankedResult order_by(const core::Question& question,
                      const std::vector<std::string>& candidate_ids,
                      const std::vector<int>& relevance,
                      const std::vector<double>& keys, bool descending) {
  std::vector<std::size_t> perm(candidate_ids.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::sort(perm.begin(), perm.end(), [&](std::size_t a, std::size_t b) {
    if (keys[a] != keys[b]) return descending ? keys[a] > keys[b] : keys[a] < keys[b];
    return candidate_ids[a] < candidate_ids[b];
  });
  RankedResult result;
  result.question_id = question.id;
  for (std::size_t i : perm) {
    result.expert_ids.push_back(candidate_ids[i]);
    result.relevance.push_back(relevance[i]);
  }
  return result;
}

RankedResult external_rank(const ExternalScores& scores, const core::Question& question,
                           const std::vector<std::string>& candidate_ids,
                           const std::vector<int>& relevance) {
  std::vector<double> keys(candidate_ids.size());
  for (std::size_t i = 0; i < candidate_ids.size(); ++i) {
    const auto it = scores.find({question.id, candidate_ids[i]});
    if (it == scores.end())
      throw FormatError("no external score for (" + question.id + ", " +
                        candidate_ids[i] + ")");
    keys[i] = it->second;
  }
  return order_by(question, candidate_ids, relevance, keys, true);
}

double metric_value(const std::string& name, const std::vector<RankedResult>& results) {
  if (results.empty()) return 0.0;
  if (name == "map") return mean_average_precision(results);
  if (name == "rprec") {
    double sum = 0.0;
    int counted = 0;
    for (const auto& r : results) {
      if (std::accumulate(r.relevance.begin(), r.relevance.end(), 0) == 0) continue;
      sum += r_prec(r);
      ++counted;
    }
    return counted == 0 ? 0.0 : sum / static_cast<double>(counted);
  }
  if (name.rfind("p@", 0) == 0) {
    const int n = std::stoi(name.substr(2));
    double sum = 0.0;
    for (const auto& r : results) sum += precision_at_n(r, n);
    return sum / static_cast<double>(results.size());
  }
  throw FormatError("unknown metric '" + name + "'");
}

void validate_metrics(const std::vector<std::string>& names) {
  for (const auto& name : names) {
    if (name == "map" || name == "rprec") continue;
    if (name.rfind("p@", 0) == 0) {
      try {
        if (std::stoi(name.substr(2)) >= 1) continue;
      } catch (const std::exception&) {
      }
    }
    throw FormatError("unknown metric '" + name + "'");
  }
}

}  // namespace

RankedResult baseline_rank(const features::FeatureExtractor& extractor,
                           const core::Question& question,
                           const std::vector<std::string>& candidate_ids,
                           const std::vector<int>& relevance, Method method) {
  switch (method) {
    case Method::jaccard:
      return order_by(question, candidate_ids, relevance,
                      extractor.jaccard_scores(question, candidate_ids), true);
    case Method::qtoe:
      return order_by(question, candidate_ids, relevance,
                      extractor.qtoe_scores(question, candidate_ids), false);
    case Method::lm:
      return order_by(question, candidate_ids, relevance,
                      extractor.lm_scores(question, candidate_ids), true);
    default:
      throw FormatError("baseline_rank only handles jaccard/qtoe/lm");
  }
}

ExperimentReport run_experiment(const core::Dataset& dataset,
                                const embedding::EmbeddingTable& table,
                                const ExperimentConfig& config) {
  if (dataset.responses.empty())
    throw NoResponsesError("dataset has no responses to evaluate against");
  if (config.repetitions < 1)
    throw FormatError("repetitions must be at least 1");
  validate_metrics(config.metrics);

  const retrieval::CollectionIndex index = retrieval::build_index(dataset);
  const features::FeatureExtractor extractor(dataset, index, table, config.features);
  const features::RelationMap relations =
      features::relation_map(core::derive_relations(dataset));
  const bool learns =
      config.method == Method::rankfg || config.method == Method::rankfg_local;

  ExperimentReport report;
  report.method = to_string(config.method);
  report.metric_names = config.metrics;
  report.seeds.resize(static_cast<std::size_t>(config.repetitions));
  report.per_repetition.assign(static_cast<std::size_t>(config.repetitions), {});

  parallel_for(static_cast<std::size_t>(config.repetitions), config.workers,
               [&](std::size_t r) {
    const uint64_t seed = config.base_seed + r;
    report.seeds[r] = seed;
    const auto [train_ds, test_ds] =
        core::split_dataset(dataset, config.train_ratio, seed);

    rankfg::Params params;
    rankfg::TrainConfig tc = config.train;
    if (learns) {
      std::vector<rankfg::TrainingInstance> instances;
      for (const auto& q : train_ds.questions) {
        ResponsePool pool = responded_pool(train_ds, q.id);
        if (pool.ids.empty()) continue;
        auto psi = extractor.pool_features(q, pool.ids);
        instances.push_back({rankfg::build_factor_graph(q.id, pool.ids, psi, relations),
                             pool.relevance});
      }
      tc.workers = 1;  // repetitions already run in parallel
      tc.seed = derive_seed(config.train.seed, r);
      if (config.method == Method::rankfg_local) tc.freeze_beta = true;
      params = rankfg::train(instances, tc).params;
    }

    std::vector<RankedResult> results;
    for (std::size_t qi = 0; qi < test_ds.questions.size(); ++qi) {
      const auto& q = test_ds.questions[qi];
      ResponsePool pool = responded_pool(test_ds, q.id);
      if (pool.ids.empty()) continue;
      if (learns) {
        auto psi = extractor.pool_features(q, pool.ids);
        auto graph = rankfg::build_factor_graph(q.id, pool.ids, psi, relations);
        rankfg::BpConfig bp = tc.bp;
        bp.seed = derive_seed(tc.seed, 0x7465737471ULL + qi);
        auto ranked = rankfg::rank_candidates(graph, params, bp, config.score_source);
        std::map<std::string, int> rel;
        for (std::size_t i = 0; i < pool.ids.size(); ++i) rel[pool.ids[i]] = pool.relevance[i];
        RankedResult rr;
        rr.question_id = q.id;
        for (const auto& c : ranked) {
          rr.expert_ids.push_back(c.expert_id);
          rr.relevance.push_back(rel.at(c.expert_id));
        }
        results.push_back(std::move(rr));
      } else if (config.method == Method::external) {
        results.push_back(external_rank(config.external_scores, q, pool.ids, pool.relevance));
      } else {
        results.push_back(baseline_rank(extractor, q, pool.ids, pool.relevance, config.method));
      }
    }

    std::vector<double> values;
    values.reserve(config.metrics.size());
    for (const auto& name : config.metrics) values.push_back(metric_value(name, results));
    report.per_repetition[r] = std::move(values);
  });

  report.mean.assign(config.metrics.size(), 0.0);
  for (const auto& rep : report.per_repetition)
    for (std::size_t m = 0; m < rep.size(); ++m) report.mean[m] += rep[m];
  for (double& m : report.mean) m /= static_cast<double>(config.repetitions);
  return report;
}

DeclineStats decline_stats(const core::Dataset& dataset, int min_correlated_declines) {
  if (dataset.responses.empty())
    throw NoResponsesError("dataset has no responses");

  DeclineStats stats;
  stats.min_correlated_declines = min_correlated_declines;
  for (const auto& r : dataset.responses) {
    ++stats.total_responses;
    if (r.label == core::ResponseLabel::decline) ++stats.total_declines;
  }
  stats.overall_rate =
      static_cast<double>(stats.total_declines) / static_cast<double>(stats.total_responses);

  for (const auto& q : dataset.questions) {
    const auto responses = dataset.responses_for(q.id);
    if (responses.empty()) continue;
    DeclineStats::QuestionRate rate;
    rate.question_id = q.id;
    rate.responses = static_cast<int>(responses.size());
    for (const core::ResponseRecord* r : responses)
      if (r->label == core::ResponseLabel::decline) ++rate.declines;
    rate.rate = static_cast<double>(rate.declines) / static_cast<double>(rate.responses);
    stats.per_question.push_back(std::move(rate));
  }

  // adjacency per relation kind
  const auto edges = core::derive_relations(dataset);
  std::array<std::map<std::string, std::set<std::string>>, features::kCorrDim> adjacency;
  for (const auto& e : edges) {
    std::size_t k = 0;
    switch (e.kind) {
      case core::RelationKind::same_nationality: k = 0; break;
      case core::RelationKind::same_affiliation: k = 1; break;
      case core::RelationKind::friendship: k = 2; break;
    }
    adjacency[k][e.expert_a].insert(e.expert_b);
    adjacency[k][e.expert_b].insert(e.expert_a);
  }

  for (int k = 0; k < features::kCorrDim; ++k) {
    DeclineStats::ConditionalRate cond;
    cond.kind = features::kCorrelationFeatureNames[static_cast<std::size_t>(k)];
    for (const auto& q : dataset.questions) {
      const auto responses = dataset.responses_for(q.id);
      for (const core::ResponseRecord* r : responses) {
        // count declines among this expert's related experts on the question
        int related_declines = 0;
        const auto nbrs = adjacency[static_cast<std::size_t>(k)].find(r->expert_id);
        if (nbrs != adjacency[static_cast<std::size_t>(k)].end()) {
          for (const core::ResponseRecord* other : responses) {
            if (other->expert_id == r->expert_id) continue;
            if (other->label != core::ResponseLabel::decline) continue;
            if (nbrs->second.count(other->expert_id)) ++related_declines;
          }
        }
        const bool declined = r->label == core::ResponseLabel::decline;
        if (related_declines >= min_correlated_declines) {
          ++cond.with_responses;
          if (declined) ++cond.with_declines;
        } else {
          ++cond.without_responses;
          if (declined) ++cond.without_declines;
        }
      }
    }
    if (cond.with_responses > 0)
      cond.with_rate = static_cast<double>(cond.with_declines) /
                       static_cast<double>(cond.with_responses);
    if (cond.without_responses > 0)
      cond.without_rate = static_cast<double>(cond.without_declines) /
                          static_cast<double>(cond.without_responses);
    stats.conditional.push_back(std::move(cond));
  }
  return stats;
}

std::string report_json(const ExperimentReport& report) {
  json doc;
  doc["method"] = report.method;
  doc["metrics"] = report.metric_names;
  doc["mean"] = json::object();
  for (std::size_t m = 0; m < report.metric_names.size(); ++m)
    doc["mean"][report.metric_names[m]] = report.mean[m];
  doc["repetitions"] = json::array();
  for (std::size_t r = 0; r < report.per_repetition.size(); ++r) {
    json rep;
    rep["seed"] = report.seeds[r];
    for (std::size_t m = 0; m < report.metric_names.size(); ++m)
      rep[report.metric_names[m]] = report.per_repetition[r][m];
    doc["repetitions"].push_back(std::move(rep));
  }
  return doc.dump(2) + "\n";
}

std::string report_table(const ExperimentReport& report) {
  std::ostringstream out;
  auto cell = [](const std::string& s) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%12s", s.c_str());
    return std::string(buf);
  };
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%12.4f", v);
    return std::string(buf);
  };
  out << cell("run");
  for (const auto& name : report.metric_names) out << cell(name);
  out << "\n";
  for (std::size_t r = 0; r < report.per_repetition.size(); ++r) {
    out << cell("seed " + std::to_string(report.seeds[r]));
    for (double v : report.per_repetition[r]) out << num(v);
    out << "\n";
  }
  out << cell("mean");
  for (double v : report.mean) out << num(v);
  out << "\n";
  return out.str();
}

std::string report_csv(const ExperimentReport& report) {
  std::ostringstream out;
  out << "repetition,seed";
  for (const auto& name : report.metric_names) out << ',' << name;
  out << '\n';
  for (std::size_t r = 0; r < report.per_repetition.size(); ++r) {
    out << r << ',' << report.seeds[r];
    for (double v : report.per_repetition[r]) out << ',' << format_double(v);
    out << '\n';
  }
  out << "mean,";
  for (double v : report.mean) out << ',' << format_double(v);
  out << '\n';
  return out.str();
}

std::string decline_stats_json(const DeclineStats& stats) {
  json doc;
  doc["responses"] = stats.total_responses;
  doc["declines"] = stats.total_declines;
  doc["decline_rate"] = stats.overall_rate;
  doc["per_question"] = json::array();
  for (const auto& q : stats.per_question) {
    json row;
    row["question_id"] = q.question_id;
    row["responses"] = q.responses;
    row["declines"] = q.declines;
    row["decline_rate"] = q.rate;
    doc["per_question"].push_back(std::move(row));
  }
  doc["min_correlated_declines"] = stats.min_correlated_declines;
  doc["conditional"] = json::array();
  for (const auto& c : stats.conditional) {
    json row;
    row["kind"] = c.kind;
    row["with_correlated_decline"] = {{"responses", c.with_responses},
                                      {"declines", c.with_declines},
                                      {"decline_rate", c.with_rate}};
    row["without_correlated_decline"] = {{"responses", c.without_responses},
                                         {"declines", c.without_declines},
                                         {"decline_rate", c.without_rate}};
    doc["conditional"].push_back(std::move(row));
  }
  return doc.dump(2) + "\n";
}

}  // namespace expertmatch::eval
