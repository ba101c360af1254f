#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kdd/data.hpp"
#include "kdd/distiller.hpp"
#include "kdd/teacher.hpp"

namespace kdd {

using ScoreFn = std::function<double(int user, int item)>;

struct Candidate {
  int item_id = 0;
  bool relevant = false;
};

// Items in descending score order, ties broken by ascending item id.
struct RankedList {
  int user_id = 0;
  std::vector<int> item_ids;
  std::vector<char> relevant;
  std::vector<double> scores;

  size_t size() const { return item_ids.size(); }
};

RankedList rank_items(const ScoreFn& score, int user, std::span<const Candidate> candidates);

// DCG@k = sum over relevant items at rank r <= k of 1/log2(r+1), normalized
// by the ideal DCG truncated at k. Returns 0 for lists without relevant items
// (such users are excluded upstream).
double ndcg_at_k(const RankedList& ranked, int k);

// Relevant items in the top k divided by the user's relevant items.
double recall_at_k(const RankedList& ranked, int k);

struct MetricReport {
  std::string run_id;
  uint64_t seed = 0;
  std::map<int, double> ndcg;    // k -> value
  std::map<int, double> recall;  // k -> value
  long long param_count = 0;
  std::string config_fingerprint;
  int users_evaluated = 0;
};

// Per user with at least one positive test item: rank that user's test items
// (or the full catalog when `full_catalog`), compute NDCG@k and Recall@k, and
// average uniformly over included users.
MetricReport evaluate(const ScoreFn& score, const InteractionTable& test, std::span<const int> ks,
                      bool full_catalog = false);

long long count_parameters(const TeacherModel& m);
long long count_parameters(const StudentModel& m);

// |p - y|.
double prediction_distance(double p, double y);

// Distance-to-label diagnostic per test interaction, for the invariant,
// variant (env-averaged), and fused predictions.
struct DistanceRow {
  int user_id = 0;
  int item_id = 0;
  double d_inv = 0.0;
  double d_var = 0.0;
  double d_fused = 0.0;
};
std::vector<DistanceRow> teacher_distance_diagnostics(const TeacherModel& teacher,
                                                      const InteractionTable& test, double gamma);

struct EvalPoint {
  double ndcg = 0.0;
  double recall = 0.0;
};

struct StabilitySummary {
  int k = 0;
  double ndcg_mean = 0.0, ndcg_std = 0.0;
  double recall_mean = 0.0, recall_std = 0.0;
  int runs = 0;
};

// Runs the closure once per seed and reports sample mean and sample standard
// deviation (n-1) of NDCG@k and Recall@k. Requires at least two seeds.
StabilitySummary stability_report(const std::function<EvalPoint(uint64_t seed)>& run,
                                  std::span<const uint64_t> seeds, int k);

// CSV with header `run_id,seed,metric,k,value`, one row per (metric, k).
void write_metrics_csv(const std::string& path, std::span<const MetricReport> reports);

// Stable FNV-1a hex fingerprint of a configuration text.
std::string config_fingerprint(std::string_view config_text);

}  // namespace kdd
