#include "kdd/metrics.hpp"

#include "kdd/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

namespace kdd {

RankedList rank_items(const ScoreFn& score, int user, std::span<const Candidate> candidates) {
  if (candidates.empty()) throw std::invalid_argument("rank_items: empty candidate set");
  struct Scored {
    int item_id;
    bool relevant;
    double score;
  };
  std::vector<Scored> scored;
  scored.reserve(candidates.size());
  for (const Candidate& c : candidates) {
    scored.push_back({c.item_id, c.relevant, score(user, c.item_id)});
  }
  std::sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.item_id < b.item_id;
  });

  RankedList out;
  out.user_id = user;
  out.item_ids.reserve(scored.size());
  out.relevant.reserve(scored.size());
  out.scores.reserve(scored.size());
  for (const Scored& s : scored) {
    out.item_ids.push_back(s.item_id);
    out.relevant.push_back(s.relevant ? 1 : 0);
    out.scores.push_back(s.score);
  }
  return out;
}

static int count_relevant(const RankedList& ranked) {
  int n = 0;
  for (char r : ranked.relevant) n += (r != 0);
  return n;
}

double ndcg_at_k(const RankedList& ranked, int k) {
  if (k <= 0) throw std::invalid_argument("ndcg_at_k: k must be positive");
  const int total_relevant = count_relevant(ranked);
  if (total_relevant == 0) return 0.0;

  const int depth = std::min<int>(k, static_cast<int>(ranked.size()));
  double dcg = 0.0;
  for (int r = 0; r < depth; ++r) {
    if (ranked.relevant[r]) dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  }
  const int ideal_depth = std::min(k, total_relevant);
  double idcg = 0.0;
  for (int r = 0; r < ideal_depth; ++r) {
    idcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  }
  return dcg / idcg;
}

double recall_at_k(const RankedList& ranked, int k) {
  if (k <= 0) throw std::invalid_argument("recall_at_k: k must be positive");
  const int total_relevant = count_relevant(ranked);
  if (total_relevant == 0) return 0.0;

  const int depth = std::min<int>(k, static_cast<int>(ranked.size()));
  int hits = 0;
  for (int r = 0; r < depth; ++r) hits += (ranked.relevant[r] != 0);
  return static_cast<double>(hits) / static_cast<double>(total_relevant);
}

MetricReport evaluate(const ScoreFn& score, const InteractionTable& test, std::span<const int> ks,
                      bool full_catalog) {
  if (ks.empty()) throw std::invalid_argument("evaluate: at least one cutoff k required");
  for (int k : ks) {
    if (k <= 0) throw std::invalid_argument("evaluate: cutoffs must be positive");
  }

  // Group test interactions by user, keeping only users with a positive item.
  std::unordered_map<int, std::vector<Candidate>> by_user;
  std::unordered_map<int, std::unordered_set<int>> positives;
  for (const Interaction& r : test.interactions) {
    by_user[r.user_id].push_back({r.item_id, r.label > 0.5});
    if (r.label > 0.5) positives[r.user_id].insert(r.item_id);
  }

  MetricReport report;
  for (int k : ks) {
    report.ndcg[k] = 0.0;
    report.recall[k] = 0.0;
  }

  std::vector<int> users;
  users.reserve(positives.size());
  for (const auto& [u, items] : positives) {
    (void)items;
    users.push_back(u);
  }
  std::sort(users.begin(), users.end());
  if (users.empty()) {
    throw std::invalid_argument("evaluate: no user has a positive test interaction");
  }

  std::vector<Candidate> catalog;
  for (int u : users) {
    std::span<const Candidate> candidates;
    if (full_catalog) {
      catalog.clear();
      catalog.reserve(test.num_items);
      const auto& pos = positives[u];
      for (int i = 0; i < test.num_items; ++i) {
        catalog.push_back({i, pos.count(i) > 0});
      }
      candidates = catalog;
    } else {
      candidates = by_user[u];
    }
    const RankedList ranked = rank_items(score, u, candidates);
    for (int k : ks) {
      report.ndcg[k] += ndcg_at_k(ranked, k);
      report.recall[k] += recall_at_k(ranked, k);
    }
  }

  const double n = static_cast<double>(users.size());
  for (int k : ks) {
    report.ndcg[k] /= n;
    report.recall[k] /= n;
  }
  report.users_evaluated = static_cast<int>(users.size());
  return report;
}

long long count_parameters(const TeacherModel& m) {
  const long long u = m.num_users(), i = m.num_items();
  const long long d = m.dim, e = m.num_envs();
  return 2 * (u + i) * d + e * d + d * e + e;
}

long long count_parameters(const StudentModel& m) {
  const long long u = m.user_emb.rows, i = m.item_emb.rows;
  return (u + i) * static_cast<long long>(m.dim);
}

double prediction_distance(double p, double y) { return std::fabs(p - y); }

std::vector<DistanceRow> teacher_distance_diagnostics(const TeacherModel& teacher,
                                                      const InteractionTable& test, double gamma) {
  std::vector<DistanceRow> rows;
  rows.reserve(test.interactions.size());
  for (const Interaction& r : test.interactions) {
    const double p_inv = invariant_score(teacher, r.user_id, r.item_id);
    double p_var = 0.0;
    for (int e = 0; e < teacher.num_envs(); ++e) {
      p_var += variant_score(teacher, r.user_id, r.item_id, e);
    }
    p_var /= static_cast<double>(teacher.num_envs());
    const double fused = soft_label(p_inv, p_var, gamma).y_star;
    rows.push_back({r.user_id, r.item_id, prediction_distance(p_inv, r.label),
                    prediction_distance(p_var, r.label), prediction_distance(fused, r.label)});
  }
  return rows;
}

StabilitySummary stability_report(const std::function<EvalPoint(uint64_t seed)>& run,
                                  std::span<const uint64_t> seeds, int k) {
  if (seeds.size() < 2) {
    throw std::invalid_argument("stability_report: need at least two seeds");
  }
  std::vector<EvalPoint> points;
  points.reserve(seeds.size());
  for (uint64_t s : seeds) points.push_back(run(s));

  const double n = static_cast<double>(points.size());
  StabilitySummary out;
  out.k = k;
  out.runs = static_cast<int>(points.size());
  for (const EvalPoint& p : points) {
    out.ndcg_mean += p.ndcg;
    out.recall_mean += p.recall;
  }
  out.ndcg_mean /= n;
  out.recall_mean /= n;
  double sn = 0.0, sr = 0.0;
  for (const EvalPoint& p : points) {
    sn += (p.ndcg - out.ndcg_mean) * (p.ndcg - out.ndcg_mean);
    sr += (p.recall - out.recall_mean) * (p.recall - out.recall_mean);
  }
  out.ndcg_std = std::sqrt(sn / (n - 1.0));
  out.recall_std = std::sqrt(sr / (n - 1.0));
  return out;
}

void write_metrics_csv(const std::string& path, std::span<const MetricReport> reports) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_metrics_csv: cannot open " + path);
  out << "run_id,seed,metric,k,value\n";
  char buf[64];
  for (const MetricReport& r : reports) {
    for (const auto& [k, v] : r.ndcg) {
      std::snprintf(buf, sizeof(buf), "%.10g", v);
      out << r.run_id << ',' << r.seed << ",ndcg," << k << ',' << buf << '\n';
    }
    for (const auto& [k, v] : r.recall) {
      std::snprintf(buf, sizeof(buf), "%.10g", v);
      out << r.run_id << ',' << r.seed << ",recall," << k << ',' << buf << '\n';
    }
  }
  if (!out) throw std::runtime_error("write_metrics_csv: write failed for " + path);
}

std::string config_fingerprint(std::string_view config_text) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(config_text)));
  return buf;
}

}  // namespace kdd
