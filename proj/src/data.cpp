#include "kdd/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string_view>

#include "kdd/rng.hpp"

namespace kdd {

namespace {

[[noreturn]] void parse_fail(const std::string& path, size_t line_no, const std::string& what) {
  throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + what);
}

int parse_id(std::string_view field, const std::string& path, size_t line_no, const char* name) {
  int value = 0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc{} || ptr != field.data() + field.size() || value < 0) {
    parse_fail(path, line_no, std::string("expected non-negative integer ") + name + ", got '" +
                                  std::string(field) + "'");
  }
  return value;
}

double parse_rating(std::string_view field, const std::string& path, size_t line_no) {
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc{} || ptr != field.data() + field.size() || !std::isfinite(value)) {
    parse_fail(path, line_no, "expected real rating, got '" + std::string(field) + "'");
  }
  return value;
}

struct RawRecord {
  int user, item;
  double rating;
};

std::vector<RawRecord> parse_tsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");

  std::vector<RawRecord> raw;
  std::set<std::pair<int, int>> seen;

  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;

    const size_t t1 = line.find('\t');
    const size_t t2 = (t1 == std::string::npos) ? std::string::npos : line.find('\t', t1 + 1);
    if (t1 == std::string::npos || t2 == std::string::npos ||
        line.find('\t', t2 + 1) != std::string::npos) {
      parse_fail(path, line_no, "expected 3 tab-separated fields");
    }
    const std::string_view view(line);
    const int user = parse_id(view.substr(0, t1), path, line_no, "user id");
    const int item = parse_id(view.substr(t1 + 1, t2 - t1 - 1), path, line_no, "item id");
    const double rating = parse_rating(view.substr(t2 + 1), path, line_no);

    if (!seen.insert({user, item}).second) {
      parse_fail(path, line_no,
                 "duplicate interaction (" + std::to_string(user) + ", " + std::to_string(item) + ")");
    }
    raw.push_back({user, item, rating});
  }
  if (raw.empty()) throw std::runtime_error("'" + path + "' contains no interactions");
  return raw;
}

// Contiguous reindexing in sorted id order; an already-contiguous id space
// maps to itself, which keeps write -> load an identity.
void index_ids(const std::vector<RawRecord>& raw, std::map<int, int>& user_index,
               std::map<int, int>& item_index) {
  for (const RawRecord& r : raw) {
    user_index.emplace(r.user, 0);
    item_index.emplace(r.item, 0);
  }
  int k = 0;
  for (auto& [id, idx] : user_index) idx = k++;
  k = 0;
  for (auto& [id, idx] : item_index) idx = k++;
}

InteractionTable build_table(const std::vector<RawRecord>& raw,
                             const std::map<int, int>& user_index,
                             const std::map<int, int>& item_index, int num_envs, Rng& env_rng) {
  InteractionTable table;
  table.num_users = static_cast<int>(user_index.size());
  table.num_items = static_cast<int>(item_index.size());
  table.num_envs = num_envs;
  table.interactions.reserve(raw.size());
  for (const RawRecord& r : raw) {
    table.interactions.push_back({user_index.at(r.user), item_index.at(r.item), r.rating,
                                  static_cast<int>(env_rng.below(num_envs))});
  }
  return table;
}

}  // namespace

InteractionTable load_interactions(const std::string& path, int num_envs, uint64_t seed) {
  if (num_envs < 1) throw std::invalid_argument("num_envs must be >= 1");
  const std::vector<RawRecord> raw = parse_tsv(path);
  std::map<int, int> user_index, item_index;
  index_ids(raw, user_index, item_index);
  Rng env_rng(seed, "env-assign");
  return build_table(raw, user_index, item_index, num_envs, env_rng);
}

std::pair<InteractionTable, InteractionTable> load_interaction_pair(const std::string& path_a,
                                                                    const std::string& path_b,
                                                                    int num_envs, uint64_t seed) {
  if (num_envs < 1) throw std::invalid_argument("num_envs must be >= 1");
  const std::vector<RawRecord> raw_a = parse_tsv(path_a);
  const std::vector<RawRecord> raw_b = parse_tsv(path_b);

  std::vector<RawRecord> merged = raw_a;
  merged.insert(merged.end(), raw_b.begin(), raw_b.end());
  std::map<int, int> user_index, item_index;
  index_ids(merged, user_index, item_index);

  Rng env_rng(seed, "env-assign");
  InteractionTable a = build_table(raw_a, user_index, item_index, num_envs, env_rng);
  InteractionTable b = build_table(raw_b, user_index, item_index, num_envs, env_rng);
  return {std::move(a), std::move(b)};
}

void write_interactions(const InteractionTable& table, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  char buf[64];
  for (const Interaction& r : table.interactions) {
    std::snprintf(buf, sizeof(buf), "%.17g", r.label);
    out << r.user_id << '\t' << r.item_id << '\t' << buf << '\n';
  }
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

InteractionTable binarize(const InteractionTable& table, double threshold) {
  InteractionTable out = table;
  for (Interaction& r : out.interactions) {
    r.label = r.label > threshold ? 1.0 : 0.0;
  }
  return out;
}

DatasetSplit split_unbiased(const InteractionTable& unbiased, SplitFractions fractions,
                            uint64_t seed) {
  if (fractions.train < 0 || fractions.val < 0 || fractions.test < 0) {
    throw std::invalid_argument("split fractions must be non-negative");
  }
  const double total = fractions.train + fractions.val + fractions.test;
  if (std::abs(total - 1.0) > 1e-9) {
    throw std::invalid_argument("split fractions must sum to 1");
  }

  const size_t n = unbiased.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  Rng rng(seed, "split");
  rng.shuffle(order);

  size_t n_train = static_cast<size_t>(std::llround(fractions.train * static_cast<double>(n)));
  size_t n_val = static_cast<size_t>(std::llround(fractions.val * static_cast<double>(n)));
  n_train = std::min(n_train, n);
  n_val = std::min(n_val, n - n_train);

  DatasetSplit split;
  for (InteractionTable* part : {&split.train_biased, &split.validation, &split.test_unbiased}) {
    part->num_users = unbiased.num_users;
    part->num_items = unbiased.num_items;
    part->num_envs = unbiased.num_envs;
  }
  for (size_t pos = 0; pos < n; ++pos) {
    const Interaction& r = unbiased.interactions[order[pos]];
    if (pos < n_train) {
      split.train_biased.interactions.push_back(r);
    } else if (pos < n_train + n_val) {
      split.validation.interactions.push_back(r);
    } else {
      split.test_unbiased.interactions.push_back(r);
    }
  }
  return split;
}

namespace {

double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void validate(const SyntheticConfig& cfg) {
  if (cfg.num_users < 1 || cfg.num_items < 1 || cfg.latent_dim < 1 || cfg.num_envs < 1 ||
      cfg.positives_per_user < 1) {
    throw std::invalid_argument("synthetic counts must be >= 1");
  }
  if (cfg.bias_strength < 0 || cfg.exposure_skew < 0) {
    throw std::invalid_argument("bias_strength and exposure_skew must be >= 0");
  }
  if (cfg.positives_per_user > cfg.num_items) {
    throw std::invalid_argument("positives_per_user exceeds num_items");
  }
}

}  // namespace

SyntheticData generate_synthetic(const SyntheticConfig& cfg) {
  validate(cfg);
  const int U = cfg.num_users, I = cfg.num_items, D = cfg.latent_dim, E = cfg.num_envs;
  const int per_user = cfg.positives_per_user;

  // Relevance logit a(u,i) = scale * dot(U_u, V_i) / sqrt(D); the scale
  // spreads per-item probabilities over roughly (0.1, 0.9).
  constexpr double kLogitScale = 2.0;
  Rng lat(cfg.seed, "synth-latents");
  std::vector<double> user_lat(static_cast<size_t>(U) * D), item_lat(static_cast<size_t>(I) * D);
  for (double& x : user_lat) x = lat.normal();
  for (double& x : item_lat) x = lat.normal();
  const auto relevance_logit = [&](int u, int i) {
    double s = 0.0;
    for (int k = 0; k < D; ++k) {
      s += user_lat[static_cast<size_t>(u) * D + k] * item_lat[static_cast<size_t>(i) * D + k];
    }
    return kLogitScale * s / std::sqrt(static_cast<double>(D));
  };

  // Per-(environment, item) confounder shift.
  Rng conf(cfg.seed, "synth-confounder");
  std::vector<double> shift(static_cast<size_t>(E) * I);
  for (double& x : shift) x = cfg.bias_strength * conf.normal();

  // Popularity weight, Zipf-like over the item index.
  std::vector<double> popularity(I);
  for (int i = 0; i < I; ++i) {
    popularity[i] = std::pow(1.0 / static_cast<double>(i + 1), cfg.exposure_skew);
  }

  SyntheticData out;
  for (InteractionTable* t : {&out.biased, &out.unbiased}) {
    t->num_users = U;
    t->num_items = I;
    t->num_envs = E;
    t->interactions.reserve(static_cast<size_t>(U) * per_user);
  }

  // Biased arm: exposure follows popularity * exp(shift); labels follow the
  // tilted relevance.
  Rng biased_rng(cfg.seed, "synth-biased");
  std::vector<double> weight(I);
  std::vector<char> taken(I);
  for (int u = 0; u < U; ++u) {
    std::fill(taken.begin(), taken.end(), 0);
    for (int t = 0; t < per_user; ++t) {
      const int env = static_cast<int>(biased_rng.below(E));
      double total = 0.0;
      for (int i = 0; i < I; ++i) {
        weight[i] = taken[i] ? 0.0 : popularity[i] * std::exp(shift[static_cast<size_t>(env) * I + i]);
        total += weight[i];
      }
      double pick = biased_rng.uniform() * total;
      int item = -1;
      for (int i = 0; i < I; ++i) {
        pick -= weight[i];
        if (pick < 0.0 && weight[i] > 0.0) {
          item = i;
          break;
        }
      }
      if (item < 0) {  // numeric tail: fall back to the last free item
        for (int i = I - 1; i >= 0; --i) {
          if (!taken[i]) {
            item = i;
            break;
          }
        }
      }
      taken[item] = 1;
      const double p = logistic(relevance_logit(u, item) + shift[static_cast<size_t>(env) * I + item]);
      const double label = biased_rng.uniform() < p ? 1.0 : 0.0;
      out.biased.interactions.push_back({u, item, label, 0});
    }
  }

  // Unbiased arm: uniform exposure, labels from pure relevance.
  Rng unbiased_rng(cfg.seed, "synth-unbiased");
  std::vector<int> pool(I);
  for (int u = 0; u < U; ++u) {
    std::iota(pool.begin(), pool.end(), 0);
    for (int t = 0; t < per_user; ++t) {
      const size_t j = t + unbiased_rng.below(static_cast<uint64_t>(I - t));
      std::swap(pool[t], pool[j]);
      const int item = pool[t];
      const double p = logistic(relevance_logit(u, item));
      const double label = unbiased_rng.uniform() < p ? 1.0 : 0.0;
      out.unbiased.interactions.push_back({u, item, label, 0});
    }
  }

  // Working environment labels are uniform; the generating environment above
  // stays latent.
  Rng env_rng(cfg.seed, "synth-env-labels");
  for (InteractionTable* t : {&out.biased, &out.unbiased}) {
    for (Interaction& r : t->interactions) {
      r.env = static_cast<int>(env_rng.below(E));
    }
  }
  return out;
}

}  // namespace kdd
