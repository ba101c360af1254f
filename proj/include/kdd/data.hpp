#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace kdd {

// One observed user-item feedback record. `label` holds the raw rating after
// loading, 0/1 after binarize(), or a soft target in [0,1] once distilled.
// `env` is the current environment assignment of the record.
struct Interaction {
  int user_id = 0;
  int item_id = 0;
  double label = 0.0;
  int env = 0;
};

struct InteractionTable {
  std::vector<Interaction> interactions;
  int num_users = 0;
  int num_items = 0;
  int num_envs = 1;

  bool empty() const { return interactions.empty(); }
  size_t size() const { return interactions.size(); }
};

// Random partition of a uniformly-logged table; parts are disjoint on
// (user, item) pairs and share the source's index space.
struct DatasetSplit {
  InteractionTable train_biased;
  InteractionTable validation;
  InteractionTable test_unbiased;
};

struct SyntheticConfig {
  int num_users = 200;
  int num_items = 200;
  int latent_dim = 8;
  int num_envs = 2;
  double bias_strength = 2.0;
  double exposure_skew = 1.0;
  int positives_per_user = 30;  // interactions sampled per user, per table
  uint64_t seed = 0;
};

struct SyntheticData {
  InteractionTable biased;
  InteractionTable unbiased;
};

// Reads `user<TAB>item<TAB>rating` lines. Empty lines and lines starting with
// '#' are skipped. Ids are reindexed to contiguous 0-based indices in sorted
// order of the original ids; ratings are kept raw in `label`; environments are
// assigned uniformly at random from the (seed, "env-assign") stream in file
// order. Throws on malformed lines (naming the 1-based line number), duplicate
// (user, item) pairs, or an empty table.
InteractionTable load_interactions(const std::string& path, int num_envs, uint64_t seed);

// Loads two files that describe the same user/item universe (a biased log and
// a uniformly-logged one). Ids are reindexed jointly over the union of both
// files, so indices are compatible across the pair; the first file's records
// draw their envs before the second's from one stream.
std::pair<InteractionTable, InteractionTable> load_interaction_pair(const std::string& path_a,
                                                                    const std::string& path_b,
                                                                    int num_envs, uint64_t seed);

// Canonical TSV: `user<TAB>item<TAB>rating`, one record per line, no header.
void write_interactions(const InteractionTable& table, const std::string& path);

// label = 1 if rating > threshold else 0; everything else unchanged.
InteractionTable binarize(const InteractionTable& table, double threshold = 3.0);

struct SplitFractions {
  double train = 0.05;
  double val = 0.05;
  double test = 0.90;
};

// Random partition by interaction; sizes match the fractions within rounding.
// Fractions must be non-negative and sum to 1 within 1e-9.
DatasetSplit split_unbiased(const InteractionTable& unbiased, SplitFractions fractions,
                            uint64_t seed);

// Draws ground-truth user/item latents; relevance is the logistic of their
// scaled dot product. The biased table samples item exposure proportionally to
// a confounder score mixing a popularity skew with an environment-specific
// shift, and draws labels from the relevance tilted by the same shift. The
// unbiased table samples items uniformly and labels from pure relevance.
// Emitted env fields are uniform random (the generating environment stays
// latent). Labels are already 0/1.
SyntheticData generate_synthetic(const SyntheticConfig& cfg);

}  // namespace kdd
