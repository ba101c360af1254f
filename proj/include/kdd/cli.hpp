#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kdd/data.hpp"
#include "kdd/distiller.hpp"
#include "kdd/teacher.hpp"

namespace kdd {

// Union of every knob the subcommands accept. Defaults follow the reference
// training setup; a config file fills in over the defaults and command-line
// flags override the file.
struct RunConfig {
  std::string data;      // biased interaction TSV
  std::string unbiased;  // uniformly-logged TSV, evaluation only
  std::string out;       // output directory
  std::string model;     // checkpoint path (eval, distill)
  std::string test;      // test TSV (eval)
  uint64_t seed = 0;
  int dim = 40;
  int envs = 2;
  double alpha = 1.9;
  double beta = 9.9;
  double gamma = 0.17;
  double lr_teacher = 0.003;
  double lr_distill = 0.005;
  int epochs = 30;
  int batch = 256;
  int warmup = 3;
  double l2 = 0.0;
  std::string mode = "full";
  std::vector<int> ks = {5};
  bool synthetic = false;
  int users = 200;
  int items = 200;
  int latent_dim = 8;
  double bias_strength = 2.0;
  double exposure_skew = 1.0;
  int positives_per_user = 30;
  int runs = 10;
  bool full_catalog = false;
};

// Applies `key=value` lines (keys match the long flag names); blank lines and
// '#' comments are skipped. Unknown keys or bad values name the line.
void apply_config_file(RunConfig& cfg, const std::string& path);

// Canonical one-line-per-field serialization; echoed into the run directory
// and hashed into the config fingerprint.
std::string resolved_config_text(const RunConfig& cfg);

TeacherConfig teacher_config(const RunConfig& cfg);
DistillConfig distill_config(const RunConfig& cfg);
SyntheticConfig synthetic_config(const RunConfig& cfg);

// Entry point behind main(); `args` excludes the program name. Returns the
// process exit code; failures print a one-line diagnostic to stderr.
int run_command(const std::vector<std::string>& args);

}  // namespace kdd
