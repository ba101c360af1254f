#include "kdd/cli.hpp"

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>

#include "CLI11.hpp"
#include "kdd/checkpoint.hpp"
#include "kdd/metrics.hpp"

namespace kdd {

namespace fs = std::filesystem;

namespace {

[[noreturn]] void cfg_fail(const std::string& path, int line_no, const std::string& msg) {
  throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + msg);
}

template <class T>
T parse_number(const std::string& path, int line_no, const std::string& key,
               std::string_view value) {
  T v{};
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc{} || ptr != value.data() + value.size()) {
    cfg_fail(path, line_no, "bad value '" + std::string(value) + "' for " + key);
  }
  return v;
}

bool parse_bool(const std::string& path, int line_no, const std::string& key,
                std::string_view value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  cfg_fail(path, line_no, "bad boolean '" + std::string(value) + "' for " + key);
}

std::vector<int> parse_k_list(const std::string& path, int line_no, std::string_view value) {
  std::vector<int> ks;
  size_t start = 0;
  while (start <= value.size()) {
    const size_t comma = value.find(',', start);
    const std::string_view tok =
        value.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
    ks.push_back(parse_number<int>(path, line_no, "k", tok));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  if (ks.empty()) cfg_fail(path, line_no, "k list is empty");
  return ks;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string format_metric(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << text;
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

std::string join_path(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

std::string need_out(const RunConfig& cfg) {
  if (cfg.out.empty()) throw std::runtime_error("--out is required for this command");
  fs::create_directories(cfg.out);
  return cfg.out;
}

void need_file(const std::string& value, const char* flag) {
  if (value.empty()) throw std::runtime_error(std::string(flag) + " is required for this command");
}

// Raw ratings get the usual positive-feedback cut; tables that are already
// 0/1 (synthetic or pre-binarized) pass through unchanged.
InteractionTable binarize_if_needed(const InteractionTable& table) {
  for (const Interaction& r : table.interactions) {
    if (r.label != 0.0 && r.label != 1.0) return binarize(table, 3.0);
  }
  return table;
}

void check_coverage(int model_users, int model_items, const InteractionTable& table,
                    const char* what) {
  if (table.num_users > model_users || table.num_items > model_items) {
    throw std::runtime_error(std::string(what) + " references " + std::to_string(table.num_users) +
                             " users x " + std::to_string(table.num_items) +
                             " items but the checkpoint covers " + std::to_string(model_users) +
                             " x " + std::to_string(model_items));
  }
}

void write_resolved_config(const RunConfig& cfg) {
  write_text_file(join_path(cfg.out, "config.resolved"), resolved_config_text(cfg));
}

// Training table for the train/distill commands. With --unbiased the two
// files are reindexed jointly, so the checkpoint covers the same id universe
// a later jointly-indexed eval will use.
InteractionTable load_train_table(const RunConfig& cfg) {
  if (!cfg.unbiased.empty()) {
    return binarize_if_needed(
        load_interaction_pair(cfg.data, cfg.unbiased, cfg.envs, cfg.seed).first);
  }
  return binarize_if_needed(load_interactions(cfg.data, cfg.envs, cfg.seed));
}

ScoreFn scorer_for(const AnyModel& model, double gamma) {
  if (const auto* t = std::get_if<TeacherModel>(&model)) {
    FusedTeacherScorer fused{t, gamma};
    return [fused](int u, int i) { return fused.score(u, i); };
  }
  const auto& s = std::get<StudentModel>(model);
  return [&s](int u, int i) { return student_score(s, u, i); };
}

struct LoadedPair {
  InteractionTable biased;
  InteractionTable unbiased;
};

// Synthetic generation or a jointly-indexed file pair; labels binarized.
LoadedPair acquire_data(const RunConfig& cfg, const std::string& artifact_dir) {
  LoadedPair pair;
  if (cfg.synthetic) {
    SyntheticData synth = generate_synthetic(synthetic_config(cfg));
    if (!artifact_dir.empty()) {
      write_interactions(synth.biased, join_path(artifact_dir, "biased.tsv"));
      write_interactions(synth.unbiased, join_path(artifact_dir, "unbiased.tsv"));
    }
    pair.biased = std::move(synth.biased);
    pair.unbiased = std::move(synth.unbiased);
  } else {
    if (cfg.data.empty() || cfg.unbiased.empty()) {
      throw std::runtime_error("need --synthetic, or both --data and --unbiased");
    }
    auto [a, b] = load_interaction_pair(cfg.data, cfg.unbiased, cfg.envs, cfg.seed);
    pair.biased = std::move(a);
    pair.unbiased = std::move(b);
  }
  pair.biased = binarize_if_needed(pair.biased);
  pair.unbiased = binarize_if_needed(pair.unbiased);
  return pair;
}

void print_report(std::ostream& os, const MetricReport& r) {
  os << "run_id=" << r.run_id << " seed=" << r.seed << " parameters=" << r.param_count
     << " users_evaluated=" << r.users_evaluated << '\n';
  for (const auto& [k, v] : r.ndcg) {
    os << "  ndcg@" << k << '=' << format_metric(v) << " recall@" << k << '='
       << format_metric(r.recall.at(k)) << '\n';
  }
}

std::string report_text(const MetricReport& r) {
  std::ostringstream os;
  os << "run_id=" << r.run_id << '\n';
  os << "seed=" << r.seed << '\n';
  os << "parameters=" << r.param_count << '\n';
  os << "users_evaluated=" << r.users_evaluated << '\n';
  os << "config_fingerprint=" << r.config_fingerprint << '\n';
  for (const auto& [k, v] : r.ndcg) os << "ndcg@" << k << '=' << format_metric(v) << '\n';
  for (const auto& [k, v] : r.recall) os << "recall@" << k << '=' << format_metric(v) << '\n';
  return os.str();
}

int cmd_synth(const RunConfig& cfg) {
  need_out(cfg);
  SyntheticData synth = generate_synthetic(synthetic_config(cfg));
  const std::string biased_path = join_path(cfg.out, "biased.tsv");
  const std::string unbiased_path = join_path(cfg.out, "unbiased.tsv");
  write_interactions(synth.biased, biased_path);
  write_interactions(synth.unbiased, unbiased_path);
  write_resolved_config(cfg);
  std::cout << "wrote " << biased_path << " (" << synth.biased.size() << " interactions) and "
            << unbiased_path << " (" << synth.unbiased.size() << ")\n";
  return 0;
}

int cmd_train_teacher(const RunConfig& cfg) {
  need_file(cfg.data, "--data");
  need_out(cfg);
  const InteractionTable table = load_train_table(cfg);
  const TeacherModel teacher = train_teacher(teacher_config(cfg), table);
  const std::string ckpt = join_path(cfg.out, "teacher.ckpt");
  save_checkpoint(ckpt, teacher);
  write_resolved_config(cfg);
  std::cout << "teacher: " << teacher.num_users() << " users, " << teacher.num_items()
            << " items, " << count_parameters(teacher) << " parameters -> " << ckpt << '\n';
  return 0;
}

int cmd_distill(const RunConfig& cfg) {
  need_file(cfg.model, "--model");
  need_file(cfg.data, "--data");
  need_out(cfg);
  AnyModel any = load_checkpoint(cfg.model);
  const auto* teacher = std::get_if<TeacherModel>(&any);
  if (!teacher) throw std::runtime_error("distill requires a teacher checkpoint, got a student");
  const InteractionTable table = load_train_table(cfg);
  check_coverage(teacher->num_users(), teacher->num_items(), table, "--data");

  const DistillConfig dc = distill_config(cfg);
  const std::optional<StudentModel> student = distill(*teacher, table, dc);
  write_resolved_config(cfg);
  if (!student) {
    std::cout << "mode no-kd trains no student; evaluate the teacher checkpoint directly\n";
    return 0;
  }
  const std::string ckpt = join_path(cfg.out, "student.ckpt");
  save_checkpoint(ckpt, *student);
  std::cout << "student: " << student->num_users() << " users, " << student->num_items()
            << " items, " << count_parameters(*student) << " parameters -> " << ckpt << '\n';
  return 0;
}

int cmd_train_mf(const RunConfig& cfg) {
  need_file(cfg.data, "--data");
  need_out(cfg);
  const InteractionTable table = load_train_table(cfg);
  const StudentModel model = train_mf_baseline(table, distill_config(cfg));
  const std::string ckpt = join_path(cfg.out, "mf.ckpt");
  save_checkpoint(ckpt, model);
  write_resolved_config(cfg);
  std::cout << "mf baseline: " << model.num_users() << " users, " << model.num_items()
            << " items, " << count_parameters(model) << " parameters -> " << ckpt << '\n';
  return 0;
}

int cmd_eval(const RunConfig& cfg) {
  need_file(cfg.model, "--model");
  need_file(cfg.test, "--test");
  const AnyModel model = load_checkpoint(cfg.model);

  // With --data the test file is reindexed jointly with the training file;
  // alone it must already use the model's contiguous 0-based ids.
  InteractionTable test;
  if (!cfg.data.empty()) {
    test = load_interaction_pair(cfg.data, cfg.test, cfg.envs, cfg.seed).second;
  } else {
    test = load_interactions(cfg.test, cfg.envs, cfg.seed);
  }
  test = binarize_if_needed(test);

  long long params = 0;
  int users = 0, items = 0;
  if (const auto* t = std::get_if<TeacherModel>(&model)) {
    params = count_parameters(*t);
    users = t->num_users();
    items = t->num_items();
  } else {
    const auto& s = std::get<StudentModel>(model);
    params = count_parameters(s);
    users = s.num_users();
    items = s.num_items();
  }
  check_coverage(users, items, test, "--test");

  MetricReport report = evaluate(scorer_for(model, cfg.gamma), test, cfg.ks, cfg.full_catalog);
  report.run_id = fs::path(cfg.model).stem().string();
  report.seed = cfg.seed;
  report.param_count = params;
  report.config_fingerprint = config_fingerprint(resolved_config_text(cfg));

  print_report(std::cout, report);
  if (!cfg.out.empty()) {
    need_out(cfg);
    const std::vector<MetricReport> reports{report};
    write_metrics_csv(join_path(cfg.out, "metrics.csv"), reports);
    write_text_file(join_path(cfg.out, "report.txt"), report_text(report));
    write_resolved_config(cfg);
  }
  return 0;
}

int cmd_stability(const RunConfig& cfg) {
  if (cfg.runs < 2) throw std::runtime_error("--runs must be at least 2");
  const LoadedPair pair = acquire_data(cfg, "");
  const DatasetSplit split = split_unbiased(pair.unbiased, SplitFractions{}, cfg.seed);
  const int k = cfg.ks.front();
  const std::vector<int> kvec{k};

  std::vector<uint64_t> seeds;
  for (int r = 1; r <= cfg.runs; ++r) seeds.push_back(cfg.seed + static_cast<uint64_t>(r));

  const auto eval_scorer = [&](const ScoreFn& fn) {
    const MetricReport rep = evaluate(fn, split.test_unbiased, kvec, cfg.full_catalog);
    return EvalPoint{rep.ndcg.at(k), rep.recall.at(k)};
  };
  const auto kd_run = [&](uint64_t s) {
    TeacherConfig tc = teacher_config(cfg);
    tc.seed = s;
    DistillConfig dc = distill_config(cfg);
    dc.seed = s;
    const TeacherModel teacher = train_teacher(tc, pair.biased);
    const std::optional<StudentModel> student = distill(teacher, pair.biased, dc);
    if (student) {
      return eval_scorer([&](int u, int i) { return student_score(*student, u, i); });
    }
    FusedTeacherScorer fused{&teacher, cfg.gamma};
    return eval_scorer([&](int u, int i) { return fused.score(u, i); });
  };
  const auto mf_run = [&](uint64_t s) {
    DistillConfig dc = distill_config(cfg);
    dc.seed = s;
    const StudentModel model = train_mf_baseline(pair.biased, dc);
    return eval_scorer([&](int u, int i) { return student_score(model, u, i); });
  };

  const StabilitySummary kd = stability_report(kd_run, seeds, k);
  const StabilitySummary mf = stability_report(mf_run, seeds, k);

  std::ostringstream os;
  os << "stability: " << cfg.runs << " runs, seeds " << seeds.front() << ".." << seeds.back()
     << ", k=" << k << '\n';
  const auto line = [&](const char* name, const StabilitySummary& s) {
    os << name << ": ndcg@" << k << " mean=" << format_metric(s.ndcg_mean)
       << " std=" << format_metric(s.ndcg_std) << " | recall@" << k
       << " mean=" << format_metric(s.recall_mean) << " std=" << format_metric(s.recall_std)
       << '\n';
  };
  line("kd-debias", kd);
  line("mf-baseline", mf);
  std::cout << os.str();
  if (!cfg.out.empty()) {
    need_out(cfg);
    write_text_file(join_path(cfg.out, "stability.txt"), os.str());
    write_resolved_config(cfg);
  }
  return 0;
}

int cmd_pipeline(const RunConfig& cfg) {
  need_out(cfg);
  const LoadedPair pair = acquire_data(cfg, cfg.out);
  const DatasetSplit split = split_unbiased(pair.unbiased, SplitFractions{}, cfg.seed);

  const TeacherModel teacher = train_teacher(teacher_config(cfg), pair.biased);
  save_checkpoint(join_path(cfg.out, "teacher.ckpt"), teacher);

  const std::string fingerprint = config_fingerprint(resolved_config_text(cfg));
  std::vector<MetricReport> reports;

  FusedTeacherScorer fused{&teacher, cfg.gamma};
  MetricReport teacher_report = evaluate([&](int u, int i) { return fused.score(u, i); },
                                         split.test_unbiased, cfg.ks, cfg.full_catalog);
  teacher_report.run_id = "teacher-fusion";
  teacher_report.seed = cfg.seed;
  teacher_report.param_count = count_parameters(teacher);
  teacher_report.config_fingerprint = fingerprint;
  reports.push_back(std::move(teacher_report));

  const std::optional<StudentModel> student = distill(teacher, pair.biased, distill_config(cfg));
  if (student) {
    save_checkpoint(join_path(cfg.out, "student.ckpt"), *student);
    MetricReport student_report =
        evaluate([&](int u, int i) { return student_score(*student, u, i); }, split.test_unbiased,
                 cfg.ks, cfg.full_catalog);
    student_report.run_id = "student";
    student_report.seed = cfg.seed;
    student_report.param_count = count_parameters(*student);
    student_report.config_fingerprint = fingerprint;
    reports.push_back(std::move(student_report));
  }

  write_metrics_csv(join_path(cfg.out, "metrics.csv"), reports);
  write_resolved_config(cfg);
  for (const MetricReport& r : reports) print_report(std::cout, r);
  return 0;
}

}  // namespace

void apply_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file '" + path + "'");
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos) cfg_fail(path, line_no, "expected key=value, got '" + line + "'");
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);

    if (key == "data") cfg.data = value;
    else if (key == "unbiased") cfg.unbiased = value;
    else if (key == "out") cfg.out = value;
    else if (key == "model") cfg.model = value;
    else if (key == "test") cfg.test = value;
    else if (key == "seed") cfg.seed = parse_number<uint64_t>(path, line_no, key, value);
    else if (key == "dim") cfg.dim = parse_number<int>(path, line_no, key, value);
    else if (key == "envs") cfg.envs = parse_number<int>(path, line_no, key, value);
    else if (key == "alpha") cfg.alpha = parse_number<double>(path, line_no, key, value);
    else if (key == "beta") cfg.beta = parse_number<double>(path, line_no, key, value);
    else if (key == "gamma") cfg.gamma = parse_number<double>(path, line_no, key, value);
    else if (key == "lr-teacher") cfg.lr_teacher = parse_number<double>(path, line_no, key, value);
    else if (key == "lr-distill") cfg.lr_distill = parse_number<double>(path, line_no, key, value);
    else if (key == "epochs") cfg.epochs = parse_number<int>(path, line_no, key, value);
    else if (key == "batch") cfg.batch = parse_number<int>(path, line_no, key, value);
    else if (key == "warmup") cfg.warmup = parse_number<int>(path, line_no, key, value);
    else if (key == "l2") cfg.l2 = parse_number<double>(path, line_no, key, value);
    else if (key == "mode") cfg.mode = value;
    else if (key == "k") cfg.ks = parse_k_list(path, line_no, value);
    else if (key == "synthetic") cfg.synthetic = parse_bool(path, line_no, key, value);
    else if (key == "users") cfg.users = parse_number<int>(path, line_no, key, value);
    else if (key == "items") cfg.items = parse_number<int>(path, line_no, key, value);
    else if (key == "latent-dim") cfg.latent_dim = parse_number<int>(path, line_no, key, value);
    else if (key == "bias-strength") cfg.bias_strength = parse_number<double>(path, line_no, key, value);
    else if (key == "exposure-skew") cfg.exposure_skew = parse_number<double>(path, line_no, key, value);
    else if (key == "positives-per-user") cfg.positives_per_user = parse_number<int>(path, line_no, key, value);
    else if (key == "runs") cfg.runs = parse_number<int>(path, line_no, key, value);
    else if (key == "full-catalog") cfg.full_catalog = parse_bool(path, line_no, key, value);
    else cfg_fail(path, line_no, "unknown key '" + key + "'");
  }
}

std::string resolved_config_text(const RunConfig& cfg) {
  std::ostringstream os;
  os << "data=" << cfg.data << '\n';
  os << "unbiased=" << cfg.unbiased << '\n';
  os << "out=" << cfg.out << '\n';
  os << "model=" << cfg.model << '\n';
  os << "test=" << cfg.test << '\n';
  os << "seed=" << cfg.seed << '\n';
  os << "dim=" << cfg.dim << '\n';
  os << "envs=" << cfg.envs << '\n';
  os << "alpha=" << format_double(cfg.alpha) << '\n';
  os << "beta=" << format_double(cfg.beta) << '\n';
  os << "gamma=" << format_double(cfg.gamma) << '\n';
  os << "lr-teacher=" << format_double(cfg.lr_teacher) << '\n';
  os << "lr-distill=" << format_double(cfg.lr_distill) << '\n';
  os << "epochs=" << cfg.epochs << '\n';
  os << "batch=" << cfg.batch << '\n';
  os << "warmup=" << cfg.warmup << '\n';
  os << "l2=" << format_double(cfg.l2) << '\n';
  os << "mode=" << cfg.mode << '\n';
  os << "k=";
  for (size_t i = 0; i < cfg.ks.size(); ++i) {
    if (i) os << ',';
    os << cfg.ks[i];
  }
  os << '\n';
  os << "synthetic=" << (cfg.synthetic ? "true" : "false") << '\n';
  os << "users=" << cfg.users << '\n';
  os << "items=" << cfg.items << '\n';
  os << "latent-dim=" << cfg.latent_dim << '\n';
  os << "bias-strength=" << format_double(cfg.bias_strength) << '\n';
  os << "exposure-skew=" << format_double(cfg.exposure_skew) << '\n';
  os << "positives-per-user=" << cfg.positives_per_user << '\n';
  os << "runs=" << cfg.runs << '\n';
  os << "full-catalog=" << (cfg.full_catalog ? "true" : "false") << '\n';
  return os.str();
}

TeacherConfig teacher_config(const RunConfig& cfg) {
  TeacherConfig tc;
  tc.dim = cfg.dim;
  tc.num_envs = cfg.envs;
  tc.alpha = cfg.alpha;
  tc.beta = cfg.beta;
  tc.lr = cfg.lr_teacher;
  tc.epochs = cfg.epochs;
  tc.batch_size = cfg.batch;
  tc.warmup_epochs = cfg.warmup;
  tc.l2 = cfg.l2;
  tc.seed = cfg.seed;
  return tc;
}

DistillConfig distill_config(const RunConfig& cfg) {
  DistillConfig dc;
  dc.gamma = cfg.gamma;
  dc.lr = cfg.lr_distill;
  dc.dim = cfg.dim;
  dc.epochs = cfg.epochs;
  dc.batch_size = cfg.batch;
  dc.l2 = cfg.l2;
  dc.seed = cfg.seed;
  dc.mode = parse_distill_mode(cfg.mode);
  return dc;
}

SyntheticConfig synthetic_config(const RunConfig& cfg) {
  SyntheticConfig sc;
  sc.num_users = cfg.users;
  sc.num_items = cfg.items;
  sc.latent_dim = cfg.latent_dim;
  sc.num_envs = cfg.envs;
  sc.bias_strength = cfg.bias_strength;
  sc.exposure_skew = cfg.exposure_skew;
  sc.positives_per_user = cfg.positives_per_user;
  sc.seed = cfg.seed;
  return sc;
}

int run_command(const std::vector<std::string>& args) {
  RunConfig cfg;

  // The config file is applied before flag parsing so flags win.
  try {
    for (size_t i = 0; i < args.size(); ++i) {
      if (args[i] == "--config" && i + 1 < args.size()) {
        apply_config_file(cfg, args[i + 1]);
      } else if (args[i].rfind("--config=", 0) == 0) {
        apply_config_file(cfg, args[i].substr(9));
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }

  CLI::App app{"Debiased recommendation: adversarially disentangled teacher distilled into a lightweight MF student"};
  app.require_subcommand(1);

  std::string config_path;  // consumed by the pre-scan above
  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--data", cfg.data, "biased interaction TSV");
    sub->add_option("--unbiased", cfg.unbiased, "uniformly-logged TSV; evaluation source, and pins the joint id universe for training commands");
    sub->add_option("--out", cfg.out, "output directory");
    sub->add_option("--model", cfg.model, "checkpoint path");
    sub->add_option("--test", cfg.test, "test interaction TSV");
    sub->add_option("--config", config_path, "key=value config file; flags override it");
    sub->add_option("--seed", cfg.seed, "root random seed");
    sub->add_option("--dim", cfg.dim, "embedding dimension");
    sub->add_option("--envs", cfg.envs, "number of environments");
    sub->add_option("--alpha", cfg.alpha, "adversary weight in the embedding objective");
    sub->add_option("--beta", cfg.beta, "variant-loss weight in the embedding objective");
    sub->add_option("--gamma", cfg.gamma, "distance-fusion temperature");
    sub->add_option("--lr-teacher", cfg.lr_teacher, "teacher learning rate");
    sub->add_option("--lr-distill", cfg.lr_distill, "student and MF learning rate");
    sub->add_option("--epochs", cfg.epochs, "training epochs");
    sub->add_option("--batch", cfg.batch, "mini-batch size");
    sub->add_option("--warmup", cfg.warmup, "epochs before environment reassignment");
    sub->add_option("--l2", cfg.l2, "L2 weight decay");
    sub->add_option("--mode", cfg.mode, "distillation mode: full, no-variant, equal-weight, no-kd");
    sub->add_option("--k", cfg.ks, "metric cutoff, repeatable");
    sub->add_flag("--synthetic,!--no-synthetic", cfg.synthetic, "generate synthetic data instead of loading files");
    sub->add_option("--users", cfg.users, "synthetic user count");
    sub->add_option("--items", cfg.items, "synthetic item count");
    sub->add_option("--latent-dim", cfg.latent_dim, "synthetic ground-truth latent dimension");
    sub->add_option("--bias-strength", cfg.bias_strength, "synthetic confounder strength");
    sub->add_option("--exposure-skew", cfg.exposure_skew, "synthetic popularity skew exponent");
    sub->add_option("--positives-per-user", cfg.positives_per_user, "synthetic interactions per user per table");
    sub->add_option("--runs", cfg.runs, "stability repetitions");
    sub->add_flag("--full-catalog,!--no-full-catalog", cfg.full_catalog, "rank the whole catalog instead of the user's own test items");
  };

  CLI::App* synth = app.add_subcommand("synth", "Write a synthetic biased/unbiased TSV pair");
  CLI::App* train_teacher_cmd = app.add_subcommand("train-teacher", "Train the disentangled teacher on a biased log");
  CLI::App* distill_cmd = app.add_subcommand("distill", "Distill a teacher checkpoint into an MF student");
  CLI::App* train_mf_cmd = app.add_subcommand("train-mf", "Train the plain MF baseline on observed labels");
  CLI::App* eval_cmd = app.add_subcommand("eval", "Score a test table with a checkpoint and report NDCG/Recall");
  CLI::App* stability_cmd = app.add_subcommand("stability", "Repeat train+eval across seeds and report mean/std");
  CLI::App* pipeline_cmd = app.add_subcommand("pipeline", "Data, teacher, student, evaluation in one run");
  for (CLI::App* sub : {synth, train_teacher_cmd, distill_cmd, train_mf_cmd, eval_cmd,
                        stability_cmd, pipeline_cmd}) {
    add_common(sub);
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (synth->parsed()) return cmd_synth(cfg);
    if (train_teacher_cmd->parsed()) return cmd_train_teacher(cfg);
    if (distill_cmd->parsed()) return cmd_distill(cfg);
    if (train_mf_cmd->parsed()) return cmd_train_mf(cfg);
    if (eval_cmd->parsed()) return cmd_eval(cfg);
    if (stability_cmd->parsed()) return cmd_stability(cfg);
    if (pipeline_cmd->parsed()) return cmd_pipeline(cfg);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  std::cerr << "error: no subcommand selected\n";
  return 1;
}

}  // namespace kdd
