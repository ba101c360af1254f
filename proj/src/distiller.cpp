#include "kdd/distiller.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "kdd/rng.hpp"

namespace kdd {

namespace {

double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double bce_dp(double p, double y) {
  if (p <= kProbEps || p >= 1.0 - kProbEps) return 0.0;
  return (p - y) / (p * (1.0 - p));
}

void check_batch(const StudentModel& m, std::span<const Interaction> batch) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  for (const Interaction& r : batch) {
    if (r.user_id < 0 || r.user_id >= m.num_users() || r.item_id < 0 ||
        r.item_id >= m.num_items()) {
      throw std::out_of_range("interaction index out of range for student");
    }
  }
}

void validate(const DistillConfig& cfg) {
  if (cfg.gamma < 0.0 || cfg.lr <= 0.0 || cfg.dim < 1 || cfg.epochs < 0 || cfg.batch_size < 1 ||
      cfg.l2 < 0.0) {
    throw std::invalid_argument("invalid distill config");
  }
}

}  // namespace

DistillMode parse_distill_mode(const std::string& name) {
  if (name == "full") return DistillMode::full;
  if (name == "no-variant") return DistillMode::no_variant;
  if (name == "equal-weight") return DistillMode::equal_weight;
  if (name == "no-kd") return DistillMode::no_kd;
  throw std::invalid_argument("unknown mode '" + name +
                              "' (expected full, no-variant, equal-weight, no-kd)");
}

std::string to_string(DistillMode mode) {
  switch (mode) {
    case DistillMode::full: return "full";
    case DistillMode::no_variant: return "no-variant";
    case DistillMode::equal_weight: return "equal-weight";
    case DistillMode::no_kd: return "no-kd";
  }
  return "?";
}

SoftLabel soft_label(double p_inv, double p_var, double gamma) {
  SoftLabel s;
  s.d = std::abs(p_inv - p_var);
  s.w_inv = std::pow(1.0 - s.d, gamma);  // pow(0, 0) = 1, so gamma = 0 always yields w_inv = 1
  s.w_var = 1.0 - s.w_inv;
  s.y_star = s.w_inv * p_inv + s.w_var * p_var;
  return s;
}

SoftLabelSet build_soft_labels(const TeacherModel& teacher, const InteractionTable& data,
                               double gamma, bool equal_weight) {
  if (data.num_users > teacher.num_users() || data.num_items > teacher.num_items() ||
      data.num_envs != teacher.num_envs()) {
    throw std::invalid_argument("build_soft_labels: table and teacher are not index-compatible");
  }
  SoftLabelSet set;
  const size_t n = data.size();
  set.y_star.reserve(n);
  set.y_inv.reserve(n);
  set.y_var.reserve(n);
  set.d.reserve(n);
  set.w_inv.reserve(n);
  for (const Interaction& r : data.interactions) {
    const double p_inv = invariant_score(teacher, r.user_id, r.item_id);
    const double p_var = variant_score(teacher, r.user_id, r.item_id, r.env);
    SoftLabel s = soft_label(p_inv, p_var, gamma);
    if (equal_weight) {
      s.w_inv = 0.5;
      s.w_var = 0.5;
      s.y_star = 0.5 * p_inv + 0.5 * p_var;
    }
    set.y_star.push_back(s.y_star);
    set.y_inv.push_back(p_inv);
    set.y_var.push_back(p_var);
    set.d.push_back(s.d);
    set.w_inv.push_back(s.w_inv);
  }
  return set;
}

double student_score(const StudentModel& m, int u, int i) {
  if (u < 0 || u >= m.num_users() || i < 0 || i >= m.num_items()) {
    throw std::out_of_range("student_score: index out of range");
  }
  return logistic(dot(m.user_emb.row(u), m.item_emb.row(i)));
}

double kd_loss(const StudentModel& m, std::span<const Interaction> batch,
               std::span<const double> targets) {
  check_batch(m, batch);
  if (batch.size() != targets.size()) {
    throw std::invalid_argument("kd_loss: batch and targets are misaligned");
  }
  double total = 0.0;
  for (size_t j = 0; j < batch.size(); ++j) {
    const double p = logistic(dot(m.user_emb.row(batch[j].user_id), m.item_emb.row(batch[j].item_id)));
    total += bce(p, targets[j]);
  }
  return total / static_cast<double>(batch.size());
}

StudentGrads grad_kd_loss(const StudentModel& m, std::span<const Interaction> batch,
                          std::span<const double> targets) {
  check_batch(m, batch);
  if (batch.size() != targets.size()) {
    throw std::invalid_argument("grad_kd_loss: batch and targets are misaligned");
  }
  StudentGrads g;
  g.user_emb = Matrix(m.user_emb.rows, m.dim);
  g.item_emb = Matrix(m.item_emb.rows, m.dim);
  for (size_t j = 0; j < batch.size(); ++j) {
    const int u = batch[j].user_id, i = batch[j].item_id;
    const auto su = m.user_emb.row(u);
    const auto si = m.item_emb.row(i);
    const double p = logistic(dot(su, si));
    const double ds = bce_dp(p, targets[j]) * p * (1.0 - p);
    auto gu = g.user_emb.row(u);
    auto gi = g.item_emb.row(i);
    for (int k = 0; k < m.dim; ++k) {
      gu[k] += ds * si[k];
      gi[k] += ds * su[k];
    }
  }
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  for (double& x : g.user_emb.data) x *= inv_b;
  for (double& x : g.item_emb.data) x *= inv_b;
  return g;
}

StudentModel train_student(const InteractionTable& data, std::span<const double> targets,
                           const DistillConfig& cfg) {
  validate(cfg);
  if (data.empty()) throw std::invalid_argument("train_student: empty data");
  if (data.size() != targets.size()) {
    throw std::invalid_argument("train_student: data and targets are misaligned");
  }

  StudentModel model;
  model.dim = cfg.dim;
  model.user_emb = Matrix(data.num_users, cfg.dim);
  model.item_emb = Matrix(data.num_items, cfg.dim);
  constexpr double kInitStd = 0.1;
  Rng init_rng(cfg.seed, "student-init");
  for (Matrix* t : {&model.user_emb, &model.item_emb}) {
    for (double& x : t->data) x = init_rng.normal(0.0, kInitStd);
  }
  check_batch(model, data.interactions);

  struct Sample {
    Interaction record;
    double target;
  };
  std::vector<Sample> samples;
  samples.reserve(data.size());
  for (size_t j = 0; j < data.size(); ++j) {
    samples.push_back({data.interactions[j], targets[j]});
  }

  Rng shuffle_rng(cfg.seed, "student-shuffle");
  std::vector<Interaction> batch_records(cfg.batch_size);
  std::vector<double> batch_targets(cfg.batch_size);
  const size_t n = samples.size();
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(samples);
    for (size_t start = 0; start < n; start += cfg.batch_size) {
      const size_t len = std::min(static_cast<size_t>(cfg.batch_size), n - start);
      for (size_t j = 0; j < len; ++j) {
        batch_records[j] = samples[start + j].record;
        batch_targets[j] = samples[start + j].target;
      }
      const StudentGrads g = grad_kd_loss(model, {batch_records.data(), len},
                                          {batch_targets.data(), len});
      for (auto [param, grad] : {std::pair{&model.user_emb, &g.user_emb},
                                 std::pair{&model.item_emb, &g.item_emb}}) {
        for (size_t j = 0; j < param->data.size(); ++j) {
          param->data[j] -= cfg.lr * (grad->data[j] + cfg.l2 * param->data[j]);
        }
      }
    }
  }
  return model;
}

std::optional<StudentModel> distill(const TeacherModel& teacher, const InteractionTable& data,
                                    const DistillConfig& cfg) {
  validate(cfg);
  if (data.empty()) throw std::invalid_argument("distill: empty data");
  if (cfg.mode == DistillMode::no_kd) return std::nullopt;

  // Refresh each record's env to the teacher's argmin assignment; the argmin
  // does not depend on the incoming env fields, so this reproduces the final
  // training-time assignment.
  const InteractionTable labelled = reassign_environments(teacher, data);

  SoftLabelSet labels;
  switch (cfg.mode) {
    case DistillMode::full:
      labels = build_soft_labels(teacher, labelled, cfg.gamma);
      break;
    case DistillMode::no_variant:
      labels = build_soft_labels(teacher, labelled, cfg.gamma);
      labels.y_star = labels.y_inv;
      for (double& w : labels.w_inv) w = 1.0;
      break;
    case DistillMode::equal_weight:
      labels = build_soft_labels(teacher, labelled, cfg.gamma, /*equal_weight=*/true);
      break;
    case DistillMode::no_kd:
      break;
  }
  return train_student(labelled, labels.y_star, cfg);
}

StudentModel train_mf_baseline(const InteractionTable& data, const DistillConfig& cfg) {
  validate(cfg);
  if (data.empty()) throw std::invalid_argument("train_mf_baseline: empty data");
  std::vector<double> targets;
  targets.reserve(data.size());
  for (const Interaction& r : data.interactions) targets.push_back(r.label);
  return train_student(data, targets, cfg);
}

double FusedTeacherScorer::score(int u, int i) const {
  const double p_inv = invariant_score(*teacher, u, i);
  const int E = teacher->num_envs();
  double p_var = 0.0;
  for (int e = 0; e < E; ++e) p_var += variant_score(*teacher, u, i, e);
  p_var /= static_cast<double>(E);
  return soft_label(p_inv, p_var, gamma).y_star;
}

}  // namespace kdd
