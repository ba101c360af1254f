#include "kdd/teacher.hpp"

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

double clamp_prob(double p) { return std::clamp(p, kProbEps, 1.0 - kProbEps); }

// Derivative of the clamped bce with respect to its probability argument;
// zero in the clamp region, where the loss is flat.
double bce_dp(double p, double y) {
  if (p <= kProbEps || p >= 1.0 - kProbEps) return 0.0;
  return (p - y) / (p * (1.0 - p));
}

void check_batch(const TeacherModel& m, std::span<const Interaction> batch) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  for (const Interaction& r : batch) {
    if (r.user_id < 0 || r.user_id >= m.num_users() || r.item_id < 0 ||
        r.item_id >= m.num_items() || r.env < 0 || r.env >= m.num_envs()) {
      throw std::out_of_range("interaction index out of range for model");
    }
  }
}

double inv_score_raw(const TeacherModel& m, int u, int i) {
  return logistic(dot(m.user_inv.row(u), m.item_inv.row(i)));
}

double var_score_raw(const TeacherModel& m, int u, int i, int e) {
  const auto uv = m.user_var.row(u);
  const auto iv = m.item_var.row(i);
  const auto q = m.env_emb.row(e);
  double s = 0.0;
  for (int k = 0; k < m.dim; ++k) s += uv[k] * iv[k] * q[k];
  return logistic(s);
}

// Multiclass cross entropy of the linear classifier on m, via logsumexp.
double env_ce(const TeacherModel& m, std::span<const double> mvec, int env,
              std::span<double> logits) {
  const int E = m.num_envs();
  for (int c = 0; c < E; ++c) {
    double z = m.clf_bias[c];
    for (int k = 0; k < m.dim; ++k) z += m.clf_weight.at(k, c) * mvec[k];
    logits[c] = z;
  }
  const double zmax = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (int c = 0; c < E; ++c) sum += std::exp(logits[c] - zmax);
  return zmax + std::log(sum) - logits[env];
}

}  // namespace

double phi(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v;
  return logistic(s);
}

double bce(double p, double y) {
  const double pc = clamp_prob(p);
  return -(y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc));
}

double fuse(double p_var, double p_inv) { return p_var * p_inv; }

double invariant_score(const TeacherModel& m, int u, int i) {
  if (u < 0 || u >= m.num_users() || i < 0 || i >= m.num_items()) {
    throw std::out_of_range("invariant_score: index out of range");
  }
  return inv_score_raw(m, u, i);
}

double variant_score(const TeacherModel& m, int u, int i, int e) {
  if (u < 0 || u >= m.num_users() || i < 0 || i >= m.num_items() || e < 0 || e >= m.num_envs()) {
    throw std::out_of_range("variant_score: index out of range");
  }
  return var_score_raw(m, u, i, e);
}

double loss_inv(const TeacherModel& m, std::span<const Interaction> batch) {
  check_batch(m, batch);
  double total = 0.0;
  for (const Interaction& r : batch) {
    total += bce(inv_score_raw(m, r.user_id, r.item_id), r.label);
  }
  return total / static_cast<double>(batch.size());
}

double loss_env(const TeacherModel& m, std::span<const Interaction> batch) {
  check_batch(m, batch);
  std::vector<double> mvec(m.dim), logits(m.num_envs());
  double total = 0.0;
  for (const Interaction& r : batch) {
    const auto ui = m.user_inv.row(r.user_id);
    const auto ii = m.item_inv.row(r.item_id);
    for (int k = 0; k < m.dim; ++k) mvec[k] = ui[k] * ii[k];
    total += env_ce(m, mvec, r.env, logits);
  }
  return total / static_cast<double>(batch.size());
}

double loss_var(const TeacherModel& m, std::span<const Interaction> batch) {
  check_batch(m, batch);
  double total = 0.0;
  for (const Interaction& r : batch) {
    const double p_inv = inv_score_raw(m, r.user_id, r.item_id);
    const double p_var = var_score_raw(m, r.user_id, r.item_id, r.env);
    total += bce(fuse(p_var, p_inv), r.label);
  }
  return total / static_cast<double>(batch.size());
}

double loss_major(const TeacherModel& m, std::span<const Interaction> batch, double alpha,
                  double beta) {
  return loss_inv(m, batch) - alpha * loss_env(m, batch) + beta * loss_var(m, batch);
}

TeacherGrads teacher_grads(const TeacherModel& m, std::span<const Interaction> batch,
                           double w_inv_loss, double w_env, double w_var, bool detach_inv) {
  check_batch(m, batch);
  const int D = m.dim;
  const int E = m.num_envs();
  TeacherGrads g;
  g.user_inv = Matrix(m.user_inv.rows, D);
  g.item_inv = Matrix(m.item_inv.rows, D);
  g.user_var = Matrix(m.user_var.rows, D);
  g.item_var = Matrix(m.item_var.rows, D);
  g.env_emb = Matrix(E, D);
  g.clf_weight = Matrix(D, E);
  g.clf_bias.assign(E, 0.0);

  std::vector<double> mvec(D), logits(E), softmax(E);
  for (const Interaction& r : batch) {
    const int u = r.user_id, i = r.item_id, e = r.env;
    const double y = r.label;
    const auto ui = m.user_inv.row(u);
    const auto ii = m.item_inv.row(i);
    double s_inv = 0.0;
    for (int k = 0; k < D; ++k) {
      mvec[k] = ui[k] * ii[k];
      s_inv += mvec[k];
    }
    const double p_inv = logistic(s_inv);

    // d/ds_inv of the weighted loss, accumulated over the L_inv and L_var paths.
    double d_sinv = w_inv_loss * bce_dp(p_inv, y) * p_inv * (1.0 - p_inv);

    double d_svar = 0.0;
    const auto uv = m.user_var.row(u);
    const auto iv = m.item_var.row(i);
    const auto q = m.env_emb.row(e);
    if (w_var != 0.0) {
      double s_var = 0.0;
      for (int k = 0; k < D; ++k) s_var += uv[k] * iv[k] * q[k];
      const double p_var = logistic(s_var);
      const double df = bce_dp(fuse(p_var, p_inv), y);
      d_svar = w_var * df * p_inv * p_var * (1.0 - p_var);
      if (!detach_inv) d_sinv += w_var * df * p_var * p_inv * (1.0 - p_inv);
    }

    if (w_env != 0.0) {
      for (int c = 0; c < E; ++c) {
        double z = m.clf_bias[c];
        for (int k = 0; k < D; ++k) z += m.clf_weight.at(k, c) * mvec[k];
        logits[c] = z;
      }
      const double zmax = *std::max_element(logits.begin(), logits.end());
      double sum = 0.0;
      for (int c = 0; c < E; ++c) {
        softmax[c] = std::exp(logits[c] - zmax);
        sum += softmax[c];
      }
      for (int c = 0; c < E; ++c) softmax[c] /= sum;

      auto gu = g.user_inv.row(u);
      auto gi = g.item_inv.row(i);
      for (int c = 0; c < E; ++c) {
        const double dz = w_env * (softmax[c] - (c == e ? 1.0 : 0.0));
        g.clf_bias[c] += dz;
        for (int k = 0; k < D; ++k) {
          g.clf_weight.at(k, c) += dz * mvec[k];
          const double dm = dz * m.clf_weight.at(k, c);
          gu[k] += dm * ii[k];
          gi[k] += dm * ui[k];
        }
      }
    }

    auto gui = g.user_inv.row(u);
    auto gii = g.item_inv.row(i);
    for (int k = 0; k < D; ++k) {
      gui[k] += d_sinv * ii[k];
      gii[k] += d_sinv * ui[k];
    }
    if (d_svar != 0.0) {
      auto guv = g.user_var.row(u);
      auto giv = g.item_var.row(i);
      auto gq = g.env_emb.row(e);
      for (int k = 0; k < D; ++k) {
        guv[k] += d_svar * iv[k] * q[k];
        giv[k] += d_svar * uv[k] * q[k];
        gq[k] += d_svar * uv[k] * iv[k];
      }
    }
  }

  const double inv_b = 1.0 / static_cast<double>(batch.size());
  for (Matrix* t : {&g.user_inv, &g.item_inv, &g.user_var, &g.item_var, &g.env_emb, &g.clf_weight}) {
    for (double& x : t->data) x *= inv_b;
  }
  for (double& x : g.clf_bias) x *= inv_b;
  return g;
}

void classifier_step(TeacherModel& m, std::span<const Interaction> batch, double lr) {
  const TeacherGrads g = teacher_grads(m, batch, 0.0, 1.0, 0.0);
  for (size_t j = 0; j < m.clf_weight.data.size(); ++j) {
    m.clf_weight.data[j] -= lr * g.clf_weight.data[j];
  }
  for (size_t c = 0; c < m.clf_bias.size(); ++c) {
    m.clf_bias[c] -= lr * g.clf_bias[c];
  }
}

void embedding_step(TeacherModel& m, std::span<const Interaction> batch, double lr, double alpha,
                    double beta, double l2, bool detach_inv_in_var) {
  const TeacherGrads g = teacher_grads(m, batch, 1.0, -alpha, beta, detach_inv_in_var);
  const std::pair<Matrix*, const Matrix*> tables[] = {
      {&m.user_inv, &g.user_inv}, {&m.item_inv, &g.item_inv}, {&m.user_var, &g.user_var},
      {&m.item_var, &g.item_var}, {&m.env_emb, &g.env_emb},
  };
  for (const auto& [param, grad] : tables) {
    for (size_t j = 0; j < param->data.size(); ++j) {
      param->data[j] -= lr * (grad->data[j] + l2 * param->data[j]);
    }
  }
}

namespace {

void relabel(const TeacherModel& m, std::span<Interaction> records) {
  const int E = m.num_envs();
  for (Interaction& r : records) {
    const double p_inv = inv_score_raw(m, r.user_id, r.item_id);
    int best = 0;
    double best_loss = bce(fuse(var_score_raw(m, r.user_id, r.item_id, 0), p_inv), r.label);
    for (int e = 1; e < E; ++e) {
      const double l = bce(fuse(var_score_raw(m, r.user_id, r.item_id, e), p_inv), r.label);
      if (l < best_loss) {
        best_loss = l;
        best = e;
      }
    }
    r.env = best;
  }
}

}  // namespace

InteractionTable reassign_environments(const TeacherModel& m, const InteractionTable& table) {
  if (table.num_users > m.num_users() || table.num_items > m.num_items() ||
      table.num_envs != m.num_envs()) {
    throw std::invalid_argument("reassign_environments: table and model are not index-compatible");
  }
  InteractionTable out = table;
  check_batch(m, out.interactions);
  relabel(m, out.interactions);
  return out;
}

TeacherModel init_teacher(const TeacherConfig& cfg, int num_users, int num_items) {
  if (cfg.dim < 1 || cfg.num_envs < 1 || num_users < 1 || num_items < 1) {
    throw std::invalid_argument("init_teacher: counts and dim must be >= 1");
  }
  TeacherModel m;
  m.dim = cfg.dim;
  m.user_inv = Matrix(num_users, cfg.dim);
  m.item_inv = Matrix(num_items, cfg.dim);
  m.user_var = Matrix(num_users, cfg.dim);
  m.item_var = Matrix(num_items, cfg.dim);
  m.env_emb = Matrix(cfg.num_envs, cfg.dim);
  m.clf_weight = Matrix(cfg.dim, cfg.num_envs);
  m.clf_bias.assign(cfg.num_envs, 0.0);

  constexpr double kInitStd = 0.1;
  Rng rng(cfg.seed, "teacher-init");
  for (Matrix* t : {&m.user_inv, &m.item_inv, &m.user_var, &m.item_var, &m.env_emb}) {
    for (double& x : t->data) x = rng.normal(0.0, kInitStd);
  }
  return m;
}

TeacherModel train_teacher(const TeacherConfig& cfg, const InteractionTable& data) {
  if (cfg.lr <= 0.0 || cfg.batch_size < 1 || cfg.epochs < 0 || cfg.warmup_epochs < 0 ||
      cfg.l2 < 0.0) {
    throw std::invalid_argument("train_teacher: invalid config");
  }
  if (data.empty()) throw std::invalid_argument("train_teacher: empty data");
  if (data.num_envs != cfg.num_envs) {
    throw std::invalid_argument("train_teacher: table num_envs differs from config");
  }

  TeacherModel model = init_teacher(cfg, data.num_users, data.num_items);
  check_batch(model, data.interactions);

  std::vector<Interaction> records = data.interactions;
  Rng shuffle_rng(cfg.seed, "teacher-shuffle");
  const size_t n = records.size();
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(records);
    for (size_t start = 0; start < n; start += cfg.batch_size) {
      const size_t len = std::min(static_cast<size_t>(cfg.batch_size), n - start);
      const std::span<const Interaction> batch(records.data() + start, len);
      classifier_step(model, batch, cfg.lr);
      embedding_step(model, batch, cfg.lr, cfg.alpha, cfg.beta, cfg.l2, cfg.detach_inv_in_var);
    }
    if (epoch >= cfg.warmup_epochs && cfg.num_envs > 1) {
      relabel(model, records);
    }
  }
  return model;
}

}  // namespace kdd
