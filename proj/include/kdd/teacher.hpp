#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "kdd/data.hpp"
#include "kdd/matrix.hpp"

namespace kdd {

// Disentangled preference model: invariant and variant embedding tables, one
// embedding per environment, and a linear environment classifier over the
// invariant interaction vector m = u_inv (*) i_inv.
struct TeacherModel {
  Matrix user_inv, item_inv;
  Matrix user_var, item_var;
  Matrix env_emb;                // num_envs x dim
  Matrix clf_weight;             // dim x num_envs
  std::vector<double> clf_bias;  // num_envs
  int dim = 0;

  int num_users() const { return user_inv.rows; }
  int num_items() const { return item_inv.rows; }
  int num_envs() const { return env_emb.rows; }
};

struct TeacherConfig {
  int dim = 40;
  int num_envs = 2;
  double alpha = 1.9;
  double beta = 9.9;
  double lr = 0.003;
  int epochs = 30;
  int batch_size = 256;
  int warmup_epochs = 3;  // epochs before environment reassignment starts
  double l2 = 0.0;
  bool detach_inv_in_var = false;  // block variant-loss gradients into invariant tables
  uint64_t seed = 0;
};

// Probabilities are clamped to [kProbEps, 1 - kProbEps] before any logarithm.
constexpr double kProbEps = 1e-7;

// Logistic of the component sum of x.
double phi(std::span<const double> x);

// Binary cross entropy with a (possibly soft) target y in [0, 1].
double bce(double p, double y);

// Product fusion of the variant and invariant predictions.
double fuse(double p_var, double p_inv);

double invariant_score(const TeacherModel& m, int u, int i);
double variant_score(const TeacherModel& m, int u, int i, int e);

double loss_inv(const TeacherModel& m, std::span<const Interaction> batch);
double loss_env(const TeacherModel& m, std::span<const Interaction> batch);
double loss_var(const TeacherModel& m, std::span<const Interaction> batch);
double loss_major(const TeacherModel& m, std::span<const Interaction> batch, double alpha,
                  double beta);

// Mean-over-batch gradients, one dense slot per parameter table.
struct TeacherGrads {
  Matrix user_inv, item_inv, user_var, item_var, env_emb, clf_weight;
  std::vector<double> clf_bias;
};

// Gradient of w_inv_loss*L_inv + w_env*L_env + w_var*L_var with respect to
// every parameter table. `detach_inv` drops the variant-loss flow into the
// invariant tables.
TeacherGrads teacher_grads(const TeacherModel& m, std::span<const Interaction> batch,
                           double w_inv_loss, double w_env, double w_var, bool detach_inv = false);

inline TeacherGrads grad_loss_inv(const TeacherModel& m, std::span<const Interaction> b) {
  return teacher_grads(m, b, 1.0, 0.0, 0.0);
}
inline TeacherGrads grad_loss_env(const TeacherModel& m, std::span<const Interaction> b) {
  return teacher_grads(m, b, 0.0, 1.0, 0.0);
}
inline TeacherGrads grad_loss_var(const TeacherModel& m, std::span<const Interaction> b,
                                  bool detach_inv = false) {
  return teacher_grads(m, b, 0.0, 0.0, 1.0, detach_inv);
}
inline TeacherGrads grad_loss_major(const TeacherModel& m, std::span<const Interaction> b,
                                    double alpha, double beta, bool detach_inv = false) {
  return teacher_grads(m, b, 1.0, -alpha, beta, detach_inv);
}

// One SGD step on the classifier minimizing L_env; embeddings untouched.
void classifier_step(TeacherModel& m, std::span<const Interaction> batch, double lr);

// One SGD step on all embedding tables minimizing L_major (the -alpha term
// ascends the classifier loss); classifier untouched; optional L2 decay.
void embedding_step(TeacherModel& m, std::span<const Interaction> batch, double lr, double alpha,
                    double beta, double l2 = 0.0, bool detach_inv_in_var = false);

// env <- argmin over e of bce(fuse(variant, invariant), label), ties toward
// the lowest index. Independent of the current env fields.
InteractionTable reassign_environments(const TeacherModel& m, const InteractionTable& table);

// Fresh model: embeddings ~ Normal(0, 0.1^2) from (seed, "teacher-init") in
// table order user_inv, item_inv, user_var, item_var, env_emb; classifier zero.
TeacherModel init_teacher(const TeacherConfig& cfg, int num_users, int num_items);

// Per epoch: shuffle, then per mini-batch classifier_step followed by
// embedding_step; after each epoch past the warm-up, reassign environments.
TeacherModel train_teacher(const TeacherConfig& cfg, const InteractionTable& data);

}  // namespace kdd
