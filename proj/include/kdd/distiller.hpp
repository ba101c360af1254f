#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kdd/data.hpp"
#include "kdd/matrix.hpp"
#include "kdd/teacher.hpp"

namespace kdd {

// Lightweight matrix-factorization student: one user and one item table.
struct StudentModel {
  Matrix user_emb, item_emb;
  int dim = 0;

  int num_users() const { return user_emb.rows; }
  int num_items() const { return item_emb.rows; }
};

enum class DistillMode { full, no_variant, equal_weight, no_kd };

// Accepts "full", "no-variant", "equal-weight", "no-kd"; throws otherwise.
DistillMode parse_distill_mode(const std::string& name);
std::string to_string(DistillMode mode);

struct DistillConfig {
  double gamma = 0.17;
  double lr = 0.005;
  int dim = 40;
  int epochs = 30;
  int batch_size = 256;
  double l2 = 0.0;
  uint64_t seed = 0;
  DistillMode mode = DistillMode::full;
};

// Distance-aware fusion of the two teacher heads.
struct SoftLabel {
  double y_star;  // fused target, a convex combination of the inputs
  double d;       // |p_inv - p_var|
  double w_inv;   // (1 - d)^gamma
  double w_var;   // 1 - w_inv
};

// d = |p_inv - p_var|; w_inv = (1-d)^gamma; y* = w_inv*p_inv + w_var*p_var.
SoftLabel soft_label(double p_inv, double p_var, double gamma);

// Per-interaction fused teacher predictions, aligned with the table order.
struct SoftLabelSet {
  std::vector<double> y_star, y_inv, y_var, d, w_inv;
  size_t size() const { return y_star.size(); }
};

// One fused target per interaction, using each record's env label for the
// variant head. `equal_weight` fixes w_inv = 0.5 instead of the
// distance-aware weight.
SoftLabelSet build_soft_labels(const TeacherModel& teacher, const InteractionTable& data,
                               double gamma, bool equal_weight = false);

// Logistic of the dot product of the two student rows.
double student_score(const StudentModel& m, int u, int i);

// Mean bce(student_score, target) over the batch; targets aligned by index.
double kd_loss(const StudentModel& m, std::span<const Interaction> batch,
               std::span<const double> targets);

struct StudentGrads {
  Matrix user_emb, item_emb;
};
StudentGrads grad_kd_loss(const StudentModel& m, std::span<const Interaction> batch,
                          std::span<const double> targets);

// SGD on kd_loss against the given targets; init and streams mirror the
// teacher's (Normal(0, 0.1^2), purpose-labelled seeds).
StudentModel train_student(const InteractionTable& data, std::span<const double> targets,
                           const DistillConfig& cfg);

// Builds mode-specific soft labels from the frozen teacher (after refreshing
// each record's env to the teacher's argmin assignment) and trains a student.
// Mode no-kd trains nothing and returns nullopt; evaluate the teacher fusion
// directly via FusedTeacherScorer.
std::optional<StudentModel> distill(const TeacherModel& teacher, const InteractionTable& data,
                                    const DistillConfig& cfg);

// Same architecture and trainer as the student, targets = observed labels.
StudentModel train_mf_baseline(const InteractionTable& data, const DistillConfig& cfg);

// Scores arbitrary pairs with the distance-aware fusion; the variant head is
// averaged over environments, since unseen pairs carry no env label.
struct FusedTeacherScorer {
  const TeacherModel* teacher = nullptr;
  double gamma = 0.17;

  double score(int u, int i) const;
};

}  // namespace kdd
