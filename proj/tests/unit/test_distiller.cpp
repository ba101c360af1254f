#include <cmath>
#include <optional>
#include <vector>

#include "common/builders.hpp"
#include "common/fd.hpp"
#include "doctest.h"
#include "kdd/distiller.hpp"
#include "kdd/rng.hpp"

using namespace kdd;
using testutil::central_diff;
using testutil::random_student;
using testutil::random_table;
using testutil::random_teacher;
using testutil::rel_err;

TEST_CASE("soft_label handles the corner geometries") {
  SUBCASE("agreement keeps the shared prediction for any gamma") {
    for (double gamma : {0.0, 0.17, 1.0, 3.0}) {
      const SoftLabel s = soft_label(0.8, 0.8, gamma);
      CHECK(s.d == 0.0);
      CHECK(s.w_inv == 1.0);
      CHECK(s.y_star == 0.8);
    }
  }
  SUBCASE("full disagreement with positive gamma hands over to the variant head") {
    const SoftLabel s = soft_label(0.0, 1.0, 0.17);
    CHECK(s.d == 1.0);
    CHECK(s.w_inv == 0.0);
    CHECK(s.y_star == 1.0);
  }
  SUBCASE("gamma zero always keeps the invariant head, even at distance one") {
    const SoftLabel tied = soft_label(0.3, 0.9, 0.0);
    CHECK(tied.w_inv == 1.0);
    CHECK(tied.y_star == 0.3);
    const SoftLabel extreme = soft_label(1.0, 0.0, 0.0);  // 0^0 convention
    CHECK(extreme.w_inv == 1.0);
    CHECK(extreme.y_star == 1.0);
  }
  SUBCASE("half distance at the default gamma matches the exp/log oracle") {
    const SoftLabel s = soft_label(0.25, 0.75, 0.17);
    const double oracle = std::exp(0.17 * std::log(0.5));
    CHECK(s.w_inv == doctest::Approx(oracle).epsilon(1e-12));
    CHECK(std::fabs(s.w_inv - 0.8889) <= 1e-4);
    CHECK(s.y_star == doctest::Approx(s.w_inv * 0.25 + (1.0 - s.w_inv) * 0.75).epsilon(1e-15));
  }
}

TEST_CASE("soft_label weights are an exact partition and the fusion is convex") {
  Rng rng(9, "test-softlabel");
  for (int trial = 0; trial < 200; ++trial) {
    const double p_inv = rng.uniform();
    const double p_var = rng.uniform();
    const double gamma = 3.0 * rng.uniform();
    const SoftLabel s = soft_label(p_inv, p_var, gamma);
    CHECK(s.w_inv + s.w_var == 1.0);  // w_var is defined as the complement
    CHECK(s.w_inv >= 0.0);
    CHECK(s.w_inv <= 1.0);
    CHECK(s.y_star >= std::min(p_inv, p_var) - 1e-15);
    CHECK(s.y_star <= std::max(p_inv, p_var) + 1e-15);
    CHECK(s.d == doctest::Approx(std::fabs(p_inv - p_var)).epsilon(1e-15));
  }
}

TEST_CASE("invariant weight decays strictly in distance and gamma") {
  double prev = soft_label(0.5, 0.5, 0.5).w_inv;
  for (double d : {0.1, 0.3, 0.5, 0.7, 0.9}) {
    const double w = soft_label(0.5 - d / 2, 0.5 + d / 2, 0.5).w_inv;
    CHECK(w < prev);
    prev = w;
  }
  prev = soft_label(0.2, 0.7, 0.0).w_inv;
  CHECK(prev == 1.0);
  for (double gamma : {0.1, 0.5, 1.0, 2.0}) {
    const double w = soft_label(0.2, 0.7, gamma).w_inv;
    CHECK(w < prev);
    prev = w;
  }
}

TEST_CASE("build_soft_labels matches per-record fusion of the two heads") {
  const TeacherModel teacher = random_teacher(21, 8, 9, 4, 3);
  const InteractionTable data = random_table(22, 8, 9, 3, 40);

  const SoftLabelSet set = build_soft_labels(teacher, data, 0.17);
  REQUIRE(set.size() == data.size());
  for (size_t j = 0; j < data.size(); ++j) {
    const Interaction& r = data.interactions[j];
    const double p_inv = invariant_score(teacher, r.user_id, r.item_id);
    const double p_var = variant_score(teacher, r.user_id, r.item_id, r.env);
    const SoftLabel s = soft_label(p_inv, p_var, 0.17);
    CHECK(set.y_inv[j] == p_inv);
    CHECK(set.y_var[j] == p_var);
    CHECK(set.d[j] == s.d);
    CHECK(set.w_inv[j] == s.w_inv);
    CHECK(set.y_star[j] == s.y_star);
  }

  SUBCASE("gamma zero collapses onto the invariant head") {
    const SoftLabelSet flat = build_soft_labels(teacher, data, 0.0);
    CHECK(flat.y_star == flat.y_inv);
  }
  SUBCASE("equal_weight pins the mixture at one half") {
    const SoftLabelSet eq = build_soft_labels(teacher, data, 0.17, /*equal_weight=*/true);
    for (size_t j = 0; j < eq.size(); ++j) {
      CHECK(eq.w_inv[j] == 0.5);
      CHECK(eq.y_star[j] ==
            doctest::Approx(0.5 * eq.y_inv[j] + 0.5 * eq.y_var[j]).epsilon(1e-15));
    }
  }
  SUBCASE("record order only permutes the outputs") {
    InteractionTable rev = data;
    std::reverse(rev.interactions.begin(), rev.interactions.end());
    const SoftLabelSet back = build_soft_labels(teacher, rev, 0.17);
    for (size_t j = 0; j < data.size(); ++j) {
      CHECK(back.y_star[data.size() - 1 - j] == set.y_star[j]);
    }
  }
  SUBCASE("incompatible table is rejected") {
    InteractionTable wrong = data;
    wrong.num_users = 99;
    CHECK_THROWS_AS(build_soft_labels(teacher, wrong, 0.17), std::invalid_argument);
  }
}

TEST_CASE("student_score is the logistic dot product") {
  StudentModel zero = random_student(0, 3, 3, 4);
  std::fill(zero.user_emb.data.begin(), zero.user_emb.data.end(), 0.0);
  CHECK(student_score(zero, 0, 0) == 0.5);

  StudentModel m = random_student(1, 3, 4, 5);
  const double s = dot(m.user_emb.row(1), m.item_emb.row(2));
  CHECK(student_score(m, 1, 2) == doctest::Approx(1.0 / (1.0 + std::exp(-s))).epsilon(1e-12));
  CHECK(student_score(m, 1, 2) > 0.0);
  CHECK(student_score(m, 1, 2) < 1.0);

  CHECK_THROWS_AS(student_score(m, 3, 0), std::out_of_range);
  CHECK_THROWS_AS(student_score(m, 0, 4), std::out_of_range);
  CHECK_THROWS_AS(student_score(m, -1, 0), std::out_of_range);
}

TEST_CASE("kd_loss closed forms and alignment checks") {
  StudentModel zero = random_student(0, 4, 4, 3);
  for (Matrix* t : {&zero.user_emb, &zero.item_emb}) {
    std::fill(t->data.begin(), t->data.end(), 0.0);
  }
  const std::vector<Interaction> batch{{0, 0, 1.0, 0}, {1, 1, 0.0, 0}};
  const std::vector<double> half{0.5, 0.5};
  CHECK(kd_loss(zero, batch, half) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  // A strongly aligned pair driving the score toward its own target.
  StudentModel hot = zero;
  for (int k = 0; k < 3; ++k) {
    hot.user_emb.at(0, k) = 10.0;
    hot.item_emb.at(0, k) = 10.0;
  }
  const std::vector<Interaction> one{{0, 0, 1.0, 0}};
  const std::vector<double> ones{1.0};
  CHECK(kd_loss(hot, one, ones) <= 1e-6);

  std::vector<Interaction> doubled = batch;
  doubled.insert(doubled.end(), batch.begin(), batch.end());
  const std::vector<double> half4{0.5, 0.5, 0.5, 0.5};
  CHECK(kd_loss(zero, doubled, half4) == doctest::Approx(kd_loss(zero, batch, half)).epsilon(1e-12));

  CHECK_THROWS_AS(kd_loss(zero, batch, ones), std::invalid_argument);
  CHECK_THROWS_AS(kd_loss(zero, std::vector<Interaction>{}, std::vector<double>{}),
                  std::invalid_argument);
}

TEST_CASE("student gradients match central finite differences") {
  constexpr double kEps = 1e-5;
  constexpr double kTol = 1e-4;
  for (int dim : {2, 8}) {
    for (uint64_t seed = 1; seed <= 5; ++seed) {
      const StudentModel model = random_student(seed, 6, 7, dim);
      const InteractionTable table = random_table(seed + 200, 6, 7, 1, 24);
      Rng trng(seed + 300, "test-targets");
      std::vector<double> targets(table.size());
      for (double& y : targets) y = trng.uniform();

      const StudentGrads g = grad_kd_loss(model, table.interactions, targets);
      StudentModel probe = model;
      std::vector<std::vector<double>*> params{&probe.user_emb.data, &probe.item_emb.data};
      std::vector<const std::vector<double>*> grads{&g.user_emb.data, &g.item_emb.data};
      double max_err = 0.0;
      for (size_t t = 0; t < params.size(); ++t) {
        for (size_t j = 0; j < params[t]->size(); ++j) {
          const double saved = (*params[t])[j];
          const double numeric = central_diff(
              [&](double v) {
                (*params[t])[j] = v;
                return kd_loss(probe, table.interactions, targets);
              },
              saved, kEps);
          (*params[t])[j] = saved;
          max_err = std::max(max_err, rel_err((*grads[t])[j], numeric));
        }
      }
      CAPTURE(dim);
      CAPTURE(seed);
      CHECK(max_err <= kTol);
    }
  }
}

TEST_CASE("distill mode names round-trip") {
  for (DistillMode mode : {DistillMode::full, DistillMode::no_variant, DistillMode::equal_weight,
                           DistillMode::no_kd}) {
    CHECK(parse_distill_mode(to_string(mode)) == mode);
  }
  CHECK(to_string(DistillMode::no_variant) == "no-variant");
  CHECK_THROWS_WITH_AS(parse_distill_mode("bogus"), doctest::Contains("full"),
                       std::invalid_argument);
}

namespace {

DistillConfig small_distill_config(uint64_t seed) {
  DistillConfig cfg;
  cfg.dim = 6;
  cfg.epochs = 8;
  cfg.batch_size = 16;
  cfg.lr = 0.05;
  cfg.seed = seed;
  return cfg;
}

bool students_equal(const StudentModel& a, const StudentModel& b) {
  return a.user_emb.data == b.user_emb.data && a.item_emb.data == b.item_emb.data;
}

}  // namespace

TEST_CASE("distill trains a student against the fused teacher") {
  const TeacherModel teacher = random_teacher(31, 12, 12, 4, 2);
  const InteractionTable data = random_table(32, 12, 12, 2, 80);

  SUBCASE("zero epochs returns the seeded initial student") {
    DistillConfig cfg = small_distill_config(33);
    cfg.epochs = 0;
    const std::optional<StudentModel> s = distill(teacher, data, cfg);
    REQUIRE(s.has_value());
    for (int u = 0; u < 4; ++u) {
      CHECK(student_score(*s, u, u) == doctest::Approx(0.5).epsilon(0.1));
    }
  }

  SUBCASE("same seed is bit-identical, different seed is not") {
    const DistillConfig cfg = small_distill_config(34);
    const auto a = distill(teacher, data, cfg);
    const auto b = distill(teacher, data, cfg);
    REQUIRE(a.has_value());
    REQUIRE(b.has_value());
    CHECK(students_equal(*a, *b));
    DistillConfig other = cfg;
    other.seed = 35;
    CHECK_FALSE(students_equal(*a, *distill(teacher, data, other)));
  }

  SUBCASE("full with gamma zero equals the no-variant ablation bit for bit") {
    DistillConfig full_cfg = small_distill_config(36);
    full_cfg.gamma = 0.0;
    full_cfg.mode = DistillMode::full;
    DistillConfig nv_cfg = full_cfg;
    nv_cfg.mode = DistillMode::no_variant;
    const auto a = distill(teacher, data, full_cfg);
    const auto b = distill(teacher, data, nv_cfg);
    REQUIRE(a.has_value());
    REQUIRE(b.has_value());
    CHECK(students_equal(*a, *b));
  }

  SUBCASE("no-kd skips training entirely") {
    DistillConfig cfg = small_distill_config(37);
    cfg.mode = DistillMode::no_kd;
    CHECK_FALSE(distill(teacher, data, cfg).has_value());
  }

  SUBCASE("training moves scores toward the fused targets") {
    const DistillConfig cfg = small_distill_config(38);
    const auto s = distill(teacher, data, cfg);
    REQUIRE(s.has_value());
    const InteractionTable relabeled = reassign_environments(teacher, data);
    const SoftLabelSet targets = build_soft_labels(teacher, relabeled, cfg.gamma);
    DistillConfig init_cfg = cfg;
    init_cfg.epochs = 0;
    const auto init = distill(teacher, data, init_cfg);
    CHECK(kd_loss(*s, relabeled.interactions, targets.y_star) <
          kd_loss(*init, relabeled.interactions, targets.y_star));
  }

  SUBCASE("invalid configs and empty data are rejected") {
    DistillConfig bad = small_distill_config(39);
    bad.lr = 0.0;
    CHECK_THROWS_AS(distill(teacher, data, bad), std::invalid_argument);
    bad = small_distill_config(39);
    bad.batch_size = 0;
    CHECK_THROWS_AS(distill(teacher, data, bad), std::invalid_argument);
    CHECK_THROWS_AS(distill(teacher, InteractionTable{}, small_distill_config(39)),
                    std::invalid_argument);
  }
}

TEST_CASE("train_student validates target alignment") {
  const InteractionTable data = random_table(41, 5, 5, 1, 12);
  const std::vector<double> short_targets(3, 0.5);
  CHECK_THROWS_AS(train_student(data, short_targets, small_distill_config(42)),
                  std::invalid_argument);
}

TEST_CASE("train_mf_baseline fits observed labels") {
  InteractionTable data = random_table(51, 10, 10, 1, 60);
  for (Interaction& r : data.interactions) r.label = 1.0;
  DistillConfig cfg = small_distill_config(52);
  // The all-ones fit starts near the bilinear saddle at zero, so give it a
  // hot learning rate and room to escape.
  cfg.lr = 0.3;
  cfg.batch_size = 8;
  cfg.epochs = 150;
  const StudentModel m = train_mf_baseline(data, cfg);
  double mean = 0.0;
  for (const Interaction& r : data.interactions) mean += student_score(m, r.user_id, r.item_id);
  mean /= static_cast<double>(data.size());
  CHECK(mean > 0.9);

  const StudentModel again = train_mf_baseline(data, cfg);
  CHECK(students_equal(m, again));
}

TEST_CASE("fused scorer averages the variant head over environments") {
  const TeacherModel teacher = random_teacher(61, 6, 6, 4, 3);
  const FusedTeacherScorer scorer{&teacher, 0.17};
  for (int u = 0; u < 6; ++u) {
    for (int i = 0; i < 6; ++i) {
      const double p_inv = invariant_score(teacher, u, i);
      double p_var = 0.0;
      for (int e = 0; e < 3; ++e) p_var += variant_score(teacher, u, i, e);
      p_var /= 3.0;
      const SoftLabel s = soft_label(p_inv, p_var, 0.17);
      CHECK(scorer.score(u, i) == doctest::Approx(s.y_star).epsilon(1e-12));
      CHECK(scorer.score(u, i) > 0.0);
      CHECK(scorer.score(u, i) < 1.0);
    }
  }
}
