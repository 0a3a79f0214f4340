#include <cmath>
#include <cstdint>
#include <vector>

#include "attrishield/baselines.hpp"
#include "attrishield/classify.hpp"
#include "attrishield/core.hpp"
#include "attrishield/eval.hpp"
#include "doctest.h"

using attrishield::core::Dataset;
using attrishield::core::Rng;
using attrishield::core::SeedSpec;
using attrishield::core::SynthConfig;
using attrishield::core::UserRow;
using attrishield::core::Vec;
using namespace attrishield::eval;
namespace classify = attrishield::classify;

namespace {

struct Suite {
  Dataset train;
  Dataset test;
  attrishield::classify::LinearSoftmaxModel model;
};

/// Small labeled suite with a linear defender accurate enough to attack.
const Suite& small_suite() {
  static const Suite suite = [] {
    SynthConfig cfg;
    cfg.d = 40;
    cfg.m = 3;
    cfg.n = 360;
    cfg.sparsity = 6.0;
    const auto full = attrishield::core::synth_generate(cfg, SeedSpec{909});
    auto [a, b] = attrishield::core::split_overlap(full, 0.0, SeedSpec{909});
    attrishield::classify::TrainConfig tc;
    tc.epochs = 120;
    tc.learning_rate = 0.5;
    tc.seed = 909;
    Suite s{std::move(a), std::move(b), {}};
    s.model = attrishield::classify::train_linear(s.train, tc);
    return s;
  }();
  return suite;
}

classify::PredictFn wrap(const attrishield::classify::Classifier& model) {
  return [&model](const Vec& x) {
    return attrishield::classify::predict(model, x);
  };
}

}  // namespace

TEST_CASE("run_attack equals plain accuracy without noise") {
  const auto& s = small_suite();
  CHECK(run_attack(wrap(s.model), s.test) ==
        doctest::Approx(classify::accuracy(s.model, s.test)));
}

TEST_CASE("constant baseline attacker ignores defenses") {
  const auto& s = small_suite();
  const int modal = classify::baseline_most_popular(s.train.labels());
  const classify::PredictFn ba = [modal](const Vec&) { return modal; };
  const double before = run_attack(ba, s.test);

  attrishield::baselines::RrConfig rr;
  rr.epsilon = 0.0;
  Dataset scrambled = s.test;
  for (std::size_t i = 0; i < scrambled.size(); ++i) {
    scrambled.rows[i].x = attrishield::baselines::rr_defend(
        scrambled.rows[i].x, rr,
        attrishield::core::derive_seed(4, scrambled.rows[i].user_id, "rr"));
  }
  CHECK(run_attack(ba, scrambled) == doctest::Approx(before));

  // Full randomization pushes a trained attacker down toward the baseline.
  CHECK(run_attack(wrap(s.model), scrambled) <= before + 0.1);
}

TEST_CASE("defend_dataset at zero budget is the identity") {
  const auto& s = small_suite();
  attrishield::evade::PandaConfig cfg;
  const auto noises = phase_one(s.model, s.test, cfg.policy, cfg, 2);
  const auto defended = defend_dataset(
      s.test, noises, attrishield::mechanism::target_uniform(3), 0.0,
      SeedSpec{11}, 2);
  CHECK(defended.mean_l0 == doctest::Approx(0.0));
  CHECK(defended.mean_l2 == doctest::Approx(0.0));
  for (std::size_t i = 0; i < s.test.size(); ++i) {
    CHECK(defended.data.rows[i].x == s.test.rows[i].x);
  }
}

TEST_CASE("sweep rows: zero-budget accuracy, budget bound, determinism") {
  const auto& s = small_suite();
  const std::vector<double> betas = {0.0, 1.0, 2.0, 4.0};
  const std::vector<NamedAttacker> attackers = {
      {"lr", wrap(s.model)},
  };
  attrishield::evade::PandaConfig cfg;
  const auto p = attrishield::mechanism::target_uniform(3);

  const auto sweep = sweep_budget(s.model, attackers, s.test, betas,
                                  cfg.policy, p, cfg, SeedSpec{77}, 2);
  REQUIRE(sweep.rows.size() == betas.size());

  CHECK(sweep.rows[0].accuracy ==
        doctest::Approx(classify::accuracy(s.model, s.test)));
  CHECK(sweep.rows[0].mean_l0 == doctest::Approx(0.0));
  for (std::size_t r = 0; r < sweep.rows.size(); ++r) {
    CHECK(sweep.rows[r].mean_l0 <= betas[r] + 0.5);
    CHECK(sweep.rows[r].accuracy >= 0.0);
    CHECK(sweep.rows[r].accuracy <= 1.0);
  }
  // Larger budgets cannot help the attacker beyond noise-level slack.
  for (std::size_t r = 1; r < sweep.rows.size(); ++r) {
    CHECK(sweep.rows[r].accuracy <= sweep.rows[r - 1].accuracy + 0.05);
  }

  const auto csv = sweep.to_csv();
  CHECK(csv.substr(0, csv.find('\n')) == "beta,attack,accuracy,mean_l0,mean_l2");
  const auto rerun = sweep_budget(s.model, attackers, s.test, betas,
                                  cfg.policy, p, cfg, SeedSpec{77}, 4);
  CHECK(rerun.to_csv() == csv);
}

TEST_CASE("noise_stats groups by chosen target") {
  std::vector<attrishield::mechanism::DefendResult> results(3);
  results[0].chosen_index = 1;
  results[0].chosen_cost = 3.0;
  results[1].chosen_index = 0;
  results[1].chosen_cost = 2.0;
  results[2].chosen_index = 0;
  results[2].chosen_cost = 4.0;
  const auto stats = noise_stats(results);
  CHECK(stats.size() == 2);
  CHECK(stats.at(0) == doctest::Approx(3.0));
  CHECK(stats.at(1) == doctest::Approx(3.0));
  CHECK(stats.count(2) == 0);
}

TEST_CASE("mf_train fits a rank-one ratings matrix") {
  Dataset ds;
  ds.d = 8;
  ds.m = 2;
  const Vec a = {0.5, 1.0, 0.5, 1.0, 0.5, 1.0, 0.5, 1.0, 0.5, 1.0, 0.5, 1.0};
  const Vec b = {0.4, 0.8, 0.4, 0.8, 0.4, 0.8, 0.4, 0.8};
  for (std::size_t u = 0; u < a.size(); ++u) {
    UserRow row;
    row.user_id = "u" + std::to_string(u);
    row.label = 0;
    row.x.resize(b.size());
    for (std::size_t j = 0; j < b.size(); ++j) row.x[j] = a[u] * b[j];
    ds.rows.push_back(std::move(row));
  }
  ds.validate();

  MfConfig cfg;
  cfg.rank = 2;
  cfg.epochs = 400;
  cfg.learning_rate = 0.1;
  cfg.l2_penalty = 1e-4;
  cfg.seed = 5;
  const auto model = mf_train(ds, cfg);
  double sq = 0.0;
  int count = 0;
  for (std::size_t u = 0; u < ds.size(); ++u) {
    for (std::size_t j = 0; j < b.size(); ++j) {
      const double err = model.predict(u, j) - ds.rows[u].x[j];
      sq += err * err;
      ++count;
    }
  }
  CHECK(std::sqrt(sq / count) <= 0.05);

  // Same seed, same model; epochs=0 returns the seeded init.
  const auto again = mf_train(ds, cfg);
  CHECK(again.user_factors == model.user_factors);
  CHECK(again.item_factors == model.item_factors);
  MfConfig init_cfg = cfg;
  init_cfg.epochs = 0;
  const auto init_a = mf_train(ds, init_cfg);
  const auto init_b = mf_train(ds, init_cfg);
  CHECK(init_a.user_factors == init_b.user_factors);
}

TEST_CASE("random ranking hits the hypergeometric precision") {
  const std::size_t n = 500;
  const std::size_t d = 100;
  Dataset ds;
  ds.d = static_cast<int>(d);
  ds.m = 2;
  Rng rng(313);
  for (std::size_t u = 0; u < n; ++u) {
    UserRow row;
    row.user_id = "u" + std::to_string(u);
    row.label = 0;
    row.x.assign(d, 0.0);
    for (std::size_t j : rng.sample_without_replacement(d, 5)) {
      row.x[j] = 0.6;
    }
    ds.rows.push_back(std::move(row));
  }
  ds.validate();

  const auto holdout = sample_holdout(ds, 5, SeedSpec{99});
  for (const auto& h : holdout) CHECK(h.size() == 5);

  MfConfig cfg;
  cfg.epochs = 0;  // untrained: ranking independent of the holdout
  cfg.seed = 424242;
  const auto model = mf_train(ds, cfg, &holdout);
  const double precision = mf_topn_precision(model, ds, holdout, 10);
  // Per user |top10 ∩ holdout| is hypergeometric over exactly d candidates;
  // the mean over 500 users concentrates near 5*10/100/10.
  const double expect = 0.05;
  const double sigma_user =
      std::sqrt(10.0 * 0.05 * 0.95 * (90.0 / 99.0)) / 10.0;
  CHECK(std::abs(precision - expect) <=
        3.0 * sigma_user / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("top-n precision endpoints and tie rule") {
  Dataset ds;
  ds.d = 6;
  ds.m = 2;
  UserRow row;
  row.user_id = "u0";
  row.label = 0;
  row.x = {0.0, 0.8, 0.8, 0.0, 0.0, 0.0};
  ds.rows.push_back(row);
  ds.validate();
  const Holdout holdout = {{1, 2}};

  MfModel model;
  model.rank = 1;
  model.user_factors = {{1.0}};
  // Held-out items 1 and 2 rank first.
  model.item_factors = {{0.1}, {0.9}, {0.8}, {0.2}, {0.1}, {0.0}};
  CHECK(mf_topn_precision(model, ds, holdout, 2) == doctest::Approx(1.0));

  // Now the holdout scores at the bottom.
  model.item_factors = {{0.9}, {0.0}, {0.1}, {0.8}, {0.7}, {0.6}};
  CHECK(mf_topn_precision(model, ds, holdout, 2) == doctest::Approx(0.0));

  // All-equal scores: ties resolve toward lower item index, so items 0 and
  // 1 fill the top-2 and exactly one holdout item makes it.
  model.item_factors = {{0.5}, {0.5}, {0.5}, {0.5}, {0.5}, {0.5}};
  CHECK(mf_topn_precision(model, ds, holdout, 2) == doctest::Approx(0.5));
}

TEST_CASE("relative precision loss") {
  CHECK(relative_precision_loss(0.4, 0.4) == doctest::Approx(0.0));
  CHECK(relative_precision_loss(0.4, 0.3) == doctest::Approx(0.25));
  CHECK(relative_precision_loss(0.5, 0.6) == doctest::Approx(0.2));
  CHECK(relative_precision_loss(0.2, 0.1) ==
        doctest::Approx(relative_precision_loss(0.6, 0.3)));
  CHECK_THROWS(relative_precision_loss(0.0, 0.5));
}
