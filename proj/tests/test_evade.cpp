#include <doctest.h>

#include <cmath>
#include <vector>

#include "attrishield/classify.hpp"
#include "attrishield/core.hpp"
#include "attrishield/evade.hpp"

using namespace attrishield;
using namespace attrishield::evade;
using classify::LinearSoftmaxModel;
using classify::TrainConfig;
using core::Dataset;
using core::NoiseTypePolicy;
using core::RatingGrid;
using core::Rng;
using core::SeedSpec;
using core::SynthConfig;
using core::Vec;

namespace {

LinearSoftmaxModel two_label_model() {
  LinearSoftmaxModel model(2, 2);
  model.W = {{1.0, 0.0}, {0.0, 3.0}};
  return model;
}

struct Suite {
  Dataset ds;
  LinearSoftmaxModel model;
};

Suite small_suite() {
  SynthConfig scfg;
  scfg.d = 20;
  scfg.m = 3;
  scfg.n = 120;
  scfg.sparsity = 5.0;
  scfg.signal = 0.8;
  Dataset ds = core::synth_generate(scfg, SeedSpec{404});
  TrainConfig tcfg;
  tcfg.epochs = 120;
  tcfg.learning_rate = 0.5;
  tcfg.seed = 404;
  return {ds, classify::train_linear(ds, tcfg)};
}

void check_result_invariants(const EvasionResult& res, const Vec& x,
                             NoiseTypePolicy policy, const RatingGrid& grid) {
  CHECK(res.l0_cost == core::l0_norm(res.noise));
  Vec moved = core::apply_noise(x, res.noise, grid);
  CHECK(core::grid_valid(moved, grid));
  auto feasible = core::policy_feasible_indices(x, policy);
  for (std::size_t k = 0; k < res.noise.size(); ++k) {
    if (std::abs(res.noise[k]) > core::kZeroTol) {
      CHECK(std::find(feasible.begin(), feasible.end(), k) != feasible.end());
    }
  }
}

}  // namespace

TEST_CASE("margin_gradient of a linear model") {
  auto model = two_label_model();
  Vec g = margin_gradient(model, {1.0, 0.0}, 1);
  CHECK(g == Vec{-1.0, 3.0});
  Vec g0 = margin_gradient(model, {0.0, 1.0}, 0);
  CHECK(g0 == Vec{1.0, -3.0});
}

TEST_CASE("panda hand traces") {
  auto model = two_label_model();
  PandaConfig cfg;

  SUBCASE("modify_add reaches the target in one move") {
    cfg.policy = NoiseTypePolicy::ModifyAdd;
    auto res = panda(model, {1.0, 0.0}, 1, cfg);
    CHECK(res.success);
    CHECK(res.noise == Vec{0.0, 1.0});
    CHECK(res.l0_cost == 1);
    CHECK(res.iterations == 1);
  }

  SUBCASE("target equal to the current prediction is free") {
    cfg.policy = NoiseTypePolicy::ModifyAdd;
    auto res = panda(model, {1.0, 0.0}, 0, cfg);
    CHECK(res.success);
    CHECK(res.l0_cost == 0);
    CHECK(res.iterations == 0);
    CHECK(res.noise == Vec{0.0, 0.0});
  }

  SUBCASE("modify_exist runs out of improving moves") {
    cfg.policy = NoiseTypePolicy::ModifyExist;
    auto res = panda(model, {1.0, 0.0}, 1, cfg);
    CHECK_FALSE(res.success);
    // The only feasible entry was zeroed, then nothing improves.
    CHECK(res.iterations >= 1);
  }
}

TEST_CASE("jsma hand trace and direction commitment") {
  auto model = two_label_model();
  PandaConfig cfg;
  auto res = jsma(model, {1.0, 0.0}, 1, cfg);
  CHECK(res.success);
  CHECK(res.noise == Vec{0.0, 1.0});
  CHECK(res.l0_cost == 1);

  auto res0 = jsma(model, {1.0, 0.0}, 0, cfg);
  CHECK(res0.success);
  CHECK(res0.l0_cost == 0);

  // A target reachable only by decreasing: commit must go down.
  auto resd = jsma(model, {0.0, 1.0}, 0, cfg);
  CHECK(resd.success);
  CHECK(resd.noise == Vec{0.0, -1.0});
}

TEST_CASE("fgsm hand trace") {
  auto model = two_label_model();
  auto res = fgsm(model, {1.0, 0.0}, 1, 1.0);
  CHECK(res.success);
  CHECK(res.noise == Vec{-1.0, 1.0});
  CHECK(res.l0_cost == 2);
  CHECK(res.iterations == 1);

  auto res0 = fgsm(model, {1.0, 0.0}, 0, 1.0);
  CHECK(res0.success);
  CHECK(res0.l0_cost == 0);

  // A tiny step dies in the grid snap: x' == x.
  auto tiny = fgsm(model, {1.0, 0.0}, 1, 1e-6);
  CHECK_FALSE(tiny.success);
  CHECK(tiny.l0_cost == 0);
}

TEST_CASE("find_all_noises covers every target") {
  auto [ds, model] = small_suite();
  PandaConfig cfg;
  const Vec& x = ds.rows[0].x;
  int pred = classify::predict(model, x);
  auto all = find_all_noises(model, x, NoiseTypePolicy::ModifyAdd, cfg);
  REQUIRE(all.size() == 3);
  CHECK(all[pred].l0_cost == 0);
  CHECK(all[pred].success);
  for (int i = 0; i < 3; ++i) {
    CHECK(all[i].target == i);
    if (all[i].success) {
      Vec moved = core::apply_noise(x, all[i].noise, ds.grid);
      CHECK(classify::predict(model, moved) == i);
    }
  }
}

TEST_CASE("evasion invariants over a randomized suite") {
  auto [ds, model] = small_suite();
  PandaConfig cfg;
  RatingGrid grid;
  for (int u = 0; u < 40; ++u) {
    const Vec& x = ds.rows[u].x;
    for (int target = 0; target < ds.m; ++target) {
      for (auto policy :
           {NoiseTypePolicy::ModifyExist, NoiseTypePolicy::AddNew,
            NoiseTypePolicy::ModifyAdd}) {
        cfg.policy = policy;
        auto res = panda(model, x, target, cfg, grid);
        check_result_invariants(res, x, policy, grid);
        if (res.success) {
          Vec moved = core::apply_noise(x, res.noise, grid);
          CHECK(classify::predict(model, moved) == target);
        }
      }
      auto rj = jsma(model, x, target, cfg, grid);
      check_result_invariants(rj, x, NoiseTypePolicy::ModifyAdd, grid);
      auto rf = fgsm(model, x, target, 1.0, grid);
      check_result_invariants(rf, x, NoiseTypePolicy::ModifyAdd, grid);
    }
  }
}

TEST_CASE("evasion is deterministic") {
  auto [ds, model] = small_suite();
  PandaConfig cfg;
  for (int u = 0; u < 10; ++u) {
    const Vec& x = ds.rows[u].x;
    for (int target = 0; target < ds.m; ++target) {
      auto a = panda(model, x, target, cfg);
      auto b = panda(model, x, target, cfg);
      CHECK(a.noise == b.noise);
      CHECK(a.iterations == b.iterations);
      CHECK(a.success == b.success);
    }
  }
}

TEST_CASE("mean noise orderings on the small suite") {
  auto [ds, model] = small_suite();
  PandaConfig cfg;

  // Method ordering under ModifyAdd, over instances every method solves.
  double sum_panda = 0, sum_jsma = 0, sum_fgsm = 0;
  int common = 0;
  for (int u = 0; u < 60; ++u) {
    const Vec& x = ds.rows[u].x;
    for (int target = 0; target < ds.m; ++target) {
      auto rp = panda(model, x, target, cfg);
      auto rj = jsma(model, x, target, cfg);
      auto rf = fgsm(model, x, target, 1.0);
      if (rp.success && rj.success && rf.success) {
        sum_panda += rp.l0_cost;
        sum_jsma += rj.l0_cost;
        sum_fgsm += rf.l0_cost;
        ++common;
      }
    }
  }
  REQUIRE(common > 30);
  CHECK(sum_panda <= sum_jsma);
  CHECK(sum_jsma <= sum_fgsm);

  // Policy ordering for panda, over instances every policy solves.
  double sum_all = 0, sum_add = 0, sum_exist = 0;
  int common2 = 0;
  for (int u = 0; u < 60; ++u) {
    const Vec& x = ds.rows[u].x;
    for (int target = 0; target < ds.m; ++target) {
      cfg.policy = NoiseTypePolicy::ModifyAdd;
      auto ra = panda(model, x, target, cfg);
      cfg.policy = NoiseTypePolicy::AddNew;
      auto rn = panda(model, x, target, cfg);
      cfg.policy = NoiseTypePolicy::ModifyExist;
      auto re = panda(model, x, target, cfg);
      if (ra.success && rn.success && re.success) {
        sum_all += ra.l0_cost;
        sum_add += rn.l0_cost;
        sum_exist += re.l0_cost;
        ++common2;
      }
    }
  }
  REQUIRE(common2 > 10);
  CHECK(sum_all <= sum_add);
  CHECK(sum_add <= sum_exist);
}

TEST_CASE("evasion input validation") {
  auto model = two_label_model();
  PandaConfig cfg;
  CHECK_THROWS_AS(panda(model, {0.3, 0.0}, 1, cfg), core::Error);
  CHECK_THROWS_AS(panda(model, {0.2, 0.0}, 5, cfg), core::Error);
  cfg.tau = 0.0;
  CHECK_THROWS_AS(panda(model, {0.2, 0.0}, 1, cfg), core::Error);
  CHECK_THROWS_AS(fgsm(model, {0.2, 0.0}, 1, 0.0), core::Error);
}
