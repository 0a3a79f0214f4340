#include <doctest.h>

#include <cmath>
#include <limits>
#include <map>
#include <vector>

#include "attrishield/classify.hpp"
#include "attrishield/core.hpp"
#include "attrishield/evade.hpp"
#include "attrishield/mechanism.hpp"

using namespace attrishield;
using namespace attrishield::mechanism;
using core::Rng;
using core::Vec;

namespace {

// Feasible simplex grid search minimizing KL(p||M) s.t. sum M_i c_i <= beta.
// m in {2,3}; step is the grid resolution.
double grid_oracle_kl(const Vec& p, const Vec& c, double beta, double step) {
  auto kl = [&](const Vec& M) {
    double sum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (p[i] == 0.0) continue;
      if (M[i] <= 0.0) return std::numeric_limits<double>::infinity();
      sum += p[i] * std::log(p[i] / M[i]);
    }
    return sum;
  };
  double best = std::numeric_limits<double>::infinity();
  const int n = static_cast<int>(std::lround(1.0 / step));
  if (p.size() == 2) {
    for (int a = 0; a <= n; ++a) {
      Vec M{a * step, 1.0 - a * step};
      if (M[0] * c[0] + M[1] * c[1] <= beta + 1e-12) best = std::min(best, kl(M));
    }
    return best;
  }
  for (int a = 0; a <= n; ++a) {
    for (int b = 0; a + b <= n; ++b) {
      Vec M{a * step, b * step, 1.0 - (a + b) * step};
      if (M[0] * c[0] + M[1] * c[1] + M[2] * c[2] <= beta + 1e-12)
        best = std::min(best, kl(M));
    }
  }
  return best;
}

double kl_over_support(const Vec& p, const Vec& M) {
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    sum += p[i] * std::log(p[i] / M[i]);
  }
  return sum;
}

}  // namespace

TEST_CASE("target distributions") {
  auto u4 = target_uniform(4);
  CHECK(u4.p == Vec{0.25, 0.25, 0.25, 0.25});
  CHECK(target_uniform(1).p == Vec{1.0});
  CHECK_THROWS_AS(target_uniform(0), core::Error);

  CHECK(target_empirical({0, 0, 1, 1}, 2).p == Vec{0.5, 0.5});
  CHECK(target_empirical({0, 0, 0, 1}, 2).p == Vec{0.75, 0.25});
  CHECK(target_empirical({0, 0}, 3).p == Vec{1.0, 0.0, 0.0});
  CHECK_THROWS_AS(target_empirical({}, 2), core::Error);
  CHECK_THROWS_AS(target_empirical({5}, 2), core::Error);
}

TEST_CASE("solve_mechanism hand instance") {
  auto [M, rep] = solve_mechanism({{0.5, 0.5}}, {0.0, 10.0}, 2.0);
  CHECK(M.probs[0] == doctest::Approx(0.8).epsilon(1e-6));
  CHECK(M.probs[1] == doctest::Approx(0.2).epsilon(1e-6));
  CHECK(rep.mu0 == doctest::Approx(0.1875).epsilon(1e-6));
  CHECK(rep.lambda == doctest::Approx(0.625).epsilon(1e-6));
  CHECK(rep.binding);
  CHECK(rep.kkt_residual <= 1e-6);
  CHECK(rep.expected_cost == doctest::Approx(2.0).epsilon(1e-8));
}

TEST_CASE("solve_mechanism non-binding budget returns the target") {
  auto [M, rep] = solve_mechanism({{0.5, 0.5}}, {0.0, 5.0}, 5.0);
  CHECK(M.probs[0] == 0.5);
  CHECK(M.probs[1] == 0.5);
  CHECK_FALSE(rep.binding);
  CHECK(rep.mu0 == 0.0);
  CHECK(rep.expected_cost == doctest::Approx(2.5));
  CHECK(rep.kkt_residual == 0.0);
}

TEST_CASE("solve_mechanism zero budget collapses onto zero-cost noises") {
  auto [M, rep] = solve_mechanism({{0.5, 0.5}}, {0.0, 10.0}, 0.0);
  CHECK(M.probs == Vec{1.0, 0.0});
  CHECK(rep.binding);
  CHECK(rep.expected_cost == 0.0);
  CHECK(std::isinf(rep.mu0));
  CHECK(rep.lambda == doctest::Approx(0.5));

  auto [M2, rep2] =
      solve_mechanism({{0.2, 0.3, 0.5}}, {0.0, 0.0, 7.0}, 0.0);
  CHECK(M2.probs[0] == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(M2.probs[1] == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(M2.probs[2] == 0.0);
}

TEST_CASE("solve_mechanism failed noises are excluded and flagged") {
  const double inf = kInfiniteCost;
  auto [M, rep] = solve_mechanism({{0.25, 0.25, 0.5}}, {0.0, inf, 4.0}, 100.0);
  CHECK(rep.renormalized);
  CHECK(M.probs[1] == 0.0);
  CHECK(M.probs[0] == doctest::Approx(1.0 / 3).epsilon(1e-12));
  CHECK(M.probs[2] == doctest::Approx(2.0 / 3).epsilon(1e-12));
  CHECK_FALSE(rep.binding);
}

TEST_CASE("solve_mechanism input validation") {
  const double inf = kInfiniteCost;
  CHECK_THROWS_AS(solve_mechanism({{0.5, 0.5}}, {0.0, 1.0}, -1.0), core::Error);
  CHECK_THROWS_AS(solve_mechanism({{0.5, 0.5}}, {inf, inf}, 1.0), core::Error);
  CHECK_THROWS_AS(solve_mechanism({{0.5, 0.5}}, {0.0}, 1.0), core::Error);
  CHECK_THROWS_AS(solve_mechanism({{0.6, 0.6}}, {0.0, 1.0}, 1.0), core::Error);
  // Budget below the cheapest noise that carries target mass.
  CHECK_THROWS_AS(solve_mechanism({{0.5, 0.5}}, {2.0, 10.0}, 1.0), core::Error);
  // All target mass on failed noises.
  CHECK_THROWS_AS(solve_mechanism({{0.0, 1.0}}, {0.0, inf}, 1.0), core::Error);
}

TEST_CASE("solve_mechanism matches the grid oracle for m in {2,3}") {
  Rng rng(71);
  for (int trial = 0; trial < 60; ++trial) {
    const int m = trial % 2 == 0 ? 2 : 3;
    Vec p(m), c(m);
    double mass = 0.0;
    for (int i = 0; i < m; ++i) {
      p[i] = -std::log(1.0 - rng.next_double());
      mass += p[i];
    }
    for (int i = 0; i < m; ++i) p[i] /= mass;
    c[0] = 0.0;
    for (int i = 1; i < m; ++i)
      c[i] = static_cast<double>(rng.next_index(50) + 1);
    const double beta = rng.uniform(0.0, 20.0);

    auto [M, rep] = solve_mechanism({p}, c, beta);
    const double solver_kl = kl_over_support(p, M.probs);
    const double oracle_kl = grid_oracle_kl(p, c, beta, 1e-3);
    CHECK(solver_kl <= oracle_kl + 1e-4);

    double sum = 0.0, exp_cost = 0.0;
    for (int i = 0; i < m; ++i) {
      CHECK(M.probs[i] >= 0.0);
      sum += M.probs[i];
      exp_cost += M.probs[i] * c[i];
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(rep.kkt_residual <= 1e-6);
    if (rep.binding && std::isfinite(rep.mu0)) {
      CHECK(std::abs(exp_cost - beta) <= 1e-6);
    } else if (!rep.binding) {
      CHECK(exp_cost <= beta + 1e-9);
    }
  }
}

TEST_CASE("solve_mechanism scale consistency") {
  Vec p{0.3, 0.2, 0.5};
  Vec c{0.0, 7.0, 23.0};
  const double beta = 4.0;
  auto [M0, rep0] = solve_mechanism({p}, c, beta);
  for (double gamma : {2.0, 0.5, 4.0, 1024.0, 3.0}) {
    Vec cg(c.size());
    for (std::size_t i = 0; i < c.size(); ++i) cg[i] = c[i] * gamma;
    auto [Mg, repg] = solve_mechanism({p}, cg, beta * gamma);
    for (std::size_t i = 0; i < p.size(); ++i)
      CHECK(std::abs(Mg.probs[i] - M0.probs[i]) <= 1e-9);
    // lambda is scale-invariant; mu0 carries the inverse scale.
    CHECK(repg.lambda == doctest::Approx(rep0.lambda).epsilon(1e-9));
    CHECK(repg.mu0 * gamma == doctest::Approx(rep0.mu0).epsilon(1e-9));
  }
}

TEST_CASE("sample_noise determinism and frequencies") {
  MechanismDistribution dist;
  dist.probs = {1.0, 0.0};
  dist.costs = {0.0, 3.0};
  std::vector<Vec> noises{{0.0, 0.0}, {1.0, 0.0}};
  for (std::uint64_t s = 0; s < 50; ++s) {
    auto [idx, noise] = sample_noise(dist, noises, s);
    CHECK(idx == 0);
  }
  auto a = sample_noise(dist, noises, 42);
  auto b = sample_noise(dist, noises, 42);
  CHECK(a.first == b.first);

  dist.probs = {0.8, 0.2};
  int hits = 0;
  const int trials = 10000;
  for (int t = 0; t < trials; ++t) {
    hits += sample_noise(dist, noises,
                         core::derive_seed(9, "u" + std::to_string(t),
                                           "sample")).first == 1;
  }
  const double freq = static_cast<double>(hits) / trials;
  const double sigma = std::sqrt(0.2 * 0.8 / trials);
  CHECK(std::abs(freq - 0.2) <= 3 * sigma);
}

namespace {

classify::LinearSoftmaxModel toy_model() {
  classify::LinearSoftmaxModel model(2, 2);
  model.W = {{1.0, 0.0}, {0.0, 3.0}};
  return model;
}

}  // namespace

TEST_CASE("defend_user zero budget returns the input") {
  auto model = toy_model();
  evade::PandaConfig cfg;
  Vec x{1.0, 0.0};
  auto res = defend_user(model, x, core::NoiseTypePolicy::ModifyAdd,
                         target_uniform(2), 0.0, cfg, 7);
  CHECK(res.defended == x);
  CHECK(res.chosen_index == classify::predict(model, x));
  CHECK(res.chosen_cost == 0.0);
}

TEST_CASE("defend_user chosen-index frequencies match p at a slack budget") {
  auto model = toy_model();
  evade::PandaConfig cfg;
  Vec x{1.0, 0.0};
  std::map<int, int> counts;
  const int trials = 10000;
  for (int t = 0; t < trials; ++t) {
    auto res = defend_user(model, x, core::NoiseTypePolicy::ModifyAdd,
                           target_uniform(2), 10.0, cfg,
                           core::derive_seed(3, "u" + std::to_string(t),
                                             "defend"));
    counts[res.chosen_index] += 1;
  }
  const double sigma = std::sqrt(0.5 * 0.5 / trials);
  for (int i = 0; i < 2; ++i) {
    const double freq = static_cast<double>(counts[i]) / trials;
    CHECK(std::abs(freq - 0.5) <= 3 * sigma);
  }
}

TEST_CASE("defend_user is deterministic under a fixed seed") {
  auto model = toy_model();
  evade::PandaConfig cfg;
  Vec x{1.0, 0.0};
  auto a = defend_user(model, x, core::NoiseTypePolicy::ModifyAdd,
                       target_uniform(2), 4.0, cfg, 99);
  auto b = defend_user(model, x, core::NoiseTypePolicy::ModifyAdd,
                       target_uniform(2), 4.0, cfg, 99);
  CHECK(a.defended == b.defended);
  CHECK(a.chosen_index == b.chosen_index);
  CHECK(a.report.mu0 == b.report.mu0);
}

TEST_CASE("defend_with_noises routes around failed noises") {
  // Phase I failed for target 1: all mass must go to targets 0 and 2.
  std::vector<evade::EvasionResult> noises(3);
  noises[0] = {0, {0.0, 0.0}, 0, 0, true};
  noises[1] = {1, {0.0, 0.0}, 0, 5, false};
  noises[2] = {2, {0.0, 1.0}, 1, 1, true};
  Vec x{0.2, 0.0};
  for (int t = 0; t < 200; ++t) {
    auto res = defend_with_noises(noises, x, target_uniform(3), 100.0,
                                  core::derive_seed(1, std::to_string(t), "d"));
    CHECK(res.chosen_index != 1);
    CHECK(res.report.renormalized);
  }
}
