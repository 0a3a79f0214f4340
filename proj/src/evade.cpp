#include "attrishield/evade.hpp"

#include <algorithm>
#include <cmath>

namespace attrishield::evade {

using classify::predict;
using core::Error;
using core::l0_norm;
using core::policy_feasible_indices;
using core::round_to_grid;

Vec margin_gradient(const Classifier& model, const Vec& x, int target) {
  Vec z = model.logits(x);
  if (target < 0 || target >= static_cast<int>(z.size()))
    throw Error("target label out of range");
  int runner = target == 0 ? 1 : 0;
  for (int j = 0; j < static_cast<int>(z.size()); ++j) {
    if (j != target && z[j] > z[runner]) runner = j;
  }
  Vec delta(z.size(), 0.0);
  delta[target] = 1.0;
  delta[runner] -= 1.0;
  return model.logit_backprop(x, delta);
}

namespace {

Vec snap(const Vec& v, const RatingGrid& grid) {
  Vec out(v.size());
  for (std::size_t k = 0; k < v.size(); ++k) out[k] = round_to_grid(v[k], grid);
  return out;
}

struct Move {
  std::size_t index = 0;
  int direction = 0;  // +1 or -1
  double score = 0.0;
};

/// Best positive-score move, scoring each candidate by its achievable margin
/// gain: gradient times the clipped step the entry can actually take. Returns
/// direction==0 when none exists.
/// dir_filter: 0 = both directions, +1 / -1 = that direction only.
/// Ties: lowest index first, increase before decrease.
Move best_move(const Vec& g, const Vec& cur, double tau,
               const std::vector<std::size_t>& feasible, int dir_filter) {
  Move best;
  for (std::size_t k : feasible) {
    const double up = std::min(1.0, cur[k] + tau) - cur[k];
    const double down = cur[k] - std::max(0.0, cur[k] - tau);
    if (dir_filter >= 0 && up > 0.0 && g[k] * up > best.score) {
      best = {k, +1, g[k] * up};
    }
    if (dir_filter <= 0 && down > 0.0 && -g[k] * down > best.score) {
      best = {k, -1, -g[k] * down};
    }
  }
  return best;
}

EvasionResult greedy_evade(const Classifier& model, const Vec& x, int target,
                           const PandaConfig& cfg, const RatingGrid& grid,
                           bool commit_direction) {
  if (cfg.tau <= 0.0 || cfg.max_iters < 1) throw Error("bad evasion config");
  if (!core::grid_valid(x, grid)) throw Error("input off the grid");
  if (target < 0 || target >= model.num_labels())
    throw Error("target label out of range");

  EvasionResult res;
  res.target = target;
  res.noise.assign(x.size(), 0.0);
  if (predict(model, x) == target) {
    res.success = true;
    return res;
  }

  const auto feasible = policy_feasible_indices(x, cfg.policy);
  Vec cur = x;
  int dir_filter = 0;
  if (commit_direction) {
    Vec g = margin_gradient(model, cur, target);
    Move inc = best_move(g, cur, cfg.tau, feasible, +1);
    Move dec = best_move(g, cur, cfg.tau, feasible, -1);
    dir_filter = inc.score >= dec.score ? +1 : -1;
  }

  int iter = 0;
  while (true) {
    if (predict(model, cur) == target) {
      cur = snap(cur, grid);
      if (predict(model, cur) == target) break;
      // Snapping lost the target; keep iterating from the snapped point.
    }
    if (iter >= cfg.max_iters) break;
    Vec g = margin_gradient(model, cur, target);
    Move move = best_move(g, cur, cfg.tau, feasible, dir_filter);
    if (move.direction == 0) break;
    cur[move.index] =
        std::clamp(cur[move.index] + move.direction * cfg.tau, 0.0, 1.0);
    ++iter;
  }

  Vec final_x = snap(cur, grid);
  res.success = predict(model, final_x) == target;
  res.iterations = iter;
  for (std::size_t k = 0; k < x.size(); ++k) res.noise[k] = final_x[k] - x[k];
  res.l0_cost = l0_norm(res.noise);
  return res;
}

}  // namespace

EvasionResult panda(const Classifier& model, const Vec& x, int target,
                    const PandaConfig& cfg, const RatingGrid& grid) {
  return greedy_evade(model, x, target, cfg, grid, false);
}

EvasionResult jsma(const Classifier& model, const Vec& x, int target,
                   const PandaConfig& cfg, const RatingGrid& grid) {
  PandaConfig jcfg = cfg;
  jcfg.policy = NoiseTypePolicy::ModifyAdd;
  return greedy_evade(model, x, target, jcfg, grid, true);
}

EvasionResult fgsm(const Classifier& model, const Vec& x, int target,
                   double epsilon, const RatingGrid& grid) {
  if (epsilon <= 0.0) throw Error("epsilon must be positive");
  if (!core::grid_valid(x, grid)) throw Error("input off the grid");
  if (target < 0 || target >= model.num_labels())
    throw Error("target label out of range");

  EvasionResult res;
  res.target = target;
  res.noise.assign(x.size(), 0.0);
  if (predict(model, x) == target) {
    res.success = true;
    return res;
  }

  Vec g = margin_gradient(model, x, target);
  Vec moved(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double step = g[k] > 0.0 ? epsilon : (g[k] < 0.0 ? -epsilon : 0.0);
    moved[k] = std::clamp(x[k] + step, 0.0, 1.0);
  }
  Vec final_x = snap(moved, grid);
  res.success = predict(model, final_x) == target;
  res.iterations = 1;
  for (std::size_t k = 0; k < x.size(); ++k) res.noise[k] = final_x[k] - x[k];
  res.l0_cost = l0_norm(res.noise);
  return res;
}

std::vector<EvasionResult> find_all_noises(const Classifier& model,
                                           const Vec& x,
                                           NoiseTypePolicy policy,
                                           const PandaConfig& cfg,
                                           const RatingGrid& grid) {
  PandaConfig pcfg = cfg;
  pcfg.policy = policy;
  std::vector<EvasionResult> out;
  out.reserve(model.num_labels());
  for (int i = 0; i < model.num_labels(); ++i)
    out.push_back(panda(model, x, i, pcfg, grid));
  return out;
}

}  // namespace attrishield::evade
