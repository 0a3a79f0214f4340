#pragma once

#include <vector>

#include "attrishield/classify.hpp"
#include "attrishield/core.hpp"

namespace attrishield::evade {

using classify::Classifier;
using core::NoiseTypePolicy;
using core::RatingGrid;
using core::Vec;

struct PandaConfig {
  double tau = 1.0;
  int max_iters = 100;
  NoiseTypePolicy policy = NoiseTypePolicy::ModifyAdd;
};

struct EvasionResult {
  int target = 0;
  Vec noise;
  int l0_cost = 0;
  int iterations = 0;
  bool success = false;
};

/// Gradient w.r.t. x of logit_target - max_{j != target} logit_j.
/// The runner-up argmax resolves ties toward the lowest label.
Vec margin_gradient(const Classifier& model, const Vec& x, int target);

/// Greedy margin ascent: per iteration, one policy-feasible entry moves by
/// +-tau (clipped to [0,1]), picking the move with the best positive margin
/// gain. Entries snap to the grid on termination; if snapping loses the
/// target, iteration resumes from the snapped point. Feasibility is judged
/// against the original x throughout.
EvasionResult panda(const Classifier& model, const Vec& x, int target,
                    const PandaConfig& cfg, const RatingGrid& grid = {});

/// Same loop, but one global move direction (increase or decrease) is
/// committed for the whole run from the best first-step score. Always
/// operates under ModifyAdd.
EvasionResult jsma(const Classifier& model, const Vec& x, int target,
                   const PandaConfig& cfg, const RatingGrid& grid = {});

/// Single step x' = clip(x + epsilon * sign(g)) with g the target margin
/// gradient at x, then grid snap.
EvasionResult fgsm(const Classifier& model, const Vec& x, int target,
                   double epsilon, const RatingGrid& grid = {});

/// result[i] = panda(model, x, i, cfg); result[predict(x)] is zero noise.
std::vector<EvasionResult> find_all_noises(const Classifier& model,
                                           const Vec& x,
                                           NoiseTypePolicy policy,
                                           const PandaConfig& cfg,
                                           const RatingGrid& grid = {});

}  // namespace attrishield::evade
