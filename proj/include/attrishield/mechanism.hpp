#pragma once

#include <cstdint>
#include <limits>
#include <utility>
#include <vector>

#include "attrishield/classify.hpp"
#include "attrishield/core.hpp"
#include "attrishield/evade.hpp"

namespace attrishield::mechanism {

using core::RatingGrid;
using core::Vec;

struct TargetDistribution {
  Vec p;  // length m, nonnegative, sums to 1
};

TargetDistribution target_uniform(int m);
TargetDistribution target_empirical(const std::vector<int>& labels, int m);

/// Sentinel cost for attribute values whose Phase-I noise search failed.
inline constexpr double kInfiniteCost =
    std::numeric_limits<double>::infinity();

/// Output distribution over the m representative noises. costs[i] is the L0
/// cost of noise i, kInfiniteCost where no noise exists (then probs[i] = 0).
struct MechanismDistribution {
  Vec probs;
  Vec costs;
};

struct SolverReport {
  double mu0 = 0.0;    // budget multiplier; 0 when the budget is slack
  double lambda = 0.0; // normalization multiplier
  bool binding = false;
  double kkt_residual = 0.0;
  double expected_cost = 0.0;
  bool renormalized = false;  // true when failed noises were excluded
};

/// Minimizes KL(p_hat || M) subject to sum M_i c_i <= beta and sum M_i = 1,
/// where p_hat is p renormalized over the finite-cost support. Closed form
/// M_i = p_hat_i / (mu0 c_i + lambda) with the multipliers found by nested
/// bisection. beta = 0 puts all mass on the zero-cost values.
std::pair<MechanismDistribution, SolverReport> solve_mechanism(
    const TargetDistribution& p, const Vec& costs, double beta);

/// Inverse-CDF draw using a single uniform from the seeded stream.
std::pair<int, Vec> sample_noise(const MechanismDistribution& M,
                                 const std::vector<Vec>& noises,
                                 std::uint64_t seed);

struct DefendResult {
  Vec defended;
  int chosen_index = 0;
  double chosen_cost = 0.0;
  SolverReport report;
};

/// Phase II on precomputed Phase-I results (costs +inf where unsuccessful).
DefendResult defend_with_noises(const std::vector<evade::EvasionResult>& noises,
                                const Vec& x, const TargetDistribution& p,
                                double beta, std::uint64_t seed,
                                const RatingGrid& grid = {});

/// Full two-phase defense for one user: find_all_noises, solve_mechanism,
/// sample_noise, apply_noise.
DefendResult defend_user(const classify::Classifier& defender, const Vec& x,
                         core::NoiseTypePolicy policy,
                         const TargetDistribution& p, double beta,
                         const evade::PandaConfig& cfg, std::uint64_t seed,
                         const RatingGrid& grid = {});

}  // namespace attrishield::mechanism
