#include "attrishield/mechanism.hpp"

#include <algorithm>
#include <cmath>

namespace attrishield::mechanism {

using core::Error;
using core::Rng;

TargetDistribution target_uniform(int m) {
  if (m < 1) throw Error("target_uniform: m must be positive");
  return {Vec(m, 1.0 / m)};
}

TargetDistribution target_empirical(const std::vector<int>& labels, int m) {
  if (labels.empty()) throw Error("target_empirical: no labels");
  Vec p(m, 0.0);
  for (int s : labels) {
    if (s < 0 || s >= m) throw Error("target_empirical: label out of range");
    p[s] += 1.0;
  }
  for (double& v : p) v /= static_cast<double>(labels.size());
  return {p};
}

namespace {

struct Instance {
  std::vector<std::size_t> support;  // finite cost AND p_hat > 0
  Vec p_hat;                         // renormalized target, full length
  Vec c_norm;                        // costs / c_max, full length
  double c_max = 1.0;
  double c_min_support = 0.0;
};

/// lambda solving sum_i p_i / (mu0 c_i + lambda) = 1 for fixed mu0 >= 0.
/// The sum is strictly decreasing in lambda on (-mu0 c_min, inf).
double solve_lambda(const Instance& inst, double mu0) {
  auto phi = [&](double lambda) {
    double sum = 0.0;
    for (std::size_t i : inst.support)
      sum += inst.p_hat[i] / (mu0 * inst.c_norm[i] + lambda);
    return sum;
  };
  const double floor_ = -mu0 * inst.c_min_support;
  double lo = floor_;                       // phi -> +inf at the floor
  double hi = std::max(1.0, floor_ + 1.0);  // phi(lambda) <= 1/(lambda-floor_)
  while (phi(hi) > 1.0) hi = floor_ + 2.0 * (hi - floor_);
  for (int it = 0; it < 500; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double v = phi(mid);
    if (std::abs(v - 1.0) <= 1e-12) return mid;
    (v > 1.0 ? lo : hi) = mid;
    if (hi - lo <= 1e-18 * std::max(1.0, std::abs(hi))) break;
  }
  return 0.5 * (lo + hi);
}

Vec closed_form(const Instance& inst, double mu0, double lambda) {
  Vec M(inst.p_hat.size(), 0.0);
  for (std::size_t i : inst.support)
    M[i] = inst.p_hat[i] / (mu0 * inst.c_norm[i] + lambda);
  return M;
}

double expected_cost_norm(const Instance& inst, const Vec& M) {
  double sum = 0.0;
  for (std::size_t i : inst.support) sum += M[i] * inst.c_norm[i];
  return sum;
}

}  // namespace

std::pair<MechanismDistribution, SolverReport> solve_mechanism(
    const TargetDistribution& p, const Vec& costs, double beta) {
  if (beta < 0.0) throw Error("solve_mechanism: negative budget");
  if (p.p.size() != costs.size())
    throw Error("solve_mechanism: p and costs length mismatch");
  double psum = 0.0;
  for (double v : p.p) {
    if (v < 0.0) throw Error("solve_mechanism: negative target probability");
    psum += v;
  }
  if (std::abs(psum - 1.0) > 1e-9)
    throw Error("solve_mechanism: target does not sum to 1");

  Instance inst;
  inst.p_hat.assign(p.p.size(), 0.0);
  inst.c_norm.assign(costs.size(), 0.0);

  double finite_mass = 0.0;
  bool any_finite = false, excluded = false;
  for (std::size_t i = 0; i < costs.size(); ++i) {
    if (std::isfinite(costs[i])) {
      if (costs[i] < 0.0) throw Error("solve_mechanism: negative cost");
      any_finite = true;
      finite_mass += p.p[i];
    } else {
      excluded = true;
    }
  }
  if (!any_finite) throw Error("solve_mechanism: every cost is infinite");
  if (finite_mass <= 0.0)
    throw Error("solve_mechanism: target mass entirely on failed noises");

  double c_max = 0.0;
  for (std::size_t i = 0; i < costs.size(); ++i) {
    if (!std::isfinite(costs[i])) continue;
    inst.p_hat[i] = p.p[i] / finite_mass;
    c_max = std::max(c_max, costs[i]);
  }
  inst.c_max = c_max > 0.0 ? c_max : 1.0;
  inst.c_min_support = kInfiniteCost;
  for (std::size_t i = 0; i < costs.size(); ++i) {
    if (!std::isfinite(costs[i]) || inst.p_hat[i] <= 0.0) continue;
    inst.support.push_back(i);
    inst.c_norm[i] = costs[i] / inst.c_max;
    inst.c_min_support = std::min(inst.c_min_support, inst.c_norm[i]);
  }

  const double beta_norm = beta / inst.c_max;
  if (beta_norm < inst.c_min_support - 1e-9)
    throw Error("solve_mechanism: budget below the cheapest feasible noise");

  MechanismDistribution out;
  out.costs = costs;
  SolverReport rep;
  rep.renormalized = excluded;

  // Slack budget: the target itself is feasible and KL-optimal. The margin
  // absorbs dot-product rounding so an exactly-on-budget target stays exact.
  const double target_cost = expected_cost_norm(inst, inst.p_hat);
  if (target_cost <= beta_norm * (1.0 + 1e-12) + 1e-15) {
    out.probs = inst.p_hat;
    rep.mu0 = 0.0;
    rep.lambda = 1.0;
    rep.binding = false;
    rep.expected_cost = target_cost * inst.c_max;
    double res = 0.0;
    for (std::size_t i : inst.support)
      res = std::max(res, std::abs(inst.p_hat[i] - out.probs[i]));
    rep.kkt_residual = res;
    return {out, rep};
  }

  // Zero (or minimum) budget: all mass collapses onto the cheapest noises.
  if (beta_norm <= inst.c_min_support + 1e-15) {
    double mass = 0.0;
    for (std::size_t i : inst.support) {
      if (inst.c_norm[i] <= inst.c_min_support) mass += inst.p_hat[i];
    }
    out.probs.assign(costs.size(), 0.0);
    for (std::size_t i : inst.support) {
      if (inst.c_norm[i] <= inst.c_min_support)
        out.probs[i] = inst.p_hat[i] / mass;
    }
    rep.mu0 = kInfiniteCost;
    rep.lambda = mass;
    rep.binding = true;
    rep.expected_cost = inst.c_min_support * inst.c_max;
    double res = 0.0;  // KKT form restricted to the cheapest set
    for (std::size_t i : inst.support) {
      if (inst.c_norm[i] <= inst.c_min_support)
        res = std::max(res, std::abs(inst.p_hat[i] - out.probs[i] * mass));
    }
    rep.kkt_residual = res;
    return {out, rep};
  }

  // Binding budget: expected cost is strictly decreasing in mu0; bracket then
  // bisect, solving the lambda normalization at every probe.
  double lo = 0.0, hi = 1.0;
  for (int it = 0; it < 80; ++it) {
    const double lambda = solve_lambda(inst, hi);
    if (expected_cost_norm(inst, closed_form(inst, hi, lambda)) <= beta_norm)
      break;
    lo = hi;
    hi *= 2.0;
  }
  double mu0 = hi, lambda = solve_lambda(inst, hi);
  for (int it = 0; it < 500; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double lam = solve_lambda(inst, mid);
    const double cost = expected_cost_norm(inst, closed_form(inst, mid, lam));
    mu0 = mid;
    lambda = lam;
    if (std::abs(cost * inst.c_max - beta) <= 1e-8) break;
    (cost > beta_norm ? lo : hi) = mid;
    if (hi - lo <= 1e-18 * std::max(1.0, hi)) break;
  }

  out.probs = closed_form(inst, mu0, lambda);
  rep.mu0 = mu0 / inst.c_max;  // de-normalize: M_i = p_i/(mu0_raw c_i + lambda)
  rep.lambda = lambda;
  rep.binding = true;
  rep.expected_cost = expected_cost_norm(inst, out.probs) * inst.c_max;
  double res = 0.0;
  for (std::size_t i : inst.support) {
    res = std::max(res, std::abs(inst.p_hat[i] -
                                 out.probs[i] * (rep.mu0 * costs[i] + lambda)));
  }
  rep.kkt_residual = res;
  return {out, rep};
}

std::pair<int, Vec> sample_noise(const MechanismDistribution& M,
                                 const std::vector<Vec>& noises,
                                 std::uint64_t seed) {
  if (M.probs.size() != noises.size())
    throw Error("sample_noise: distribution and noise list length mismatch");
  double sum = 0.0;
  for (double v : M.probs) sum += v;
  if (std::abs(sum - 1.0) > 1e-9)
    throw Error("sample_noise: probabilities do not sum to 1");

  Rng rng(seed);
  const double u = rng.next_double();
  double cum = 0.0;
  int chosen = -1;
  for (std::size_t i = 0; i < M.probs.size(); ++i) {
    if (M.probs[i] <= 0.0) continue;
    chosen = static_cast<int>(i);  // rounding fallback: last positive index
    cum += M.probs[i];
    if (u < cum) break;
  }
  if (chosen < 0) throw Error("sample_noise: no positive probability");
  return {chosen, noises[chosen]};
}

DefendResult defend_with_noises(const std::vector<evade::EvasionResult>& noises,
                                const Vec& x, const TargetDistribution& p,
                                double beta, std::uint64_t seed,
                                const RatingGrid& grid) {
  Vec costs(noises.size());
  std::vector<Vec> vectors(noises.size());
  for (std::size_t i = 0; i < noises.size(); ++i) {
    costs[i] = noises[i].success ? static_cast<double>(noises[i].l0_cost)
                                 : kInfiniteCost;
    vectors[i] = noises[i].noise;
  }
  auto [dist, rep] = solve_mechanism(p, costs, beta);
  auto [index, noise] = sample_noise(dist, vectors, seed);
  DefendResult res;
  res.defended = core::apply_noise(x, noise, grid);
  res.chosen_index = index;
  res.chosen_cost = costs[index];
  res.report = rep;
  return res;
}

DefendResult defend_user(const classify::Classifier& defender, const Vec& x,
                         core::NoiseTypePolicy policy,
                         const TargetDistribution& p, double beta,
                         const evade::PandaConfig& cfg, std::uint64_t seed,
                         const RatingGrid& grid) {
  auto noises = evade::find_all_noises(defender, x, policy, cfg, grid);
  return defend_with_noises(noises, x, p, beta, seed, grid);
}

}  // namespace attrishield::mechanism
