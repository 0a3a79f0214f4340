#pragma once

#include <string>
#include <utility>
#include <vector>

#include "attrishield/core.hpp"

namespace attrishield::gametheory {

using core::Vec;
using Table = std::vector<Vec>;

/// Joint distribution Pr(s, x) over labels S (rows) and data points X (cols).
struct JointDistribution {
  Table pr;
  int num_labels() const { return static_cast<int>(pr.size()); }
  int num_points() const {
    return pr.empty() ? 0 : static_cast<int>(pr[0].size());
  }
  void validate() const;
  Vec marginal_x() const;
  Vec marginal_s() const;
};

/// Row-stochastic mapping f(x'|x): row x, column x'.
struct ObfuscationMatrix {
  Table f;
  void validate() const;
  static ObfuscationMatrix identity(int n);
};

/// d_p(s, s_hat) = 1 iff the attacker guesses correctly.
Table zero_one_privacy_loss(int num_labels);
/// d_q(x, x') = 1 off the diagonal, 0 on it.
Table unit_utility_loss(int num_points);

/// L = sum_x Pr(x) sum_x' f(x'|x) d_q(x', x).
double expected_utility_loss(const ObfuscationMatrix& f,
                             const JointDistribution& joint, const Table& d_q);

/// sum_x' max_shat sum_s sum_x Pr(s,x) f(x'|x) d_p(s, shat): the adversary
/// best-responds to each noisy point.
double expected_privacy_loss(const ObfuscationMatrix& f,
                             const JointDistribution& joint, const Table& d_p);

/// Minimizes expected privacy loss over row-stochastic f subject to
/// expected utility loss <= beta, as a linear program in f and the
/// per-point worst-case variables y_x'. Dense two-phase simplex with
/// Bland's rule. Domain capped at 64 points.
std::pair<ObfuscationMatrix, double> solve_game_lp(
    const JointDistribution& joint, const Table& d_p, const Table& d_q,
    double beta);

/// Exhaustive grid oracle over 2x2 row-stochastic matrices at the given
/// resolution; keeps the feasible minimizer.
std::pair<ObfuscationMatrix, double> brute_force_game(
    const JointDistribution& joint, const Table& d_p, const Table& d_q,
    double beta, double step);

struct GameInstance {
  JointDistribution joint;
  Table d_p;
  Table d_q;
  double beta = 0.0;
};

/// JSON object {S, X, joint, d_p?, d_q?, beta}; absent losses default to
/// zero_one_privacy_loss / unit_utility_loss.
GameInstance load_game_instance(const std::string& json_text);

/// Rows of f in CSV (6 decimals) followed by an "objective,<value>" line.
std::string solution_csv(const ObfuscationMatrix& f, double objective);

}  // namespace attrishield::gametheory
