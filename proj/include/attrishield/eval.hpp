#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "attrishield/classify.hpp"
#include "attrishield/core.hpp"
#include "attrishield/evade.hpp"
#include "attrishield/mechanism.hpp"

namespace attrishield::eval {

using core::Dataset;
using core::Vec;

/// An attack is just a named predictor; how it was built (constant
/// baseline, trained model, region vote, ...) is the caller's business.
struct NamedAttacker {
  std::string name;
  classify::PredictFn predict;
};

/// Inference accuracy of the attacker over the (defended) rows. Labels ride
/// along for scoring only.
double run_attack(const classify::PredictFn& attacker, const Dataset& defended);

/// Phase-I noise sets per user, computed once; they depend only on
/// (defender, x, policy), never on the budget.
using PhaseOneNoises = std::vector<std::vector<evade::EvasionResult>>;

PhaseOneNoises phase_one(const classify::Classifier& defender,
                         const Dataset& ds, core::NoiseTypePolicy policy,
                         const evade::PandaConfig& cfg, int threads);

struct DefendedSet {
  Dataset data;  // same ids and labels, defended vectors
  std::vector<mechanism::DefendResult> results;  // aligned with data.rows
  double mean_l0 = 0.0;
  double mean_l2 = 0.0;
};

/// Phase II for every user at one budget. Per-user seeds derive from
/// (master, user_id, "defend:<beta>"), so output is independent of thread
/// count and of the position of beta inside a sweep.
DefendedSet defend_dataset(const Dataset& ds, const PhaseOneNoises& noises,
                           const mechanism::TargetDistribution& p, double beta,
                           const core::SeedSpec& seed, int threads);

struct SweepRow {
  double beta = 0.0;
  std::string attack;
  double accuracy = 0.0;
  double mean_l0 = 0.0;
  double mean_l2 = 0.0;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  /// Header exactly: beta,attack,accuracy,mean_l0,mean_l2 (6 decimals).
  std::string to_csv() const;
};

/// For each beta (in the given order) defends the whole test set once and
/// evaluates every attacker on the defended rows.
SweepResult sweep_budget(const classify::Classifier& defender,
                         const std::vector<NamedAttacker>& attackers,
                         const Dataset& test, const std::vector<double>& betas,
                         core::NoiseTypePolicy policy,
                         const mechanism::TargetDistribution& p,
                         const evade::PandaConfig& cfg,
                         const core::SeedSpec& seed, int threads);

/// Mean chosen L0 grouped by chosen target index; groups nobody chose are
/// absent.
std::map<int, double> noise_stats(
    const std::vector<mechanism::DefendResult>& results);

struct MfConfig {
  int rank = 10;
  int epochs = 200;
  double learning_rate = 0.05;
  double l2_penalty = 1e-3;
  std::uint64_t seed = 0;
};

struct MfModel {
  std::vector<Vec> user_factors;  // n rows
  std::vector<Vec> item_factors;  // d rows
  int rank = 0;

  double predict(std::size_t user, std::size_t item) const;
};

/// holdout[u] = sorted item indices held out of training for row u.
using Holdout = std::vector<std::vector<std::size_t>>;

/// Up to per_user of each row's nonzero items, drawn without replacement
/// from a per-user derived stream.
Holdout sample_holdout(const Dataset& ds, int per_user,
                       const core::SeedSpec& seed);

/// Stochastic gradient descent on squared error over the observed (nonzero)
/// entries, skipping holdout positions when given. Deterministic under
/// cfg.seed.
MfModel mf_train(const Dataset& ds, const MfConfig& cfg,
                 const Holdout* exclude = nullptr);

/// Mean over users of |top-N ∩ holdout| / N, where top-N ranks the items
/// not observed in training (zeros plus held-out items) by predicted score,
/// ties toward the lower item index.
double mf_topn_precision(const MfModel& model, const Dataset& ds,
                         const Holdout& holdout, int topn);

/// |pre1 - pre2| / pre1; requires pre1 > 0.
double relative_precision_loss(double pre1, double pre2);

}  // namespace attrishield::eval
