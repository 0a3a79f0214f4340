#include "attrishield/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace attrishield::eval {

namespace {

std::string beta_stage(double beta) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "defend:%.17g", beta);
  return buf;
}

void append_f6(std::string& out, double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  out += buf;
}

}  // namespace

double run_attack(const classify::PredictFn& attacker,
                  const Dataset& defended) {
  return classify::accuracy(attacker, defended);
}

PhaseOneNoises phase_one(const classify::Classifier& defender,
                         const Dataset& ds, core::NoiseTypePolicy policy,
                         const evade::PandaConfig& cfg, int threads) {
  evade::PandaConfig run_cfg = cfg;
  run_cfg.policy = policy;
  PhaseOneNoises noises(ds.size());
  core::parallel_for(ds.size(), threads, [&](std::size_t i) {
    noises[i] = evade::find_all_noises(defender, ds.rows[i].x, policy, run_cfg,
                                       ds.grid);
  });
  return noises;
}

DefendedSet defend_dataset(const Dataset& ds, const PhaseOneNoises& noises,
                           const mechanism::TargetDistribution& p, double beta,
                           const core::SeedSpec& seed, int threads) {
  if (noises.size() != ds.size()) {
    throw core::Error("defend_dataset: noises misaligned with dataset");
  }
  DefendedSet out;
  out.data = ds;
  out.results.resize(ds.size());
  const std::string stage = beta_stage(beta);
  core::parallel_for(ds.size(), threads, [&](std::size_t i) {
    const std::uint64_t s =
        core::derive_seed(seed.master_seed, ds.rows[i].user_id, stage);
    out.results[i] = mechanism::defend_with_noises(noises[i], ds.rows[i].x, p,
                                                   beta, s, ds.grid);
    out.data.rows[i].x = out.results[i].defended;
  });
  double sum_l0 = 0.0;
  double sum_l2 = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    Vec r(ds.rows[i].x.size());
    for (std::size_t j = 0; j < r.size(); ++j) {
      r[j] = out.data.rows[i].x[j] - ds.rows[i].x[j];
    }
    sum_l0 += core::l0_norm(r);
    sum_l2 += core::l2_norm(r);
  }
  const double n = ds.size() == 0 ? 1.0 : static_cast<double>(ds.size());
  out.mean_l0 = sum_l0 / n;
  out.mean_l2 = sum_l2 / n;
  return out;
}

std::string SweepResult::to_csv() const {
  std::string out = "beta,attack,accuracy,mean_l0,mean_l2\n";
  for (const auto& row : rows) {
    append_f6(out, row.beta);
    out += ',';
    out += row.attack;
    out += ',';
    append_f6(out, row.accuracy);
    out += ',';
    append_f6(out, row.mean_l0);
    out += ',';
    append_f6(out, row.mean_l2);
    out += '\n';
  }
  return out;
}

SweepResult sweep_budget(const classify::Classifier& defender,
                         const std::vector<NamedAttacker>& attackers,
                         const Dataset& test, const std::vector<double>& betas,
                         core::NoiseTypePolicy policy,
                         const mechanism::TargetDistribution& p,
                         const evade::PandaConfig& cfg,
                         const core::SeedSpec& seed, int threads) {
  if (betas.empty()) throw core::Error("sweep_budget: no budgets given");
  for (double b : betas) {
    if (!(b >= 0.0)) throw core::Error("sweep_budget: negative budget");
  }
  const PhaseOneNoises noises = phase_one(defender, test, policy, cfg, threads);
  SweepResult sweep;
  for (double beta : betas) {
    const DefendedSet defended =
        defend_dataset(test, noises, p, beta, seed, threads);
    for (const auto& attacker : attackers) {
      SweepRow row;
      row.beta = beta;
      row.attack = attacker.name;
      row.accuracy = run_attack(attacker.predict, defended.data);
      row.mean_l0 = defended.mean_l0;
      row.mean_l2 = defended.mean_l2;
      sweep.rows.push_back(std::move(row));
    }
  }
  return sweep;
}

std::map<int, double> noise_stats(
    const std::vector<mechanism::DefendResult>& results) {
  std::map<int, double> sums;
  std::map<int, int> counts;
  for (const auto& res : results) {
    sums[res.chosen_index] += res.chosen_cost;
    counts[res.chosen_index] += 1;
  }
  std::map<int, double> means;
  for (const auto& [target, total] : sums) {
    means[target] = total / counts[target];
  }
  return means;
}

double MfModel::predict(std::size_t user, std::size_t item) const {
  const Vec& u = user_factors.at(user);
  const Vec& v = item_factors.at(item);
  double s = 0.0;
  for (int r = 0; r < rank; ++r) s += u[r] * v[r];
  return s;
}

Holdout sample_holdout(const Dataset& ds, int per_user,
                       const core::SeedSpec& seed) {
  if (per_user < 0) throw core::Error("sample_holdout: negative count");
  Holdout holdout(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    std::vector<std::size_t> rated;
    for (std::size_t j = 0; j < ds.rows[i].x.size(); ++j) {
      if (std::abs(ds.rows[i].x[j]) > core::kZeroTol) rated.push_back(j);
    }
    const std::size_t k =
        std::min(rated.size(), static_cast<std::size_t>(per_user));
    core::Rng rng(
        core::derive_seed(seed.master_seed, ds.rows[i].user_id, "holdout"));
    for (std::size_t pick : rng.sample_without_replacement(rated.size(), k)) {
      holdout[i].push_back(rated[pick]);
    }
    std::sort(holdout[i].begin(), holdout[i].end());
  }
  return holdout;
}

MfModel mf_train(const Dataset& ds, const MfConfig& cfg,
                 const Holdout* exclude) {
  if (ds.size() == 0) throw core::Error("mf_train: empty dataset");
  if (cfg.rank < 1) throw core::Error("mf_train: rank must be >= 1");
  if (cfg.epochs < 0) throw core::Error("mf_train: epochs must be >= 0");
  if (!(cfg.learning_rate > 0.0)) {
    throw core::Error("mf_train: learning rate must be positive");
  }
  if (exclude && exclude->size() != ds.size()) {
    throw core::Error("mf_train: holdout misaligned with dataset");
  }
  const std::size_t d = static_cast<std::size_t>(ds.d);
  core::Rng rng(core::derive_seed(cfg.seed, "", "mf_train"));
  MfModel model;
  model.rank = cfg.rank;
  const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.rank));
  model.user_factors.assign(ds.size(), Vec(static_cast<std::size_t>(cfg.rank)));
  for (auto& row : model.user_factors) {
    for (double& v : row) v = rng.next_double() * scale;
  }
  model.item_factors.assign(d, Vec(static_cast<std::size_t>(cfg.rank)));
  for (auto& row : model.item_factors) {
    for (double& v : row) v = rng.next_double() * scale;
  }

  struct Obs {
    std::size_t user;
    std::size_t item;
    double value;
  };
  std::vector<Obs> observations;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (std::size_t j = 0; j < ds.rows[i].x.size(); ++j) {
      if (std::abs(ds.rows[i].x[j]) <= core::kZeroTol) continue;
      if (exclude && std::binary_search((*exclude)[i].begin(),
                                        (*exclude)[i].end(), j)) {
        continue;
      }
      observations.push_back({i, j, ds.rows[i].x[j]});
    }
  }

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(observations);
    for (const Obs& obs : observations) {
      Vec& u = model.user_factors[obs.user];
      Vec& v = model.item_factors[obs.item];
      const double err = model.predict(obs.user, obs.item) - obs.value;
      for (int r = 0; r < cfg.rank; ++r) {
        const double ur = u[r];
        u[r] -= cfg.learning_rate * (err * v[r] + cfg.l2_penalty * ur);
        v[r] -= cfg.learning_rate * (err * ur + cfg.l2_penalty * v[r]);
      }
    }
  }
  return model;
}

double mf_topn_precision(const MfModel& model, const Dataset& ds,
                         const Holdout& holdout, int topn) {
  if (topn < 1) throw core::Error("mf_topn_precision: N must be >= 1");
  if (holdout.size() != ds.size()) {
    throw core::Error("mf_topn_precision: holdout misaligned with dataset");
  }
  if (model.user_factors.size() != ds.size()) {
    throw core::Error("mf_topn_precision: model misaligned with dataset");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    std::vector<std::size_t> candidates;
    for (std::size_t j = 0; j < ds.rows[i].x.size(); ++j) {
      const bool rated = std::abs(ds.rows[i].x[j]) > core::kZeroTol;
      const bool held =
          std::binary_search(holdout[i].begin(), holdout[i].end(), j);
      if (!rated || held) candidates.push_back(j);
    }
    std::vector<double> score(candidates.size());
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      score[c] = model.predict(i, candidates[c]);
    }
    std::vector<std::size_t> order(candidates.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (score[a] != score[b]) return score[a] > score[b];
      return candidates[a] < candidates[b];
    });
    const std::size_t take =
        std::min(candidates.size(), static_cast<std::size_t>(topn));
    int hits = 0;
    for (std::size_t t = 0; t < take; ++t) {
      if (std::binary_search(holdout[i].begin(), holdout[i].end(),
                             candidates[order[t]])) {
        ++hits;
      }
    }
    total += static_cast<double>(hits) / static_cast<double>(topn);
  }
  return total / static_cast<double>(ds.size() == 0 ? 1 : ds.size());
}

double relative_precision_loss(double pre1, double pre2) {
  if (!(pre1 > 0.0)) {
    throw core::Error("relative_precision_loss: pre1 must be positive");
  }
  return std::abs(pre1 - pre2) / pre1;
}

}  // namespace attrishield::eval
