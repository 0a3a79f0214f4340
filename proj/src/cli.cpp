#include "attrishield/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "attrishield/baselines.hpp"
#include "attrishield/classify.hpp"
#include "attrishield/core.hpp"
#include "attrishield/eval.hpp"
#include "attrishield/evade.hpp"
#include "attrishield/gametheory.hpp"
#include "attrishield/mechanism.hpp"

namespace attrishield::cli {

namespace {

using json = nlohmann::json;
using core::Dataset;
using core::Error;
using core::SeedSpec;
using core::Vec;

std::string fmt6(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

const json& require_key(const json& cfg, const char* key) {
  if (!cfg.contains(key)) {
    throw Error(std::string("config is missing required key \"") + key + "\"");
  }
  return cfg.at(key);
}

template <typename T>
T get_or(const json& cfg, const char* key, T fallback) {
  return cfg.contains(key) ? cfg.at(key).get<T>() : fallback;
}

/// Shared flag state; every subcommand carries the same four flags.
struct CommonFlags {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string out_path;
  int threads = 0;
  bool threads_given = false;
};

struct Run {
  json cfg;
  std::uint64_t seed = 0;
  int threads = 1;
  std::string out_override;
};

Run make_run(const CommonFlags& flags) {
  Run run;
  run.cfg = json::parse(core::read_file(flags.config_path));
  if (!run.cfg.is_object()) throw Error("config root must be a JSON object");
  run.seed = flags.seed_given ? flags.seed
                              : get_or<std::uint64_t>(run.cfg, "seed", 0);
  if (flags.threads_given) {
    run.threads = flags.threads;
  } else if (const char* env = std::getenv("ATTRISHIELD_THREADS")) {
    run.threads = std::atoi(env);
  } else {
    run.threads = get_or<int>(run.cfg, "threads", 1);
  }
  if (run.threads < 1) throw Error("threads must be >= 1");
  run.out_override = flags.out_path;
  return run;
}

/// Primary output path: the --out flag wins over the config key.
std::string out_path(const Run& run, const char* key) {
  if (!run.out_override.empty()) return run.out_override;
  const std::string path = get_or<std::string>(run.cfg, key, "");
  if (path.empty()) {
    throw Error(std::string("no output path: set \"") + key +
                "\" in the config or pass --out");
  }
  return path;
}

classify::TrainConfig parse_train(const json& cfg, std::uint64_t seed) {
  classify::TrainConfig tc;
  tc.seed = seed;
  if (!cfg.contains("train")) return tc;
  const json& t = cfg.at("train");
  tc.epochs = get_or<int>(t, "epochs", tc.epochs);
  tc.batch_size = get_or<int>(t, "batch_size", tc.batch_size);
  tc.learning_rate = get_or<double>(t, "learning_rate", tc.learning_rate);
  tc.l2_penalty = get_or<double>(t, "l2_penalty", tc.l2_penalty);
  return tc;
}

evade::PandaConfig parse_panda(const json& cfg) {
  evade::PandaConfig pc;
  if (cfg.contains("panda")) {
    const json& p = cfg.at("panda");
    pc.tau = get_or<double>(p, "tau", pc.tau);
    pc.max_iters = get_or<int>(p, "max_iters", pc.max_iters);
  }
  pc.policy = core::policy_from_string(
      get_or<std::string>(cfg, "policy", "modify_add"));
  return pc;
}

mechanism::TargetDistribution parse_target(const json& cfg,
                                           const Dataset& ds) {
  const std::string kind = get_or<std::string>(cfg, "target", "uniform");
  if (kind == "uniform") return mechanism::target_uniform(ds.m);
  if (kind == "empirical") {
    return mechanism::target_empirical(ds.labels(), ds.m);
  }
  throw Error("target must be \"uniform\" or \"empirical\"");
}

/// Stable seed for per-vector streams that have no user identity, such as
/// region sampling around an arbitrary query point.
std::uint64_t hash_vec(const Vec& x, std::uint64_t base) {
  std::uint64_t h = 14695981039346656037ULL ^ base;
  for (double v : x) {
    std::uint64_t bits = 0;
    std::memcpy(&bits, &v, sizeof(bits));
    for (int byte = 0; byte < 8; ++byte) {
      h ^= (bits >> (8 * byte)) & 0xFF;
      h *= 1099511628211ULL;
    }
  }
  h ^= h >> 30;
  h *= 0xbf58476d1ce4e5b9ULL;
  h ^= h >> 27;
  h *= 0x94d049bb133111ebULL;
  h ^= h >> 31;
  return h;
}

/// Builds a named predictor; the lambda owns whatever model it loaded.
eval::NamedAttacker parse_attacker(const json& spec,
                                   std::uint64_t master_seed) {
  if (!spec.is_object()) throw Error("attacker spec must be a JSON object");
  const std::string kind = require_key(spec, "kind").get<std::string>();
  eval::NamedAttacker attacker;
  attacker.name = get_or<std::string>(spec, "name", kind);
  if (kind == "ba") {
    const auto train = core::load_jsonl(
        require_key(spec, "train_dataset").get<std::string>());
    const int modal = classify::baseline_most_popular(train.labels());
    attacker.predict = [modal](const Vec&) { return modal; };
    return attacker;
  }
  if (kind == "lr" || kind == "nn" || kind == "at") {
    auto model = std::shared_ptr<classify::Classifier>(
        classify::load_model_file(require_key(spec, "model").get<std::string>()));
    attacker.predict = [model](const Vec& x) {
      return classify::predict(*model, x);
    };
    return attacker;
  }
  if (kind == "rc") {
    auto model = std::shared_ptr<classify::Classifier>(
        classify::load_model_file(require_key(spec, "model").get<std::string>()));
    const double radius = get_or<double>(spec, "radius", 0.05);
    const int samples = get_or<int>(spec, "samples", 100);
    const std::uint64_t base = core::derive_seed(master_seed, "", "rc");
    attacker.predict = [model, radius, samples, base](const Vec& x) {
      return classify::region_based_predict(*model, x, radius, samples,
                                            hash_vec(x, base));
    };
    return attacker;
  }
  throw Error("unknown attacker kind \"" + kind +
              "\" (expected ba, lr, nn, rc or at)");
}

// --- defenses shared by defend, attack pipelines and recsys-eval ---

struct DefenseOutput {
  Dataset defended;
  std::string sidecar_csv;
  double mean_l0 = 0.0;
};

constexpr char kSidecarHeader[] =
    "user_id,method,chosen_index,l0_cost,binding,mu0,lambda\n";

double noise_l0(const Vec& before, const Vec& after) {
  Vec r(before.size());
  for (std::size_t j = 0; j < r.size(); ++j) r[j] = after[j] - before[j];
  return core::l0_norm(r);
}

/// Sidecar row for defenses without a Phase-II report.
void append_plain_row(std::string& csv, const std::string& user_id,
                      const std::string& method, double l0) {
  csv += user_id;
  csv += ',';
  csv += method;
  csv += ",,";
  csv += fmt6(l0);
  csv += ",,,\n";
}

DefenseOutput defend_twophase(const Dataset& ds,
                              const classify::Classifier& defender,
                              const json& cfg, std::uint64_t seed,
                              int threads) {
  const double beta = require_key(cfg, "beta").get<double>();
  const auto pcfg = parse_panda(cfg);
  const auto p = parse_target(cfg, ds);
  const auto noises = eval::phase_one(defender, ds, pcfg.policy, pcfg, threads);
  auto set = eval::defend_dataset(ds, noises, p, beta, SeedSpec{seed}, threads);
  DefenseOutput out;
  out.defended = std::move(set.data);
  out.mean_l0 = set.mean_l0;
  out.sidecar_csv = kSidecarHeader;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& res = set.results[i];
    out.sidecar_csv += ds.rows[i].user_id;
    out.sidecar_csv += ",twophase,";
    out.sidecar_csv += std::to_string(res.chosen_index + 1);  // 1-based label
    out.sidecar_csv += ',';
    out.sidecar_csv += fmt6(res.chosen_cost);
    out.sidecar_csv += ',';
    out.sidecar_csv += res.report.binding ? "true" : "false";
    out.sidecar_csv += ',';
    out.sidecar_csv += fmt6(res.report.mu0);
    out.sidecar_csv += ',';
    out.sidecar_csv += fmt6(res.report.lambda);
    out.sidecar_csv += '\n';
  }
  return out;
}

DefenseOutput defend_rr(const Dataset& ds, const json& cfg,
                        std::uint64_t seed, int threads) {
  baselines::RrConfig rr;
  rr.epsilon = require_key(cfg, "epsilon").get<double>();
  rr.grid = ds.grid;
  char stage[48];
  std::snprintf(stage, sizeof(stage), "rr:%.17g", rr.epsilon);
  DefenseOutput out;
  out.defended = ds;
  core::parallel_for(ds.size(), threads, [&](std::size_t i) {
    out.defended.rows[i].x = baselines::rr_defend(
        ds.rows[i].x, rr,
        core::derive_seed(seed, ds.rows[i].user_id, stage));
  });
  out.sidecar_csv = kSidecarHeader;
  double total = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const double l0 = noise_l0(ds.rows[i].x, out.defended.rows[i].x);
    total += l0;
    append_plain_row(out.sidecar_csv, ds.rows[i].user_id, "rr", l0);
  }
  out.mean_l0 = ds.size() ? total / static_cast<double>(ds.size()) : 0.0;
  return out;
}

DefenseOutput defend_corr(const Dataset& ds,
                          const classify::Classifier& defender,
                          const json& cfg, int threads) {
  const auto* linear =
      dynamic_cast<const classify::LinearSoftmaxModel*>(&defender);
  if (!linear) {
    throw Error("the correlation defense needs a linear defender model");
  }
  const int k = get_or<int>(cfg, "k", 10);
  DefenseOutput out;
  out.defended = ds;
  core::parallel_for(ds.size(), threads, [&](std::size_t i) {
    if (!ds.rows[i].label) {
      throw Error("correlation defense needs labeled rows");
    }
    out.defended.rows[i].x =
        baselines::correlation_defend(ds.rows[i].x, *ds.rows[i].label, k,
                                      *linear, ds.grid)
            .defended;
  });
  out.sidecar_csv = kSidecarHeader;
  double total = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const double l0 = noise_l0(ds.rows[i].x, out.defended.rows[i].x);
    total += l0;
    append_plain_row(out.sidecar_csv, ds.rows[i].user_id, "corr", l0);
  }
  out.mean_l0 = ds.size() ? total / static_cast<double>(ds.size()) : 0.0;
  return out;
}

DefenseOutput defend_qpm(const Dataset& ds, const json& cfg,
                         std::uint64_t seed, int threads) {
  const double beta = require_key(cfg, "beta").get<double>();
  int clusters = 16;
  int iters = 50;
  if (cfg.contains("qpm")) {
    clusters = get_or<int>(cfg.at("qpm"), "clusters", clusters);
    iters = get_or<int>(cfg.at("qpm"), "iters", iters);
  }
  const auto cb = baselines::quantize_kmeans(ds, clusters, iters, SeedSpec{seed});
  const std::size_t K = cb.size();

  // Joint law of (label, assigned centroid), estimated on the dataset.
  std::vector<std::size_t> owner(ds.size());
  core::parallel_for(ds.size(), threads, [&](std::size_t i) {
    owner[i] = cb.assign(ds.rows[i].x);
  });
  gametheory::JointDistribution joint;
  joint.pr.assign(static_cast<std::size_t>(ds.m), Vec(K, 0.0));
  const auto labels = ds.labels();
  for (std::size_t i = 0; i < ds.size(); ++i) {
    joint.pr[static_cast<std::size_t>(labels[i])][owner[i]] +=
        1.0 / static_cast<double>(ds.size());
  }

  // Utility loss between centroids is the L0 distance of their snapped
  // forms, matching the budget units of the two-phase defense.
  std::vector<Vec> snapped(K);
  for (std::size_t c = 0; c < K; ++c) {
    snapped[c] = cb.centroids[c];
    for (double& v : snapped[c]) v = core::round_to_grid(v, ds.grid);
  }
  gametheory::Table d_q(K, Vec(K, 0.0));
  for (std::size_t a = 0; a < K; ++a) {
    for (std::size_t b = 0; b < K; ++b) {
      if (a == b) continue;
      Vec r(snapped[a].size());
      for (std::size_t j = 0; j < r.size(); ++j) {
        r[j] = snapped[a][j] - snapped[b][j];
      }
      d_q[a][b] = core::l0_norm(r);
    }
  }
  const auto [mapping, objective] = gametheory::solve_game_lp(
      joint, gametheory::zero_one_privacy_loss(ds.m), d_q, beta);

  DefenseOutput out;
  out.defended = ds;
  core::parallel_for(ds.size(), threads, [&](std::size_t i) {
    out.defended.rows[i].x = baselines::qpm_defend(
        ds.rows[i].x, cb, mapping,
        core::derive_seed(seed, ds.rows[i].user_id, "qpm"), ds.grid);
  });
  out.sidecar_csv = kSidecarHeader;
  double total = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const double l0 = noise_l0(ds.rows[i].x, out.defended.rows[i].x);
    total += l0;
    append_plain_row(out.sidecar_csv, ds.rows[i].user_id, "qpm", l0);
  }
  out.mean_l0 = ds.size() ? total / static_cast<double>(ds.size()) : 0.0;
  return out;
}

DefenseOutput run_defense(const std::string& method, const Dataset& ds,
                          const json& cfg, std::uint64_t seed, int threads) {
  if (method == "twophase" || method == "corr") {
    const auto model = classify::load_model_file(
        require_key(cfg, "defender_model").get<std::string>());
    if (method == "twophase") {
      return defend_twophase(ds, *model, cfg, seed, threads);
    }
    return defend_corr(ds, *model, cfg, threads);
  }
  if (method == "rr") return defend_rr(ds, cfg, seed, threads);
  if (method == "qpm") return defend_qpm(ds, cfg, seed, threads);
  throw Error("unknown defense method \"" + method +
              "\" (expected twophase, rr, corr or qpm)");
}

// --- subcommands ---

void cmd_gen_data(const Run& run) {
  core::SynthConfig synth;
  if (run.cfg.contains("synth")) {
    const json& s = run.cfg.at("synth");
    synth.d = get_or<int>(s, "d", synth.d);
    synth.m = get_or<int>(s, "m", synth.m);
    synth.n = get_or<int>(s, "n", synth.n);
    synth.sparsity = get_or<double>(s, "sparsity", synth.sparsity);
    synth.signal = get_or<double>(s, "signal", synth.signal);
  }
  const auto ds = core::synth_generate(synth, SeedSpec{run.seed});
  core::save_jsonl(ds, out_path(run, "dataset_out"));
}

void cmd_train(const Run& run) {
  const auto ds =
      core::load_jsonl(require_key(run.cfg, "dataset").get<std::string>());
  const std::string kind = get_or<std::string>(run.cfg, "model", "linear");
  const auto tc = parse_train(run.cfg, run.seed);
  const std::string path = out_path(run, "model_out");
  if (kind == "linear") {
    classify::save_model_file(classify::train_linear(ds, tc), path);
    return;
  }
  if (kind != "mlp") throw Error("model must be \"linear\" or \"mlp\"");
  const int hidden = get_or<int>(run.cfg, "hidden", 64);
  if (!run.cfg.contains("adversarial")) {
    classify::save_model_file(classify::train_mlp(ds, tc, hidden), path);
    return;
  }
  const json& adv = run.cfg.at("adversarial");
  const auto defender = classify::load_model_file(
      require_key(adv, "defender_model").get<std::string>());
  const double beta = require_key(adv, "beta").get<double>();
  const auto pcfg = parse_panda(adv);
  const auto p = parse_target(adv, ds);
  const auto& grid = ds.grid;
  const classify::DefenseFn defense = [&](const Vec& x, std::uint64_t s) {
    return mechanism::defend_user(*defender, x, pcfg.policy, p, beta, pcfg, s,
                                  grid)
        .defended;
  };
  classify::save_model_file(
      classify::adversarial_training(ds, tc, hidden, defense), path);
}

void cmd_defend(const Run& run) {
  const auto ds =
      core::load_jsonl(require_key(run.cfg, "dataset").get<std::string>());
  const std::string method =
      get_or<std::string>(run.cfg, "method", "twophase");
  const auto out = run_defense(method, ds, run.cfg, run.seed, run.threads);
  const std::string defended_path = out_path(run, "defended_out");
  core::save_jsonl(out.defended, defended_path);
  const std::string sidecar = get_or<std::string>(
      run.cfg, "sidecar_out", defended_path + ".sidecar.csv");
  core::write_file(sidecar, out.sidecar_csv);
}

void cmd_attack(const Run& run, std::ostream& fallback) {
  const auto ds =
      core::load_jsonl(require_key(run.cfg, "dataset").get<std::string>());
  const auto attacker = parse_attacker(require_key(run.cfg, "attacker"), run.seed);
  const double acc = eval::run_attack(attacker.predict, ds);
  std::string csv = "attack,accuracy\n";
  csv += attacker.name;
  csv += ',';
  csv += fmt6(acc);
  csv += '\n';
  const std::string path = run.out_override.empty()
                               ? get_or<std::string>(run.cfg, "out", "")
                               : run.out_override;
  if (path.empty()) {
    fallback << csv;
  } else {
    core::write_file(path, csv);
  }
}

void cmd_sweep(const Run& run) {
  const auto ds =
      core::load_jsonl(require_key(run.cfg, "dataset").get<std::string>());
  const auto defender = classify::load_model_file(
      require_key(run.cfg, "defender_model").get<std::string>());
  const json& specs = require_key(run.cfg, "attackers");
  if (!specs.is_array() || specs.empty()) {
    throw Error("\"attackers\" must be a nonempty array");
  }
  std::vector<eval::NamedAttacker> attackers;
  for (const json& spec : specs) {
    attackers.push_back(parse_attacker(spec, run.seed));
  }
  const auto betas = require_key(run.cfg, "betas").get<std::vector<double>>();
  const auto pcfg = parse_panda(run.cfg);
  const auto p = parse_target(run.cfg, ds);
  const auto sweep =
      eval::sweep_budget(*defender, attackers, ds, betas, pcfg.policy, p, pcfg,
                         SeedSpec{run.seed}, run.threads);
  core::write_file(out_path(run, "sweep_out"), sweep.to_csv());
}

void cmd_compare_evasion(const Run& run) {
  const auto ds =
      core::load_jsonl(require_key(run.cfg, "dataset").get<std::string>());
  const auto defender = classify::load_model_file(
      require_key(run.cfg, "defender_model").get<std::string>());
  std::vector<std::string> policies = {"modify_add", "add_new", "modify_exist"};
  if (run.cfg.contains("policies")) {
    policies = run.cfg.at("policies").get<std::vector<std::string>>();
  }
  evade::PandaConfig pcfg = parse_panda(run.cfg);
  const double epsilon = get_or<double>(run.cfg, "fgsm_epsilon", 1.0);

  struct Cell {
    long attempts = 0;
    long successes = 0;
    double l0 = 0.0;
    double l2 = 0.0;
  };
  // Row order: panda per policy, then jsma and fgsm under modify_add.
  std::vector<std::pair<std::string, std::string>> keys;
  for (const auto& pol : policies) keys.emplace_back("panda", pol);
  keys.emplace_back("jsma", "modify_add");
  keys.emplace_back("fgsm", "modify_add");
  std::vector<std::vector<Cell>> per_user(ds.size(),
                                          std::vector<Cell>(keys.size()));

  core::parallel_for(ds.size(), run.threads, [&](std::size_t i) {
    const Vec& x = ds.rows[i].x;
    const int predicted = classify::predict(*defender, x);
    for (std::size_t key = 0; key < keys.size(); ++key) {
      const auto& [method, pol] = keys[key];
      evade::PandaConfig cfg = pcfg;
      cfg.policy = core::policy_from_string(pol);
      for (int target = 0; target < ds.m; ++target) {
        if (target == predicted) continue;
        evade::EvasionResult res;
        if (method == "panda") {
          res = evade::panda(*defender, x, target, cfg, ds.grid);
        } else if (method == "jsma") {
          res = evade::jsma(*defender, x, target, cfg, ds.grid);
        } else {
          res = evade::fgsm(*defender, x, target, epsilon, ds.grid);
        }
        Cell& cell = per_user[i][key];
        ++cell.attempts;
        if (res.success) {
          ++cell.successes;
          cell.l0 += res.l0_cost;
          cell.l2 += core::l2_norm(res.noise);
        }
      }
    }
  });

  std::string csv = "method,policy,success_rate,mean_l0,mean_l2\n";
  for (std::size_t key = 0; key < keys.size(); ++key) {
    Cell total;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      total.attempts += per_user[i][key].attempts;
      total.successes += per_user[i][key].successes;
      total.l0 += per_user[i][key].l0;
      total.l2 += per_user[i][key].l2;
    }
    const double rate =
        total.attempts ? static_cast<double>(total.successes) /
                             static_cast<double>(total.attempts)
                       : 0.0;
    const double denom = total.successes ? total.successes : 1;
    csv += keys[key].first;
    csv += ',';
    csv += keys[key].second;
    csv += ',';
    csv += fmt6(rate);
    csv += ',';
    csv += fmt6(total.l0 / denom);
    csv += ',';
    csv += fmt6(total.l2 / denom);
    csv += '\n';
  }
  core::write_file(out_path(run, "out"), csv);
}

void cmd_game_lp(const Run& run) {
  const auto inst = gametheory::load_game_instance(
      core::read_file(require_key(run.cfg, "instance").get<std::string>()));
  const auto [f, objective] =
      gametheory::solve_game_lp(inst.joint, inst.d_p, inst.d_q, inst.beta);
  core::write_file(out_path(run, "out"),
                   gametheory::solution_csv(f, objective));
}

void cmd_recsys_eval(const Run& run) {
  const auto ds =
      core::load_jsonl(require_key(run.cfg, "dataset").get<std::string>());
  std::vector<std::string> methods = {"twophase", "rr"};
  if (run.cfg.contains("methods")) {
    methods = run.cfg.at("methods").get<std::vector<std::string>>();
  }
  const int topn = get_or<int>(run.cfg, "topn", 10);
  const int per_user = get_or<int>(run.cfg, "holdout_per_user", 5);

  eval::MfConfig mf;
  mf.seed = run.seed;
  if (run.cfg.contains("mf")) {
    const json& m = run.cfg.at("mf");
    mf.rank = get_or<int>(m, "rank", mf.rank);
    mf.epochs = get_or<int>(m, "epochs", mf.epochs);
    mf.learning_rate = get_or<double>(m, "learning_rate", mf.learning_rate);
    mf.l2_penalty = get_or<double>(m, "l2_penalty", mf.l2_penalty);
  }

  const auto holdout = eval::sample_holdout(ds, per_user, SeedSpec{run.seed});
  const auto clean_model = eval::mf_train(ds, mf, &holdout);
  const double pre1 = eval::mf_topn_precision(clean_model, ds, holdout, topn);
  if (!(pre1 > 0.0)) {
    throw Error("clean top-N precision is zero; relative loss is undefined");
  }

  std::string csv = "method,N,precision,relative_loss\n";
  csv += "none," + std::to_string(topn) + "," + fmt6(pre1) + "," + fmt6(0.0) +
         "\n";
  for (const auto& method : methods) {
    const auto defended =
        run_defense(method, ds, run.cfg, run.seed, run.threads);
    // Pre2's recommender trains on the defended data (same holdout items).
    const auto model = eval::mf_train(defended.defended, mf, &holdout);
    const double pre2 =
        eval::mf_topn_precision(model, defended.defended, holdout, topn);
    csv += method;
    csv += ',';
    csv += std::to_string(topn);
    csv += ',';
    csv += fmt6(pre2);
    csv += ',';
    csv += fmt6(eval::relative_precision_loss(pre1, pre2));
    csv += '\n';
  }
  core::write_file(out_path(run, "out"), csv);
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"attrishield: two-phase attribute-inference defense toolkit"};
  app.require_subcommand(1);

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"gen-data", "generate a synthetic rating dataset"},
      {"train", "train a defender or attacker classifier"},
      {"defend", "apply a defense and write the defended dataset"},
      {"attack", "score an attacker on a (defended) dataset"},
      {"sweep", "defend at several budgets and score every attacker"},
      {"compare-evasion", "benchmark the Phase-I noise search methods"},
      {"game-lp", "solve a toy obfuscation game exactly"},
      {"recsys-eval", "measure recommendation precision under defenses"},
  };
  std::map<std::string, CommonFlags> flags;
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    CommonFlags& f = flags[name];
    sub->add_option("--config", f.config_path, "JSON config file")
        ->required();
    sub->add_option("--seed", f.seed, "master seed override");
    sub->add_option("--out", f.out_path, "primary output path override");
    sub->add_option("--threads", f.threads, "worker thread count");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n\n" << app.help();
    return 2;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  CommonFlags& f = flags[name];
  CLI::App* sub = app.get_subcommand(name);
  f.seed_given = sub->count("--seed") > 0;
  f.threads_given = sub->count("--threads") > 0;

  try {
    const Run run = make_run(f);
    if (name == "gen-data") {
      cmd_gen_data(run);
    } else if (name == "train") {
      cmd_train(run);
    } else if (name == "defend") {
      cmd_defend(run);
    } else if (name == "attack") {
      cmd_attack(run, out);
    } else if (name == "sweep") {
      cmd_sweep(run);
    } else if (name == "compare-evasion") {
      cmd_compare_evasion(run);
    } else if (name == "game-lp") {
      cmd_game_lp(run);
    } else {
      cmd_recsys_eval(run);
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace attrishield::cli
