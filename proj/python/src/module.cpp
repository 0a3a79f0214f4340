#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "attrishield/baselines.hpp"
#include "attrishield/classify.hpp"
#include "attrishield/core.hpp"
#include "attrishield/eval.hpp"
#include "attrishield/evade.hpp"
#include "attrishield/gametheory.hpp"
#include "attrishield/mechanism.hpp"

namespace py = pybind11;

using namespace attrishield;
using core::Dataset;
using core::RatingGrid;
using core::SeedSpec;
using core::Vec;

namespace {

classify::TrainConfig train_config(int epochs, int batch_size,
                                   double learning_rate, double l2_penalty,
                                   std::uint64_t seed) {
  classify::TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.batch_size = batch_size;
  cfg.learning_rate = learning_rate;
  cfg.l2_penalty = l2_penalty;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Two-phase attribute-inference defense: adversarial-example "
            "noise search plus KL-optimal randomized noise selection.";
  m.attr("__version__") = "0.1.0";

  py::register_exception<core::Error>(m, "AttriShieldError");

  // --- core -----------------------------------------------------------

  py::class_<RatingGrid>(m, "RatingGrid")
      .def(py::init<>())
      .def(py::init<std::vector<double>>(), py::arg("values"))
      .def_readonly("values", &RatingGrid::values)
      .def("max_value", &RatingGrid::max_value)
      .def("contains", &RatingGrid::contains, py::arg("v"))
      .def("__repr__", [](const RatingGrid& g) {
        std::string s = "RatingGrid([";
        for (std::size_t i = 0; i < g.values.size(); ++i) {
          if (i) s += ", ";
          s += std::to_string(g.values[i]);
        }
        return s + "])";
      });

  py::enum_<core::NoiseTypePolicy>(m, "NoiseTypePolicy")
      .value("ModifyExist", core::NoiseTypePolicy::ModifyExist)
      .value("AddNew", core::NoiseTypePolicy::AddNew)
      .value("ModifyAdd", core::NoiseTypePolicy::ModifyAdd);

  py::class_<Dataset>(m, "Dataset")
      .def_readonly("d", &Dataset::d)
      .def_readonly("m", &Dataset::m)
      .def_readonly("grid", &Dataset::grid)
      .def("__len__", &Dataset::size)
      .def("labels", &Dataset::labels)
      .def("validate", &Dataset::validate)
      .def("user_id",
           [](const Dataset& ds, std::size_t i) {
             return ds.rows.at(i).user_id;
           },
           py::arg("i"))
      .def("features",
           [](const Dataset& ds, std::size_t i) { return ds.rows.at(i).x; },
           py::arg("i"))
      .def("label",
           [](const Dataset& ds, std::size_t i) { return ds.rows.at(i).label; },
           py::arg("i"))
      .def("to_jsonl", [](const Dataset& ds) { return core::to_jsonl(ds); });

  m.def("synth_generate",
        [](int d, int mm, int n, double sparsity, double signal,
           std::uint64_t seed) {
          core::SynthConfig cfg;
          cfg.d = d;
          cfg.m = mm;
          cfg.n = n;
          cfg.sparsity = sparsity;
          cfg.signal = signal;
          return core::synth_generate(cfg, SeedSpec{seed});
        },
        py::arg("d") = 100, py::arg("m") = 5, py::arg("n") = 1000,
        py::arg("sparsity") = 8.0, py::arg("signal") = 0.8,
        py::arg("seed") = 0);

  m.def("split_overlap",
        [](const Dataset& ds, double alpha_pct, std::uint64_t seed) {
          return core::split_overlap(ds, alpha_pct, SeedSpec{seed});
        },
        py::arg("ds"), py::arg("alpha_pct"), py::arg("seed") = 0);

  m.def("dataset_from_jsonl", &core::from_jsonl, py::arg("text"));
  m.def("load_dataset", &core::load_jsonl, py::arg("path"));
  m.def("save_dataset", &core::save_jsonl, py::arg("ds"), py::arg("path"));

  m.def("derive_seed", &core::derive_seed, py::arg("master"),
        py::arg("user_id"), py::arg("stage"));
  m.def("apply_noise", &core::apply_noise, py::arg("x"), py::arg("r"),
        py::arg("grid") = RatingGrid());
  m.def("kl_divergence", &core::kl_divergence, py::arg("p"), py::arg("q"));
  m.def("l0_norm", &core::l0_norm, py::arg("r"));
  m.def("l2_norm", &core::l2_norm, py::arg("r"));

  // --- classify ---------------------------------------------------------

  py::class_<classify::Classifier>(m, "Classifier")
      .def("num_labels", &classify::Classifier::num_labels)
      .def("dim", &classify::Classifier::dim)
      .def("logits", &classify::Classifier::logits, py::arg("x"))
      .def("serialize", &classify::Classifier::serialize)
      .def("predict",
           [](const classify::Classifier& c, const Vec& x) {
             return classify::predict(c, x);
           },
           py::arg("x"))
      .def("decision_scores",
           [](const classify::Classifier& c, const Vec& x) {
             return classify::decision_scores(c, x);
           },
           py::arg("x"))
      .def("input_gradient",
           [](const classify::Classifier& c, const Vec& x, int i) {
             return classify::input_gradient(c, x, i);
           },
           py::arg("x"), py::arg("i"));

  py::class_<classify::LinearSoftmaxModel, classify::Classifier>(
      m, "LinearSoftmaxModel")
      .def(py::init<>())
      .def(py::init<int, int>(), py::arg("m"), py::arg("d"))
      .def_readwrite("W", &classify::LinearSoftmaxModel::W)
      .def_readwrite("b", &classify::LinearSoftmaxModel::b);

  py::class_<classify::MlpModel, classify::Classifier>(m, "MlpModel")
      .def(py::init<>())
      .def(py::init<int, int, int>(), py::arg("m"), py::arg("d"),
           py::arg("h"))
      .def("hidden", &classify::MlpModel::hidden)
      .def_readwrite("W1", &classify::MlpModel::W1)
      .def_readwrite("b1", &classify::MlpModel::b1)
      .def_readwrite("W2", &classify::MlpModel::W2)
      .def_readwrite("b2", &classify::MlpModel::b2);

  m.def("train_linear",
        [](const Dataset& ds, int epochs, int batch_size, double learning_rate,
           double l2_penalty, std::uint64_t seed) {
          return classify::train_linear(
              ds, train_config(epochs, batch_size, learning_rate, l2_penalty,
                               seed));
        },
        py::arg("ds"), py::arg("epochs") = 200, py::arg("batch_size") = 32,
        py::arg("learning_rate") = 0.1, py::arg("l2_penalty") = 1e-4,
        py::arg("seed") = 0, py::call_guard<py::gil_scoped_release>());

  m.def("train_mlp",
        [](const Dataset& ds, int hidden, int epochs, int batch_size,
           double learning_rate, double l2_penalty, std::uint64_t seed) {
          return classify::train_mlp(
              ds, train_config(epochs, batch_size, learning_rate, l2_penalty,
                               seed),
              hidden);
        },
        py::arg("ds"), py::arg("hidden") = 32, py::arg("epochs") = 200,
        py::arg("batch_size") = 32, py::arg("learning_rate") = 0.1,
        py::arg("l2_penalty") = 1e-4, py::arg("seed") = 0,
        py::call_guard<py::gil_scoped_release>());

  m.def("accuracy",
        [](const classify::Classifier& model, const Dataset& ds) {
          return classify::accuracy(model, ds);
        },
        py::arg("model"), py::arg("ds"));
  m.def("baseline_most_popular", &classify::baseline_most_popular,
        py::arg("labels"));
  m.def("region_based_predict", &classify::region_based_predict,
        py::arg("model"), py::arg("x"), py::arg("radius"),
        py::arg("n_samples"), py::arg("seed"));

  m.def("save_model", &classify::save_model_file, py::arg("model"),
        py::arg("path"));
  m.def("load_model",
        [](const std::string& path) { return classify::load_model_file(path); },
        py::arg("path"));

  // --- evade ---------------------------------------------------------

  py::class_<evade::PandaConfig>(m, "PandaConfig")
      .def(py::init([](double tau, int max_iters,
                       core::NoiseTypePolicy policy) {
             evade::PandaConfig cfg;
             cfg.tau = tau;
             cfg.max_iters = max_iters;
             cfg.policy = policy;
             return cfg;
           }),
           py::arg("tau") = 1.0, py::arg("max_iters") = 100,
           py::arg("policy") = core::NoiseTypePolicy::ModifyAdd)
      .def_readwrite("tau", &evade::PandaConfig::tau)
      .def_readwrite("max_iters", &evade::PandaConfig::max_iters)
      .def_readwrite("policy", &evade::PandaConfig::policy);

  py::class_<evade::EvasionResult>(m, "EvasionResult")
      .def_readonly("target", &evade::EvasionResult::target)
      .def_readonly("noise", &evade::EvasionResult::noise)
      .def_readonly("l0_cost", &evade::EvasionResult::l0_cost)
      .def_readonly("iterations", &evade::EvasionResult::iterations)
      .def_readonly("success", &evade::EvasionResult::success);

  m.def("panda", &evade::panda, py::arg("model"), py::arg("x"),
        py::arg("target"), py::arg("cfg") = evade::PandaConfig(),
        py::arg("grid") = RatingGrid());
  m.def("jsma", &evade::jsma, py::arg("model"), py::arg("x"),
        py::arg("target"), py::arg("cfg") = evade::PandaConfig(),
        py::arg("grid") = RatingGrid());
  m.def("fgsm", &evade::fgsm, py::arg("model"), py::arg("x"),
        py::arg("target"), py::arg("epsilon") = 1.0,
        py::arg("grid") = RatingGrid());
  m.def("find_all_noises", &evade::find_all_noises, py::arg("model"),
        py::arg("x"), py::arg("policy") = core::NoiseTypePolicy::ModifyAdd,
        py::arg("cfg") = evade::PandaConfig(), py::arg("grid") = RatingGrid());

  // --- mechanism ----------------------------------------------------------

  py::class_<mechanism::TargetDistribution>(m, "TargetDistribution")
      .def(py::init([](Vec p) {
             mechanism::TargetDistribution t;
             t.p = std::move(p);
             return t;
           }),
           py::arg("p"))
      .def_readonly("p", &mechanism::TargetDistribution::p);

  m.def("target_uniform", &mechanism::target_uniform, py::arg("m"));
  m.def("target_empirical", &mechanism::target_empirical, py::arg("labels"),
        py::arg("m"));

  py::class_<mechanism::MechanismDistribution>(m, "MechanismDistribution")
      .def_readonly("probs", &mechanism::MechanismDistribution::probs)
      .def_readonly("costs", &mechanism::MechanismDistribution::costs);

  py::class_<mechanism::SolverReport>(m, "SolverReport")
      .def_readonly("mu0", &mechanism::SolverReport::mu0)
      .def_readonly("lambda_", &mechanism::SolverReport::lambda)
      .def_readonly("binding", &mechanism::SolverReport::binding)
      .def_readonly("kkt_residual", &mechanism::SolverReport::kkt_residual)
      .def_readonly("expected_cost", &mechanism::SolverReport::expected_cost)
      .def_readonly("renormalized", &mechanism::SolverReport::renormalized);

  py::class_<mechanism::DefendResult>(m, "DefendResult")
      .def_readonly("defended", &mechanism::DefendResult::defended)
      .def_readonly("chosen_index", &mechanism::DefendResult::chosen_index)
      .def_readonly("chosen_cost", &mechanism::DefendResult::chosen_cost)
      .def_readonly("report", &mechanism::DefendResult::report);

  m.def("solve_mechanism",
        [](const mechanism::TargetDistribution& p, const Vec& costs,
           double beta) { return mechanism::solve_mechanism(p, costs, beta); },
        py::arg("p"), py::arg("costs"), py::arg("beta"));
  m.def("solve_mechanism",
        [](const Vec& p, const Vec& costs, double beta) {
          mechanism::TargetDistribution t;
          t.p = p;
          return mechanism::solve_mechanism(t, costs, beta);
        },
        py::arg("p"), py::arg("costs"), py::arg("beta"));

  m.def("defend_user",
        [](const classify::Classifier& defender, const Vec& x,
           core::NoiseTypePolicy policy, const mechanism::TargetDistribution& p,
           double beta, const evade::PandaConfig& cfg, std::uint64_t seed,
           const RatingGrid& grid) {
          return mechanism::defend_user(defender, x, policy, p, beta, cfg,
                                        seed, grid);
        },
        py::arg("defender"), py::arg("x"), py::arg("policy"), py::arg("p"),
        py::arg("beta"), py::arg("cfg") = evade::PandaConfig(),
        py::arg("seed") = 0, py::arg("grid") = RatingGrid());

  m.def("defend_with_noises", &mechanism::defend_with_noises,
        py::arg("noises"), py::arg("x"), py::arg("p"), py::arg("beta"),
        py::arg("seed") = 0, py::arg("grid") = RatingGrid());

  // --- eval -----------------------------------------------------------

  m.def("phase_one",
        [](const classify::Classifier& defender, const Dataset& ds,
           core::NoiseTypePolicy policy, const evade::PandaConfig& cfg,
           int threads) {
          return eval::phase_one(defender, ds, policy, cfg, threads);
        },
        py::arg("defender"), py::arg("ds"),
        py::arg("policy") = core::NoiseTypePolicy::ModifyAdd,
        py::arg("cfg") = evade::PandaConfig(), py::arg("threads") = 1,
        py::call_guard<py::gil_scoped_release>());

  py::class_<eval::DefendedSet>(m, "DefendedSet")
      .def_readonly("data", &eval::DefendedSet::data)
      .def_readonly("results", &eval::DefendedSet::results)
      .def_readonly("mean_l0", &eval::DefendedSet::mean_l0)
      .def_readonly("mean_l2", &eval::DefendedSet::mean_l2);

  m.def("defend_dataset",
        [](const Dataset& ds, const eval::PhaseOneNoises& noises,
           const mechanism::TargetDistribution& p, double beta,
           std::uint64_t seed, int threads) {
          return eval::defend_dataset(ds, noises, p, beta, SeedSpec{seed},
                                      threads);
        },
        py::arg("ds"), py::arg("noises"), py::arg("p"), py::arg("beta"),
        py::arg("seed") = 0, py::arg("threads") = 1,
        py::call_guard<py::gil_scoped_release>());

  m.def("run_attack",
        [](const classify::Classifier& model, const Dataset& defended) {
          return eval::run_attack(
              [&model](const Vec& x) { return classify::predict(model, x); },
              defended);
        },
        py::arg("attacker"), py::arg("defended"));
  m.def("run_attack",
        [](const classify::PredictFn& attacker, const Dataset& defended) {
          return eval::run_attack(attacker, defended);
        },
        py::arg("attacker"), py::arg("defended"));

  py::class_<eval::SweepRow>(m, "SweepRow")
      .def_readonly("beta", &eval::SweepRow::beta)
      .def_readonly("attack", &eval::SweepRow::attack)
      .def_readonly("accuracy", &eval::SweepRow::accuracy)
      .def_readonly("mean_l0", &eval::SweepRow::mean_l0)
      .def_readonly("mean_l2", &eval::SweepRow::mean_l2);

  py::class_<eval::SweepResult>(m, "SweepResult")
      .def_readonly("rows", &eval::SweepResult::rows)
      .def("to_csv", &eval::SweepResult::to_csv);

  m.def("sweep_budget",
        [](const classify::Classifier& defender,
           const std::vector<std::pair<std::string, const classify::Classifier*>>&
               attackers,
           const Dataset& test, const std::vector<double>& betas,
           core::NoiseTypePolicy policy, const mechanism::TargetDistribution& p,
           const evade::PandaConfig& cfg, std::uint64_t seed, int threads) {
          std::vector<eval::NamedAttacker> named;
          named.reserve(attackers.size());
          for (const auto& [name, model] : attackers) {
            const classify::Classifier* ptr = model;
            named.push_back({name, [ptr](const Vec& x) {
                               return classify::predict(*ptr, x);
                             }});
          }
          return eval::sweep_budget(defender, named, test, betas, policy, p,
                                    cfg, SeedSpec{seed}, threads);
        },
        py::arg("defender"), py::arg("attackers"), py::arg("test"),
        py::arg("betas"), py::arg("policy"), py::arg("p"),
        py::arg("cfg") = evade::PandaConfig(), py::arg("seed") = 0,
        py::arg("threads") = 1);

  m.def("noise_stats", &eval::noise_stats, py::arg("results"));

  m.def("sample_holdout",
        [](const Dataset& ds, int per_user, std::uint64_t seed) {
          return eval::sample_holdout(ds, per_user, SeedSpec{seed});
        },
        py::arg("ds"), py::arg("per_user"), py::arg("seed") = 0);

  py::class_<eval::MfModel>(m, "MfModel")
      .def_readonly("rank", &eval::MfModel::rank)
      .def("predict", &eval::MfModel::predict, py::arg("user"),
           py::arg("item"));

  m.def("mf_train",
        [](const Dataset& ds, int rank, int epochs, double learning_rate,
           double l2_penalty, std::uint64_t seed,
           const std::optional<eval::Holdout>& exclude) {
          eval::MfConfig cfg;
          cfg.rank = rank;
          cfg.epochs = epochs;
          cfg.learning_rate = learning_rate;
          cfg.l2_penalty = l2_penalty;
          cfg.seed = seed;
          return eval::mf_train(ds, cfg, exclude ? &*exclude : nullptr);
        },
        py::arg("ds"), py::arg("rank") = 10, py::arg("epochs") = 200,
        py::arg("learning_rate") = 0.05, py::arg("l2_penalty") = 1e-3,
        py::arg("seed") = 0, py::arg("exclude") = std::nullopt,
        py::call_guard<py::gil_scoped_release>());

  m.def("mf_topn_precision", &eval::mf_topn_precision, py::arg("model"),
        py::arg("ds"), py::arg("holdout"), py::arg("topn") = 10);
  m.def("relative_precision_loss", &eval::relative_precision_loss,
        py::arg("pre1"), py::arg("pre2"));

  // --- baselines ----------------------------------------------------------

  m.def("rr_defend",
        [](const Vec& x, double epsilon, std::uint64_t seed,
           const RatingGrid& grid) {
          baselines::RrConfig cfg;
          cfg.epsilon = epsilon;
          cfg.grid = grid;
          return baselines::rr_defend(x, cfg, seed);
        },
        py::arg("x"), py::arg("epsilon") = 1.0, py::arg("seed") = 0,
        py::arg("grid") = RatingGrid());

  py::class_<baselines::CorrelationResult>(m, "CorrelationResult")
      .def_readonly("defended", &baselines::CorrelationResult::defended)
      .def_readonly("changed", &baselines::CorrelationResult::changed);

  m.def("correlation_defend", &baselines::correlation_defend, py::arg("x"),
        py::arg("true_label"), py::arg("k"), py::arg("lr_model"),
        py::arg("grid") = RatingGrid());

  py::class_<baselines::Codebook>(m, "Codebook")
      .def_readonly("centroids", &baselines::Codebook::centroids)
      .def("__len__", &baselines::Codebook::size)
      .def("assign", &baselines::Codebook::assign, py::arg("x"));

  m.def("quantize_kmeans",
        [](const Dataset& ds, int K, int iters, std::uint64_t seed) {
          return baselines::quantize_kmeans(ds, K, iters, SeedSpec{seed});
        },
        py::arg("ds"), py::arg("K"), py::arg("iters") = 20,
        py::arg("seed") = 0, py::call_guard<py::gil_scoped_release>());
  m.def("quantization_distortion", &baselines::quantization_distortion,
        py::arg("ds"), py::arg("codebook"));
  m.def("qpm_defend", &baselines::qpm_defend, py::arg("x"),
        py::arg("codebook"), py::arg("game_mapping"), py::arg("seed") = 0,
        py::arg("grid") = RatingGrid());

  // --- gametheory ----------------------------------------------------

  py::class_<gametheory::JointDistribution>(m, "JointDistribution")
      .def(py::init([](gametheory::Table pr) {
             gametheory::JointDistribution j;
             j.pr = std::move(pr);
             j.validate();
             return j;
           }),
           py::arg("pr"))
      .def_readonly("pr", &gametheory::JointDistribution::pr)
      .def("num_labels", &gametheory::JointDistribution::num_labels)
      .def("num_points", &gametheory::JointDistribution::num_points)
      .def("marginal_x", &gametheory::JointDistribution::marginal_x)
      .def("marginal_s", &gametheory::JointDistribution::marginal_s);

  py::class_<gametheory::ObfuscationMatrix>(m, "ObfuscationMatrix")
      .def(py::init([](gametheory::Table f) {
             gametheory::ObfuscationMatrix o;
             o.f = std::move(f);
             o.validate();
             return o;
           }),
           py::arg("f"))
      .def_readonly("f", &gametheory::ObfuscationMatrix::f)
      .def_static("identity", &gametheory::ObfuscationMatrix::identity,
                  py::arg("n"));

  m.def("zero_one_privacy_loss", &gametheory::zero_one_privacy_loss,
        py::arg("num_labels"));
  m.def("unit_utility_loss", &gametheory::unit_utility_loss,
        py::arg("num_points"));
  m.def("expected_utility_loss", &gametheory::expected_utility_loss,
        py::arg("f"), py::arg("joint"), py::arg("d_q"));
  m.def("expected_privacy_loss", &gametheory::expected_privacy_loss,
        py::arg("f"), py::arg("joint"), py::arg("d_p"));

  m.def("solve_game_lp",
        [](const gametheory::JointDistribution& joint, double beta,
           const std::optional<gametheory::Table>& d_p,
           const std::optional<gametheory::Table>& d_q) {
          const auto dp =
              d_p ? *d_p : gametheory::zero_one_privacy_loss(joint.num_labels());
          const auto dq =
              d_q ? *d_q : gametheory::unit_utility_loss(joint.num_points());
          return gametheory::solve_game_lp(joint, dp, dq, beta);
        },
        py::arg("joint"), py::arg("beta"), py::arg("d_p") = std::nullopt,
        py::arg("d_q") = std::nullopt,
        py::call_guard<py::gil_scoped_release>());

  m.def("brute_force_game",
        [](const gametheory::JointDistribution& joint, double beta, double step,
           const std::optional<gametheory::Table>& d_p,
           const std::optional<gametheory::Table>& d_q) {
          const auto dp =
              d_p ? *d_p : gametheory::zero_one_privacy_loss(joint.num_labels());
          const auto dq =
              d_q ? *d_q : gametheory::unit_utility_loss(joint.num_points());
          return gametheory::brute_force_game(joint, dp, dq, beta, step);
        },
        py::arg("joint"), py::arg("beta"), py::arg("step") = 0.05,
        py::arg("d_p") = std::nullopt, py::arg("d_q") = std::nullopt,
        py::call_guard<py::gil_scoped_release>());
}
