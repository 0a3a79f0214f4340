#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "attrishield/core.hpp"

namespace attrishield::classify {

using core::Dataset;
using core::Vec;

/// Differentiable multi-class model. Decision scores are softmax(logits).
class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual int num_labels() const = 0;
  virtual int dim() const = 0;
  virtual Vec logits(const Vec& x) const = 0;
  /// Gradient w.r.t. x of delta . logits(x), for a fixed length-m delta.
  virtual Vec logit_backprop(const Vec& x, const Vec& delta) const = 0;
  /// JSON text that load_model() accepts; doubles survive exactly.
  virtual std::string serialize() const = 0;
};

/// Multi-class logistic regression: logits = Wx + b.
class LinearSoftmaxModel : public Classifier {
 public:
  std::vector<Vec> W;  // m rows, each length d
  Vec b;               // length m

  LinearSoftmaxModel() = default;
  LinearSoftmaxModel(int m, int d)
      : W(m, Vec(d, 0.0)), b(m, 0.0) {}

  int num_labels() const override { return static_cast<int>(W.size()); }
  int dim() const override { return W.empty() ? 0 : static_cast<int>(W[0].size()); }
  Vec logits(const Vec& x) const override;
  Vec logit_backprop(const Vec& x, const Vec& delta) const override;
  std::string serialize() const override;
};

/// Three-layer network: logits = W2 relu(W1 x + b1) + b2.
/// The ReLU subgradient at 0 is taken as 0.
class MlpModel : public Classifier {
 public:
  std::vector<Vec> W1;  // h rows, each length d
  Vec b1;               // length h
  std::vector<Vec> W2;  // m rows, each length h
  Vec b2;               // length m

  MlpModel() = default;
  MlpModel(int m, int d, int h)
      : W1(h, Vec(d, 0.0)), b1(h, 0.0), W2(m, Vec(h, 0.0)), b2(m, 0.0) {}

  int num_labels() const override { return static_cast<int>(W2.size()); }
  int dim() const override { return W1.empty() ? 0 : static_cast<int>(W1[0].size()); }
  int hidden() const { return static_cast<int>(W1.size()); }
  Vec logits(const Vec& x) const override;
  Vec logit_backprop(const Vec& x, const Vec& delta) const override;
  std::string serialize() const override;
};

struct TrainConfig {
  int epochs = 200;
  int batch_size = 32;
  double learning_rate = 0.1;
  double l2_penalty = 1e-4;
  std::uint64_t seed = 0;
};

Vec softmax(const Vec& z);

/// softmax(logits); entries sum to 1.
Vec decision_scores(const Classifier& model, const Vec& x);

/// argmax of decision scores; ties resolved toward the lowest label.
int predict(const Classifier& model, const Vec& x);

/// Exact gradient of decision score C_i w.r.t. x.
Vec input_gradient(const Classifier& model, const Vec& x, int i);

/// Mean cross-entropy of the model on a labeled dataset (no penalty term).
double mean_cross_entropy(const Classifier& model, const Dataset& ds);

/// Mini-batch gradient descent on mean cross-entropy + l2_penalty*||W||^2.
/// Zero initialization; deterministic under cfg.seed.
LinearSoftmaxModel train_linear(const Dataset& ds, const TrainConfig& cfg);

/// Same objective; weights start uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)]
/// drawn from cfg.seed, biases start at zero.
MlpModel train_mlp(const Dataset& ds, const TrainConfig& cfg, int hidden);

/// Modal label; ties resolved toward the lowest label.
int baseline_most_popular(const std::vector<int>& labels);

/// Votes per label from n_samples uniform draws over the axis-aligned box
/// [x - radius, x + radius]^d intersected with [0,1]^d.
std::vector<int> region_vote_counts(const Classifier& model, const Vec& x,
                                    double radius, int n_samples,
                                    std::uint64_t seed);

/// Majority vote over region_vote_counts; ties toward the lowest label.
int region_based_predict(const Classifier& model, const Vec& x, double radius,
                         int n_samples, std::uint64_t seed);

/// Maps (x, per-user seed) to a defended vector.
using DefenseFn = std::function<Vec(const Vec&, std::uint64_t)>;

/// Applies defense_fn to every row (seed derived per user from cfg.seed),
/// then trains an MLP on the defended rows.
MlpModel adversarial_training(const Dataset& ds, const TrainConfig& cfg,
                              int hidden, const DefenseFn& defense_fn);

using PredictFn = std::function<int(const Vec&)>;

double accuracy(const Classifier& model, const Dataset& ds);
double accuracy(const PredictFn& predictor, const Dataset& ds);

std::unique_ptr<Classifier> load_model(const std::string& json_text);
void save_model_file(const Classifier& model, const std::string& path);
std::unique_ptr<Classifier> load_model_file(const std::string& path);

}  // namespace attrishield::classify
