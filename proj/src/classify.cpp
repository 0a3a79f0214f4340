#include "attrishield/classify.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <json.hpp>

namespace attrishield::classify {

using core::derive_seed;
using core::Error;
using core::Rng;
using nlohmann::json;

namespace {

void check_dim(const Classifier& model, const Vec& x) {
  if (static_cast<int>(x.size()) != model.dim())
    throw Error("classifier input dimension mismatch");
}

}  // namespace

Vec LinearSoftmaxModel::logits(const Vec& x) const {
  check_dim(*this, x);
  Vec z(W.size(), 0.0);
  for (std::size_t i = 0; i < W.size(); ++i) {
    double acc = b[i];
    for (std::size_t k = 0; k < x.size(); ++k) acc += W[i][k] * x[k];
    z[i] = acc;
  }
  return z;
}

Vec LinearSoftmaxModel::logit_backprop(const Vec& x, const Vec& delta) const {
  check_dim(*this, x);
  if (delta.size() != W.size()) throw Error("delta length mismatch");
  Vec g(x.size(), 0.0);
  for (std::size_t i = 0; i < W.size(); ++i) {
    if (delta[i] == 0.0) continue;
    for (std::size_t k = 0; k < x.size(); ++k) g[k] += delta[i] * W[i][k];
  }
  return g;
}

Vec MlpModel::logits(const Vec& x) const {
  check_dim(*this, x);
  Vec z1(W1.size());
  for (std::size_t j = 0; j < W1.size(); ++j) {
    double acc = b1[j];
    for (std::size_t k = 0; k < x.size(); ++k) acc += W1[j][k] * x[k];
    z1[j] = std::max(acc, 0.0);
  }
  Vec z2(W2.size());
  for (std::size_t i = 0; i < W2.size(); ++i) {
    double acc = b2[i];
    for (std::size_t j = 0; j < z1.size(); ++j) acc += W2[i][j] * z1[j];
    z2[i] = acc;
  }
  return z2;
}

Vec MlpModel::logit_backprop(const Vec& x, const Vec& delta) const {
  check_dim(*this, x);
  if (delta.size() != W2.size()) throw Error("delta length mismatch");
  Vec pre(W1.size());
  for (std::size_t j = 0; j < W1.size(); ++j) {
    double acc = b1[j];
    for (std::size_t k = 0; k < x.size(); ++k) acc += W1[j][k] * x[k];
    pre[j] = acc;
  }
  Vec dh(W1.size(), 0.0);
  for (std::size_t i = 0; i < W2.size(); ++i) {
    if (delta[i] == 0.0) continue;
    for (std::size_t j = 0; j < dh.size(); ++j) dh[j] += delta[i] * W2[i][j];
  }
  Vec g(x.size(), 0.0);
  for (std::size_t j = 0; j < dh.size(); ++j) {
    if (pre[j] <= 0.0 || dh[j] == 0.0) continue;  // subgradient 0 at the kink
    for (std::size_t k = 0; k < x.size(); ++k) g[k] += dh[j] * W1[j][k];
  }
  return g;
}

Vec softmax(const Vec& z) {
  double zmax = *std::max_element(z.begin(), z.end());
  Vec s(z.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    s[i] = std::exp(z[i] - zmax);
    sum += s[i];
  }
  for (double& v : s) v /= sum;
  return s;
}

Vec decision_scores(const Classifier& model, const Vec& x) {
  return softmax(model.logits(x));
}

int predict(const Classifier& model, const Vec& x) {
  Vec s = decision_scores(model, x);
  int best = 0;
  for (std::size_t i = 1; i < s.size(); ++i) {
    if (s[i] > s[best]) best = static_cast<int>(i);
  }
  return best;
}

Vec input_gradient(const Classifier& model, const Vec& x, int i) {
  if (i < 0 || i >= model.num_labels()) throw Error("target label out of range");
  Vec s = decision_scores(model, x);
  // dC_i/dz_j = s_i (1{i=j} - s_j)
  Vec delta(s.size());
  for (std::size_t j = 0; j < s.size(); ++j)
    delta[j] = s[i] * ((static_cast<int>(j) == i ? 1.0 : 0.0) - s[j]);
  return model.logit_backprop(x, delta);
}

double mean_cross_entropy(const Classifier& model, const Dataset& ds) {
  if (ds.rows.empty()) throw Error("empty dataset");
  double total = 0.0;
  for (const auto& row : ds.rows) {
    if (!row.label) throw Error("unlabeled row " + row.user_id);
    Vec s = decision_scores(model, row.x);
    total += -std::log(std::max(s[*row.label], 1e-300));
  }
  return total / static_cast<double>(ds.rows.size());
}

namespace {

void check_training_set(const Dataset& ds) {
  if (ds.rows.empty()) throw Error("empty training set");
  if (ds.m < 2) throw Error("need at least 2 labels");
  for (const auto& row : ds.rows) {
    if (!row.label) throw Error("unlabeled row " + row.user_id);
    if (*row.label < 0 || *row.label >= ds.m)
      throw Error("label out of range in row " + row.user_id);
  }
}

std::vector<std::size_t> epoch_order(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(order);
  return order;
}

}  // namespace

LinearSoftmaxModel train_linear(const Dataset& ds, const TrainConfig& cfg) {
  check_training_set(ds);
  if (cfg.batch_size < 1 || cfg.learning_rate <= 0.0 || cfg.epochs < 0)
    throw Error("bad training config");
  const std::size_t n = ds.rows.size();
  const int m = ds.m, d = ds.d;
  LinearSoftmaxModel model(m, d);
  Rng rng(derive_seed(cfg.seed, "", "train_linear"));

  std::vector<Vec> gW(m, Vec(d, 0.0));
  Vec gb(m, 0.0);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto order = epoch_order(n, rng);
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t stop = std::min(n, start + cfg.batch_size);
      for (auto& row : gW) std::fill(row.begin(), row.end(), 0.0);
      std::fill(gb.begin(), gb.end(), 0.0);
      for (std::size_t t = start; t < stop; ++t) {
        const auto& row = ds.rows[order[t]];
        Vec s = decision_scores(model, row.x);
        s[*row.label] -= 1.0;  // dz of cross-entropy
        for (int i = 0; i < m; ++i) {
          if (s[i] == 0.0) continue;
          for (int k = 0; k < d; ++k) gW[i][k] += s[i] * row.x[k];
          gb[i] += s[i];
        }
      }
      const double inv = 1.0 / static_cast<double>(stop - start);
      for (int i = 0; i < m; ++i) {
        for (int k = 0; k < d; ++k) {
          model.W[i][k] -= cfg.learning_rate *
              (gW[i][k] * inv + 2.0 * cfg.l2_penalty * model.W[i][k]);
        }
        model.b[i] -= cfg.learning_rate * gb[i] * inv;
      }
    }
  }
  return model;
}

MlpModel train_mlp(const Dataset& ds, const TrainConfig& cfg, int hidden) {
  check_training_set(ds);
  if (hidden < 1) throw Error("hidden width must be positive");
  if (cfg.batch_size < 1 || cfg.learning_rate <= 0.0 || cfg.epochs < 0)
    throw Error("bad training config");
  const std::size_t n = ds.rows.size();
  const int m = ds.m, d = ds.d, h = hidden;
  MlpModel model(m, d, h);
  Rng rng(derive_seed(cfg.seed, "", "train_mlp"));
  const double s1 = 1.0 / std::sqrt(static_cast<double>(d));
  for (auto& row : model.W1)
    for (double& w : row) w = rng.uniform(-s1, s1);
  const double s2 = 1.0 / std::sqrt(static_cast<double>(h));
  for (auto& row : model.W2)
    for (double& w : row) w = rng.uniform(-s2, s2);

  std::vector<Vec> gW1(h, Vec(d, 0.0)), gW2(m, Vec(h, 0.0));
  Vec gb1(h, 0.0), gb2(m, 0.0);
  Vec z1(h), a(h), dz2(m), dh(h);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto order = epoch_order(n, rng);
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t stop = std::min(n, start + cfg.batch_size);
      for (auto& row : gW1) std::fill(row.begin(), row.end(), 0.0);
      for (auto& row : gW2) std::fill(row.begin(), row.end(), 0.0);
      std::fill(gb1.begin(), gb1.end(), 0.0);
      std::fill(gb2.begin(), gb2.end(), 0.0);
      for (std::size_t t = start; t < stop; ++t) {
        const auto& row = ds.rows[order[t]];
        for (int j = 0; j < h; ++j) {
          double acc = model.b1[j];
          for (int k = 0; k < d; ++k) acc += model.W1[j][k] * row.x[k];
          z1[j] = acc;
          a[j] = std::max(acc, 0.0);
        }
        Vec z2(m);
        for (int i = 0; i < m; ++i) {
          double acc = model.b2[i];
          for (int j = 0; j < h; ++j) acc += model.W2[i][j] * a[j];
          z2[i] = acc;
        }
        Vec s = softmax(z2);
        for (int i = 0; i < m; ++i) dz2[i] = s[i] - (i == *row.label ? 1.0 : 0.0);
        for (int i = 0; i < m; ++i) {
          for (int j = 0; j < h; ++j) gW2[i][j] += dz2[i] * a[j];
          gb2[i] += dz2[i];
        }
        for (int j = 0; j < h; ++j) {
          double acc = 0.0;
          for (int i = 0; i < m; ++i) acc += model.W2[i][j] * dz2[i];
          dh[j] = z1[j] > 0.0 ? acc : 0.0;
        }
        for (int j = 0; j < h; ++j) {
          if (dh[j] == 0.0) continue;
          for (int k = 0; k < d; ++k) gW1[j][k] += dh[j] * row.x[k];
          gb1[j] += dh[j];
        }
      }
      const double inv = 1.0 / static_cast<double>(stop - start);
      for (int j = 0; j < h; ++j) {
        for (int k = 0; k < d; ++k) {
          model.W1[j][k] -= cfg.learning_rate *
              (gW1[j][k] * inv + 2.0 * cfg.l2_penalty * model.W1[j][k]);
        }
        model.b1[j] -= cfg.learning_rate * gb1[j] * inv;
      }
      for (int i = 0; i < m; ++i) {
        for (int j = 0; j < h; ++j) {
          model.W2[i][j] -= cfg.learning_rate *
              (gW2[i][j] * inv + 2.0 * cfg.l2_penalty * model.W2[i][j]);
        }
        model.b2[i] -= cfg.learning_rate * gb2[i] * inv;
      }
    }
  }
  return model;
}

int baseline_most_popular(const std::vector<int>& labels) {
  if (labels.empty()) throw Error("no labels");
  std::map<int, int> counts;
  for (int s : labels) counts[s] += 1;
  int best = labels[0], best_count = 0;
  for (const auto& [label, count] : counts) {
    if (count > best_count) {  // map order makes ties pick the lowest label
      best = label;
      best_count = count;
    }
  }
  return best;
}

std::vector<int> region_vote_counts(const Classifier& model, const Vec& x,
                                    double radius, int n_samples,
                                    std::uint64_t seed) {
  check_dim(model, x);
  if (radius < 0.0 || n_samples < 1) throw Error("bad region parameters");
  Rng rng(seed);
  std::vector<int> votes(model.num_labels(), 0);
  Vec probe(x.size());
  for (int t = 0; t < n_samples; ++t) {
    for (std::size_t k = 0; k < x.size(); ++k) {
      const double lo = std::max(0.0, x[k] - radius);
      const double hi = std::min(1.0, x[k] + radius);
      probe[k] = rng.uniform(lo, hi);
    }
    votes[predict(model, probe)] += 1;
  }
  return votes;
}

int region_based_predict(const Classifier& model, const Vec& x, double radius,
                         int n_samples, std::uint64_t seed) {
  auto votes = region_vote_counts(model, x, radius, n_samples, seed);
  int best = 0;
  for (std::size_t i = 1; i < votes.size(); ++i) {
    if (votes[i] > votes[best]) best = static_cast<int>(i);
  }
  return best;
}

MlpModel adversarial_training(const Dataset& ds, const TrainConfig& cfg,
                              int hidden, const DefenseFn& defense_fn) {
  check_training_set(ds);
  Dataset noisy = ds;
  for (auto& row : noisy.rows)
    row.x = defense_fn(row.x, derive_seed(cfg.seed, row.user_id, "advtrain"));
  return train_mlp(noisy, cfg, hidden);
}

double accuracy(const Classifier& model, const Dataset& ds) {
  return accuracy([&](const Vec& x) { return predict(model, x); }, ds);
}

double accuracy(const PredictFn& predictor, const Dataset& ds) {
  if (ds.rows.empty()) throw Error("empty dataset");
  int correct = 0;
  for (const auto& row : ds.rows) {
    if (!row.label) throw Error("unlabeled row " + row.user_id);
    if (predictor(row.x) == *row.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(ds.rows.size());
}

namespace {

json matrix_to_json(const std::vector<Vec>& rows) {
  json out = json::array();
  for (const auto& row : rows)
    for (double v : row) out.push_back(v);
  return out;
}

std::vector<Vec> matrix_from_json(const json& flat, int rows, int cols) {
  if (static_cast<int>(flat.size()) != rows * cols)
    throw Error("model weights: wrong element count");
  std::vector<Vec> out(rows, Vec(cols));
  for (int i = 0; i < rows; ++i)
    for (int k = 0; k < cols; ++k)
      out[i][k] = flat[static_cast<std::size_t>(i) * cols + k].get<double>();
  return out;
}

}  // namespace

std::string LinearSoftmaxModel::serialize() const {
  json j;
  j["kind"] = "linear_softmax";
  j["m"] = num_labels();
  j["d"] = dim();
  j["weights"]["W"] = matrix_to_json(W);
  j["weights"]["b"] = b;
  return j.dump();
}

std::string MlpModel::serialize() const {
  json j;
  j["kind"] = "mlp";
  j["m"] = num_labels();
  j["d"] = dim();
  j["h"] = hidden();
  j["weights"]["W1"] = matrix_to_json(W1);
  j["weights"]["b1"] = b1;
  j["weights"]["W2"] = matrix_to_json(W2);
  j["weights"]["b2"] = b2;
  return j.dump();
}

std::unique_ptr<Classifier> load_model(const std::string& json_text) {
  json j = json::parse(json_text);
  const std::string kind = j.at("kind").get<std::string>();
  const int m = j.at("m").get<int>();
  const int d = j.at("d").get<int>();
  if (kind == "linear_softmax") {
    auto model = std::make_unique<LinearSoftmaxModel>(m, d);
    model->W = matrix_from_json(j.at("weights").at("W"), m, d);
    model->b = j.at("weights").at("b").get<Vec>();
    if (static_cast<int>(model->b.size()) != m) throw Error("bad bias length");
    return model;
  }
  if (kind == "mlp") {
    const int h = j.at("h").get<int>();
    auto model = std::make_unique<MlpModel>(m, d, h);
    model->W1 = matrix_from_json(j.at("weights").at("W1"), h, d);
    model->b1 = j.at("weights").at("b1").get<Vec>();
    model->W2 = matrix_from_json(j.at("weights").at("W2"), m, h);
    model->b2 = j.at("weights").at("b2").get<Vec>();
    if (static_cast<int>(model->b1.size()) != h ||
        static_cast<int>(model->b2.size()) != m)
      throw Error("bad bias length");
    return model;
  }
  throw Error("unknown model kind: " + kind);
}

void save_model_file(const Classifier& model, const std::string& path) {
  core::write_file(path, model.serialize());
}

std::unique_ptr<Classifier> load_model_file(const std::string& path) {
  return load_model(core::read_file(path));
}

}  // namespace attrishield::classify
