#include "attrishield/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace attrishield::baselines {

namespace {

std::size_t grid_index_of(double v, const RatingGrid& grid) {
  for (std::size_t t = 0; t < grid.size(); ++t) {
    if (std::abs(v - grid.values[t]) <= core::kZeroTol) return t;
  }
  throw core::Error("rr_defend: input entry is not on the grid");
}

/// Inverse-CDF draw from a probability row.
std::size_t sample_row(const Vec& row, core::Rng& rng) {
  const double u = rng.next_double();
  double cum = 0.0;
  std::size_t last_positive = row.size();
  for (std::size_t j = 0; j < row.size(); ++j) {
    if (row[j] <= 0.0) continue;
    last_positive = j;
    cum += row[j];
    if (u < cum) return j;
  }
  if (last_positive == row.size()) {
    throw core::Error("qpm_defend: mapping row has no positive entry");
  }
  return last_positive;
}

}  // namespace

Vec rr_defend(const Vec& x, const RrConfig& cfg, std::uint64_t seed) {
  if (!(cfg.epsilon >= 0.0)) {
    throw core::Error("rr_defend: epsilon must be nonnegative");
  }
  const std::size_t g = cfg.grid.size();
  // 1 / (1 + (g-1) e^-eps) keeps its limits exact for large epsilon.
  const double keep_prob =
      1.0 / (1.0 + static_cast<double>(g - 1) * std::exp(-cfg.epsilon));
  core::Rng rng(seed);
  Vec out(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const std::size_t t = grid_index_of(x[k], cfg.grid);
    if (rng.next_double() < keep_prob) {
      out[k] = cfg.grid.values[t];
    } else {
      std::size_t pick = rng.next_index(g - 1);
      if (pick >= t) ++pick;
      out[k] = cfg.grid.values[pick];
    }
  }
  return out;
}

CorrelationResult correlation_defend(const Vec& x, int true_label, int k,
                                     const classify::LinearSoftmaxModel& lr_model,
                                     const RatingGrid& grid) {
  if (k < 0) throw core::Error("correlation_defend: k must be nonnegative");
  if (true_label < 0 || true_label >= lr_model.num_labels()) {
    throw core::Error("correlation_defend: label out of range");
  }
  if (static_cast<int>(x.size()) != lr_model.dim()) {
    throw core::Error("correlation_defend: dimension mismatch");
  }
  std::vector<std::size_t> zero_indices;
  for (std::size_t j = 0; j < x.size(); ++j) {
    if (std::abs(x[j]) <= core::kZeroTol) zero_indices.push_back(j);
  }
  Vec score(x.size(), -std::numeric_limits<double>::infinity());
  for (int i = 0; i < lr_model.num_labels(); ++i) {
    if (i == true_label) continue;
    for (std::size_t j = 0; j < x.size(); ++j) {
      score[j] = std::max(score[j], lr_model.W[i][j]);
    }
  }
  std::sort(zero_indices.begin(), zero_indices.end(),
            [&](std::size_t a, std::size_t b) {
              if (score[a] != score[b]) return score[a] > score[b];
              return a < b;
            });
  CorrelationResult res;
  res.defended = x;
  res.changed = static_cast<int>(
      std::min<std::size_t>(static_cast<std::size_t>(k), zero_indices.size()));
  for (int t = 0; t < res.changed; ++t) {
    res.defended[zero_indices[static_cast<std::size_t>(t)]] = grid.max_value();
  }
  return res;
}

std::size_t Codebook::assign(const Vec& x) const {
  if (centroids.empty()) throw core::Error("codebook is empty");
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    if (centroids[c].size() != x.size()) {
      throw core::Error("codebook dimension mismatch");
    }
    double d = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double diff = x[j] - centroids[c][j];
      d += diff * diff;
    }
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

Codebook quantize_kmeans(const Dataset& ds, int K, int iters,
                         const core::SeedSpec& seed) {
  const std::size_t n = ds.size();
  if (n == 0) throw core::Error("quantize_kmeans: empty dataset");
  if (K < 1 || static_cast<std::size_t>(K) > n) {
    throw core::Error("quantize_kmeans: K must lie in [1, n]");
  }
  if (iters < 0) throw core::Error("quantize_kmeans: iters must be >= 0");
  core::Rng rng(core::derive_seed(seed.master_seed, "", "kmeans"));
  Codebook cb;
  for (std::size_t idx : rng.sample_without_replacement(n, static_cast<std::size_t>(K))) {
    cb.centroids.push_back(ds.rows[idx].x);
  }
  const std::size_t d = cb.centroids[0].size();
  std::vector<std::size_t> owner(n);
  for (int it = 0; it < iters; ++it) {
    for (std::size_t i = 0; i < n; ++i) owner[i] = cb.assign(ds.rows[i].x);
    std::vector<Vec> sums(static_cast<std::size_t>(K), Vec(d, 0.0));
    std::vector<std::size_t> counts(static_cast<std::size_t>(K), 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[owner[i]];
      for (std::size_t j = 0; j < d; ++j) sums[owner[i]][j] += ds.rows[i].x[j];
    }
    for (std::size_t c = 0; c < static_cast<std::size_t>(K); ++c) {
      if (counts[c] == 0) continue;
      for (std::size_t j = 0; j < d; ++j) {
        cb.centroids[c][j] = sums[c][j] / static_cast<double>(counts[c]);
      }
    }
  }
  return cb;
}

double quantization_distortion(const Dataset& ds, const Codebook& codebook) {
  if (ds.size() == 0) throw core::Error("quantization_distortion: empty dataset");
  double total = 0.0;
  for (const auto& row : ds.rows) {
    const auto& c = codebook.centroids[codebook.assign(row.x)];
    for (std::size_t j = 0; j < row.x.size(); ++j) {
      const double diff = row.x[j] - c[j];
      total += diff * diff;
    }
  }
  return total / static_cast<double>(ds.size());
}

Vec qpm_defend(const Vec& x, const Codebook& codebook,
               const gametheory::ObfuscationMatrix& game_mapping,
               std::uint64_t seed, const RatingGrid& grid) {
  if (game_mapping.f.size() != codebook.size()) {
    throw core::Error("qpm_defend: mapping size does not match codebook");
  }
  const std::size_t from = codebook.assign(x);
  core::Rng rng(seed);
  const std::size_t to = sample_row(game_mapping.f[from], rng);
  Vec out = codebook.centroids[to];
  for (double& v : out) v = core::round_to_grid(v, grid);
  return out;
}

}  // namespace attrishield::baselines
