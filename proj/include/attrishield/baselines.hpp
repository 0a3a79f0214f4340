#pragma once

#include <cstdint>
#include <vector>

#include "attrishield/classify.hpp"
#include "attrishield/core.hpp"
#include "attrishield/gametheory.hpp"

namespace attrishield::baselines {

using core::Dataset;
using core::RatingGrid;
using core::Vec;

struct RrConfig {
  double epsilon = 1.0;
  RatingGrid grid;
};

/// Generalized randomized response applied independently per entry: the
/// true grid value survives with probability e^eps / (e^eps + g - 1),
/// otherwise one of the other g-1 grid values is drawn uniformly.
Vec rr_defend(const Vec& x, const RrConfig& cfg, std::uint64_t seed);

struct CorrelationResult {
  Vec defended;
  int changed = 0;  // entries actually modified (min of k and available)
};

/// Coefficient-heuristic obfuscation: scores index j by the largest
/// weight W[i][j] over labels i != true_label, then sets the top-k scored
/// entries that are currently zero to the maximum grid value. Nonzero
/// entries are never touched.
CorrelationResult correlation_defend(const Vec& x, int true_label, int k,
                                     const classify::LinearSoftmaxModel& lr_model,
                                     const RatingGrid& grid = {});

struct Codebook {
  std::vector<Vec> centroids;

  std::size_t size() const { return centroids.size(); }
  /// Index of the nearest centroid (squared L2, ties toward lower index).
  std::size_t assign(const Vec& x) const;
};

/// Lloyd's k-means with centroids initialized from K distinct random rows
/// and a fixed iteration count. Clusters that lose all points keep their
/// previous centroid.
Codebook quantize_kmeans(const Dataset& ds, int K, int iters,
                         const core::SeedSpec& seed);

/// Mean squared distance from each row to its assigned centroid.
double quantization_distortion(const Dataset& ds, const Codebook& codebook);

/// Quantization probabilistic mapping: x is assigned to its nearest
/// centroid, a centroid index is sampled from that row of game_mapping,
/// and the sampled centroid is emitted snapped entrywise to the grid.
Vec qpm_defend(const Vec& x, const Codebook& codebook,
               const gametheory::ObfuscationMatrix& game_mapping,
               std::uint64_t seed, const RatingGrid& grid = {});

}  // namespace attrishield::baselines
