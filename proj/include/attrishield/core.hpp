#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace attrishield::core {

using Vec = std::vector<double>;

/// Error type for all precondition and format failures in this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Entries below this magnitude count as zero for the L0 norm. Guards
/// float dust left behind by grid arithmetic.
inline constexpr double kZeroTol = 1e-12;

/// The discrete set of values a public-data entry may take.
///
/// Values are strictly increasing, live in [0,1] and always include 0
/// (the "not rated" level). The default grid is the six-level rating
/// scale {0, 0.2, 0.4, 0.6, 0.8, 1.0}.
struct RatingGrid {
  std::vector<double> values;

  RatingGrid() : values{0.0, 0.2, 0.4, 0.6, 0.8, 1.0} {}
  explicit RatingGrid(std::vector<double> v);

  std::size_t size() const { return values.size(); }
  double max_value() const { return values.back(); }
  bool contains(double v) const;
  /// Grid levels other than 0, i.e. the actual rating values.
  std::vector<double> nonzero_values() const;
};

/// Nearest grid value; exact ties resolve toward the lower value.
double round_to_grid(double v, const RatingGrid& grid);

/// True when every entry of x sits exactly on the grid.
bool grid_valid(const Vec& x, const RatingGrid& grid);

/// Number of entries with |r_k| > kZeroTol.
int l0_norm(const Vec& r);

/// Euclidean norm.
double l2_norm(const Vec& r);

/// x + r, clipped to [0,1] and snapped entrywise to the grid. Grid-exact
/// noise passes through unchanged.
Vec apply_noise(const Vec& x, const Vec& r, const RatingGrid& grid);

/// KL(p || q) in nats, with the 0*log(0/q) = 0 convention. Throws Error
/// when some p_i > 0 has q_i = 0 (infinite divergence) or when either
/// argument is not a probability vector.
double kl_divergence(const Vec& p, const Vec& q);

/// What kind of noise the user permits.
///   ModifyExist: only the entries that are nonzero in the original x.
///   AddNew:      only the entries that are zero in the original x.
///   ModifyAdd:   any entry.
enum class NoiseTypePolicy { ModifyExist, AddNew, ModifyAdd };

NoiseTypePolicy policy_from_string(std::string_view s);
std::string to_string(NoiseTypePolicy policy);

/// Indices that the policy allows to change, judged against the original
/// x (never against a partially perturbed iterate).
std::vector<std::size_t> policy_feasible_indices(const Vec& x,
                                                 NoiseTypePolicy policy);

struct UserRow {
  std::string user_id;
  Vec x;
  std::optional<int> label;  // 0-based internally
};

struct Dataset {
  int d = 0;
  int m = 0;
  RatingGrid grid;
  std::vector<UserRow> rows;

  std::size_t size() const { return rows.size(); }
  /// Labels of all rows; throws if any row is unlabeled.
  std::vector<int> labels() const;
  /// Checks dimensions, label ranges, grid validity and user_id uniqueness.
  void validate() const;
};

/// Root of all randomness. Every random stream in the library derives
/// from (master_seed, user_id, stage), so results are independent of
/// scheduling and thread count.
struct SeedSpec {
  std::uint64_t master_seed = 0;
};

/// Pure function of (master, user_id, stage); collision-resistant enough
/// for experiment streams (FNV-1a mixed through splitmix64).
std::uint64_t derive_seed(std::uint64_t master, std::string_view user_id,
                          std::string_view stage);

/// Deterministic random stream. Wraps the fully specified mt19937_64
/// engine; all value mappings are implemented here rather than through
/// std distributions so that byte-identical output does not depend on
/// the standard library version.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double next_double() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  /// Uniform in {0, ..., n-1}, unbiased (rejection sampling).
  std::size_t next_index(std::size_t n);

  /// Uniform in [lo, hi]; returns lo exactly when lo == hi.
  double uniform(double lo, double hi) {
    return lo + next_double() * (hi - lo);
  }

  /// Poisson by inversion; intended for small means.
  int poisson(double mean);

  /// Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[next_index(i)]);
    }
  }

  /// k distinct values from {0, ..., n-1}, in random order.
  std::vector<std::size_t> sample_without_replacement(std::size_t n,
                                                      std::size_t k);

 private:
  std::mt19937_64 gen_;
};

/// Splits ds into two folds of floor(n/2) rows each sharing
/// round(alpha_pct/100 * floor(n/2)) rows, drawn uniformly. alpha_pct =
/// 0 gives disjoint folds, 100 gives identical ones.
std::pair<Dataset, Dataset> split_overlap(const Dataset& ds, double alpha_pct,
                                          const SeedSpec& seed);

struct SynthConfig {
  int d = 100;
  int m = 5;
  int n = 1000;
  double sparsity = 8.0;  // mean nonzeros per user
  double signal = 0.8;    // fraction of nonzeros placed in the label's block
};

/// Synthetic rating data with label-block structure: each label owns a
/// disjoint block of d/m items, and a user with label s places a
/// `signal` fraction of its nonzero entries inside block s. Nonzero
/// counts are Poisson(sparsity), at least 1; values are uniform over the
/// nonzero grid levels.
Dataset synth_generate(const SynthConfig& cfg, const SeedSpec& seed);

// --- Dataset file format (UTF-8 JSON lines) ---
// header: {"d": int, "m": int, "grid": [floats]}
// row:    {"user_id": str, "entries": [[index, value], ...], "label": int|null}

std::string to_jsonl(const Dataset& ds);
Dataset from_jsonl(const std::string& text);
void save_jsonl(const Dataset& ds, const std::string& path);
Dataset load_jsonl(const std::string& path);

/// Reads a whole file into memory.
std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

/// Runs fn(i) for i in [0, n). With threads > 1 the index range is
/// partitioned statically; fn must only write to per-index slots.
void parallel_for(std::size_t n, int threads,
                  const std::function<void(std::size_t)>& fn);

}  // namespace attrishield::core
