#include "attrishield/core.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>
#include <unordered_set>

#include <json.hpp>

namespace attrishield::core {

using nlohmann::json;

RatingGrid::RatingGrid(std::vector<double> v) : values(std::move(v)) {
  if (values.size() < 2) throw Error("grid needs at least 2 values");
  bool has_zero = false;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i] < 0.0 || values[i] > 1.0)
      throw Error("grid values must lie in [0,1]");
    if (i > 0 && values[i] <= values[i - 1])
      throw Error("grid values must be strictly increasing");
    if (values[i] == 0.0) has_zero = true;
  }
  if (!has_zero) throw Error("grid must contain 0.0");
}

bool RatingGrid::contains(double v) const {
  for (double g : values) {
    if (v == g) return true;
  }
  return false;
}

std::vector<double> RatingGrid::nonzero_values() const {
  std::vector<double> out;
  for (double g : values) {
    if (g != 0.0) out.push_back(g);
  }
  return out;
}

double round_to_grid(double v, const RatingGrid& grid) {
  double best = grid.values.front();
  double best_dist = std::abs(v - best);
  for (std::size_t i = 1; i < grid.values.size(); ++i) {
    double dist = std::abs(v - grid.values[i]);
    if (dist < best_dist) {  // strict: ties keep the lower value
      best = grid.values[i];
      best_dist = dist;
    }
  }
  return best;
}

bool grid_valid(const Vec& x, const RatingGrid& grid) {
  return std::all_of(x.begin(), x.end(),
                     [&](double v) { return grid.contains(v); });
}

int l0_norm(const Vec& r) {
  int count = 0;
  for (double v : r) {
    if (std::abs(v) > kZeroTol) ++count;
  }
  return count;
}

double l2_norm(const Vec& r) {
  double sum = 0.0;
  for (double v : r) sum += v * v;
  return std::sqrt(sum);
}

Vec apply_noise(const Vec& x, const Vec& r, const RatingGrid& grid) {
  if (x.size() != r.size()) throw Error("apply_noise: dimension mismatch");
  Vec out(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    double v = std::clamp(x[k] + r[k], 0.0, 1.0);
    out[k] = round_to_grid(v, grid);
  }
  return out;
}

namespace {

void check_probability_vector(const Vec& p, const char* name) {
  double sum = 0.0;
  for (double v : p) {
    if (v < 0.0) throw Error(std::string(name) + ": negative entry");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw Error(std::string(name) + ": entries do not sum to 1");
}

}  // namespace

double kl_divergence(const Vec& p, const Vec& q) {
  if (p.size() != q.size()) throw Error("kl_divergence: length mismatch");
  check_probability_vector(p, "p");
  check_probability_vector(q, "q");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    if (q[i] <= 0.0) throw Error("kl_divergence: infinite (p_i>0, q_i=0)");
    kl += p[i] * std::log(p[i] / q[i]);
  }
  return kl;
}

NoiseTypePolicy policy_from_string(std::string_view s) {
  if (s == "modify_exist") return NoiseTypePolicy::ModifyExist;
  if (s == "add_new") return NoiseTypePolicy::AddNew;
  if (s == "modify_add") return NoiseTypePolicy::ModifyAdd;
  throw Error("unknown noise-type policy: " + std::string(s));
}

std::string to_string(NoiseTypePolicy policy) {
  switch (policy) {
    case NoiseTypePolicy::ModifyExist:
      return "modify_exist";
    case NoiseTypePolicy::AddNew:
      return "add_new";
    case NoiseTypePolicy::ModifyAdd:
      return "modify_add";
  }
  throw Error("invalid policy");
}

std::vector<std::size_t> policy_feasible_indices(const Vec& x,
                                                 NoiseTypePolicy policy) {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < x.size(); ++k) {
    bool zero = x[k] == 0.0;
    bool take = policy == NoiseTypePolicy::ModifyAdd ||
                (policy == NoiseTypePolicy::ModifyExist && !zero) ||
                (policy == NoiseTypePolicy::AddNew && zero);
    if (take) out.push_back(k);
  }
  return out;
}

std::vector<int> Dataset::labels() const {
  std::vector<int> out;
  out.reserve(rows.size());
  for (const auto& row : rows) {
    if (!row.label) throw Error("dataset row " + row.user_id + " is unlabeled");
    out.push_back(*row.label);
  }
  return out;
}

void Dataset::validate() const {
  std::unordered_set<std::string> ids;
  for (const auto& row : rows) {
    if (static_cast<int>(row.x.size()) != d)
      throw Error("row " + row.user_id + ": dimension mismatch");
    if (row.label && (*row.label < 0 || *row.label >= m))
      throw Error("row " + row.user_id + ": label out of range");
    if (!grid_valid(row.x, grid))
      throw Error("row " + row.user_id + ": entry off the grid");
    if (!ids.insert(row.user_id).second)
      throw Error("duplicate user_id " + row.user_id);
  }
}

std::uint64_t derive_seed(std::uint64_t master, std::string_view user_id,
                          std::string_view stage) {
  // FNV-1a over (master || 0x1F || user_id || 0x1F || stage), then a
  // splitmix64 finalizer to spread low-entropy inputs.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix_byte = [&h](unsigned char b) {
    h ^= b;
    h *= 0x100000001b3ULL;
  };
  for (int i = 0; i < 8; ++i) mix_byte(static_cast<unsigned char>(master >> (8 * i)));
  mix_byte(0x1F);
  for (char c : user_id) mix_byte(static_cast<unsigned char>(c));
  mix_byte(0x1F);
  for (char c : stage) mix_byte(static_cast<unsigned char>(c));
  h += 0x9e3779b97f4a7c15ULL;
  h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ULL;
  h = (h ^ (h >> 27)) * 0x94d049bb133111ebULL;
  return h ^ (h >> 31);
}

std::size_t Rng::next_index(std::size_t n) {
  if (n == 0) throw Error("next_index: empty range");
  const std::uint64_t limit =
      std::numeric_limits<std::uint64_t>::max() -
      std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t v = gen_();
  while (v >= limit) v = gen_();
  return static_cast<std::size_t>(v % n);
}

int Rng::poisson(double mean) {
  if (mean < 0.0) throw Error("poisson: negative mean");
  // Knuth inversion; fine for the small means used here.
  const double threshold = std::exp(-mean);
  int k = 0;
  double prod = next_double();
  while (prod > threshold) {
    ++k;
    prod *= next_double();
  }
  return k;
}

std::vector<std::size_t> Rng::sample_without_replacement(std::size_t n,
                                                         std::size_t k) {
  if (k > n) throw Error("sample_without_replacement: k > n");
  std::vector<std::size_t> pool(n);
  for (std::size_t i = 0; i < n; ++i) pool[i] = i;
  // Partial Fisher-Yates: the first k slots end up random and distinct.
  for (std::size_t i = 0; i < k; ++i) {
    std::swap(pool[i], pool[i + next_index(n - i)]);
  }
  pool.resize(k);
  return pool;
}

std::pair<Dataset, Dataset> split_overlap(const Dataset& ds, double alpha_pct,
                                          const SeedSpec& seed) {
  if (ds.size() < 2) throw Error("split_overlap: need at least 2 rows");
  if (alpha_pct < 0.0 || alpha_pct > 100.0)
    throw Error("split_overlap: alpha_pct outside [0,100]");
  const std::size_t half = ds.size() / 2;
  const std::size_t shared = static_cast<std::size_t>(
      std::llround(alpha_pct / 100.0 * static_cast<double>(half)));

  std::vector<std::size_t> perm(ds.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  Rng rng(derive_seed(seed.master_seed, "", "split_overlap"));
  rng.shuffle(perm);

  auto take = [&](std::size_t begin, std::size_t end, Dataset& fold) {
    for (std::size_t i = begin; i < end; ++i) fold.rows.push_back(ds.rows[perm[i]]);
  };
  Dataset a{ds.d, ds.m, ds.grid, {}};
  Dataset b{ds.d, ds.m, ds.grid, {}};
  take(0, shared, a);
  take(0, shared, b);
  take(shared, half, a);
  take(half, 2 * half - shared, b);
  return {std::move(a), std::move(b)};
}

Dataset synth_generate(const SynthConfig& cfg, const SeedSpec& seed) {
  if (cfg.m < 2 || cfg.d < cfg.m || cfg.n < 1)
    throw Error("synth_generate: need d >= m >= 2 and n >= 1");
  if (cfg.sparsity > cfg.d) throw Error("synth_generate: sparsity > d");
  if (cfg.signal < 0.0 || cfg.signal > 1.0)
    throw Error("synth_generate: signal outside [0,1]");

  Dataset ds;
  ds.d = cfg.d;
  ds.m = cfg.m;
  const std::size_t block = static_cast<std::size_t>(cfg.d / cfg.m);
  const std::vector<double> levels = ds.grid.nonzero_values();

  int digits = 1;
  for (int v = cfg.n - 1; v >= 10; v /= 10) ++digits;

  for (int u = 0; u < cfg.n; ++u) {
    std::string id = "u" + std::string(
        static_cast<std::size_t>(digits) - std::to_string(u).size(), '0') +
        std::to_string(u);
    Rng rng(derive_seed(seed.master_seed, id, "synth"));
    const int label = static_cast<int>(rng.next_index(cfg.m));

    int nnz = std::max(1, rng.poisson(cfg.sparsity));
    nnz = std::min(nnz, cfg.d);
    int in_block = static_cast<int>(std::llround(cfg.signal * nnz));
    in_block = std::min<int>(in_block, static_cast<int>(block));
    const int outside = nnz - in_block;

    const std::size_t block_start = static_cast<std::size_t>(label) * block;
    std::vector<std::size_t> items;
    for (std::size_t j : rng.sample_without_replacement(block, in_block))
      items.push_back(block_start + j);
    // Positions outside the label's own block, uniform without replacement.
    const std::size_t n_outside = static_cast<std::size_t>(cfg.d) - block;
    for (std::size_t j :
         rng.sample_without_replacement(n_outside, std::min<std::size_t>(outside, n_outside))) {
      items.push_back(j < block_start ? j : j + block);
    }

    Vec x(cfg.d, 0.0);
    for (std::size_t item : items)
      x[item] = levels[rng.next_index(levels.size())];
    ds.rows.push_back(UserRow{std::move(id), std::move(x), label});
  }
  return ds;
}

std::string to_jsonl(const Dataset& ds) {
  std::string out;
  json header;
  header["d"] = ds.d;
  header["m"] = ds.m;
  header["grid"] = ds.grid.values;
  out += header.dump();
  out += '\n';
  for (const auto& row : ds.rows) {
    json j;
    j["user_id"] = row.user_id;
    json entries = json::array();
    for (std::size_t k = 0; k < row.x.size(); ++k) {
      if (row.x[k] != 0.0) entries.push_back({k, row.x[k]});
    }
    j["entries"] = std::move(entries);
    if (row.label)
      j["label"] = *row.label;
    else
      j["label"] = nullptr;
    out += j.dump();
    out += '\n';
  }
  return out;
}

Dataset from_jsonl(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw Error("dataset: missing header line");
  json header = json::parse(line);
  Dataset ds;
  ds.d = header.at("d").get<int>();
  ds.m = header.at("m").get<int>();
  if (header.contains("grid"))
    ds.grid = RatingGrid(header.at("grid").get<std::vector<double>>());
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    UserRow row;
    row.user_id = j.at("user_id").get<std::string>();
    row.x.assign(ds.d, 0.0);
    for (const auto& e : j.at("entries")) {
      const int idx = e.at(0).get<int>();
      if (idx < 0 || idx >= ds.d) throw Error("dataset: entry index out of range");
      row.x[static_cast<std::size_t>(idx)] = e.at(1).get<double>();
    }
    if (j.contains("label") && !j.at("label").is_null())
      row.label = j.at("label").get<int>();
    ds.rows.push_back(std::move(row));
  }
  ds.validate();
  return ds;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << content;
}

void save_jsonl(const Dataset& ds, const std::string& path) {
  write_file(path, to_jsonl(ds));
}

Dataset load_jsonl(const std::string& path) {
  return from_jsonl(read_file(path));
}

void parallel_for(std::size_t n, int threads,
                  const std::function<void(std::size_t)>& fn) {
  if (threads < 1) threads = 1;
  if (threads == 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const std::size_t workers = std::min<std::size_t>(threads, n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  std::exception_ptr first_error;
  std::mutex error_mutex;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      const std::size_t lo = n * w / workers;
      const std::size_t hi = n * (w + 1) / workers;
      try {
        for (std::size_t i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace attrishield::core
