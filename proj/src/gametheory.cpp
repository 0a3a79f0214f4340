#include "attrishield/gametheory.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

#include "json.hpp"

namespace attrishield::gametheory {

namespace {

constexpr double kPivotTol = 1e-9;
constexpr double kFeasTol = 1e-7;

void check_table(const Table& t, int rows, int cols, const char* name) {
  if (static_cast<int>(t.size()) != rows) {
    throw std::invalid_argument(std::string(name) + ": wrong row count");
  }
  for (const auto& row : t) {
    if (static_cast<int>(row.size()) != cols) {
      throw std::invalid_argument(std::string(name) + ": ragged row");
    }
    for (double v : row) {
      if (!std::isfinite(v) || v < 0.0) {
        throw std::invalid_argument(std::string(name) +
                                    ": entries must be finite and nonnegative");
      }
    }
  }
}

/// min c.z subject to A z (<= or ==) b, z >= 0, with all b >= 0.
/// Dense two-phase tableau simplex. Bland's rule picks the lowest-index
/// entering column and breaks ratio ties by lowest basis index, so the
/// walk cannot cycle.
class SimplexLP {
 public:
  SimplexLP(int n_vars, Vec c) : n_vars_(n_vars), c_(std::move(c)) {}

  void add_le(Vec row, double rhs) { add_row(std::move(row), rhs, false); }
  void add_eq(Vec row, double rhs) { add_row(std::move(row), rhs, true); }

  /// Returns the optimal point, or nothing if infeasible.
  std::optional<std::pair<Vec, double>> solve() {
    build_tableau();
    run_phase(obj1_, total_cols_);
    if (-obj1_[total_cols_] > kFeasTol) return std::nullopt;
    drop_artificials();
    run_phase(obj2_, art_begin_);
    Vec z(static_cast<std::size_t>(n_vars_), 0.0);
    for (std::size_t i = 0; i < basis_.size(); ++i) {
      if (basis_[i] < n_vars_) z[basis_[i]] = tab_[i][total_cols_];
    }
    double obj = 0.0;
    for (int j = 0; j < n_vars_; ++j) obj += c_[j] * z[j];
    return std::make_pair(std::move(z), obj);
  }

 private:
  void add_row(Vec row, double rhs, bool eq) {
    if (static_cast<int>(row.size()) != n_vars_) {
      throw std::invalid_argument("lp row width mismatch");
    }
    if (rhs < 0.0) throw std::invalid_argument("lp rhs must be nonnegative");
    rows_.push_back(std::move(row));
    rhs_.push_back(rhs);
    is_eq_.push_back(eq);
  }

  void build_tableau() {
    const int m = static_cast<int>(rows_.size());
    int n_slack = 0;
    for (bool eq : is_eq_) n_slack += eq ? 0 : 1;
    slack_begin_ = n_vars_;
    art_begin_ = n_vars_ + n_slack;
    total_cols_ = art_begin_ + (m - n_slack);
    tab_.assign(static_cast<std::size_t>(m), Vec(total_cols_ + 1, 0.0));
    basis_.assign(static_cast<std::size_t>(m), -1);
    int slack = slack_begin_;
    int art = art_begin_;
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < n_vars_; ++j) tab_[i][j] = rows_[i][j];
      tab_[i][total_cols_] = rhs_[i];
      if (is_eq_[i]) {
        tab_[i][art] = 1.0;
        basis_[i] = art++;
      } else {
        tab_[i][slack] = 1.0;
        basis_[i] = slack++;
      }
    }
    // Reduced-cost rows: rhs cell holds minus the current objective value.
    obj2_.assign(total_cols_ + 1, 0.0);
    for (int j = 0; j < n_vars_; ++j) obj2_[j] = c_[j];
    obj1_.assign(total_cols_ + 1, 0.0);
    for (int j = art_begin_; j < total_cols_; ++j) obj1_[j] = 1.0;
    for (int i = 0; i < m; ++i) {
      if (basis_[i] < art_begin_) continue;
      for (int j = 0; j <= total_cols_; ++j) obj1_[j] -= tab_[i][j];
    }
  }

  void pivot(std::size_t row, int col) {
    auto& pr = tab_[row];
    const double p = pr[col];
    for (double& v : pr) v /= p;
    auto eliminate = [&](Vec& r) {
      const double f = r[col];
      if (f == 0.0) return;
      for (int j = 0; j <= total_cols_; ++j) r[j] -= f * pr[j];
    };
    for (std::size_t i = 0; i < tab_.size(); ++i) {
      if (i != row) eliminate(tab_[i]);
    }
    eliminate(obj1_);
    eliminate(obj2_);
    basis_[row] = col;
  }

  /// Pivots until no reduced cost below -tol remains among the first
  /// `col_limit` columns.
  void run_phase(const Vec& obj, int col_limit) {
    while (true) {
      int enter = -1;
      for (int j = 0; j < col_limit; ++j) {
        if (obj[j] < -kPivotTol) {
          enter = j;
          break;
        }
      }
      if (enter < 0) return;
      std::size_t leave = tab_.size();
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < tab_.size(); ++i) {
        if (tab_[i][enter] <= kPivotTol) continue;
        const double ratio = tab_[i][total_cols_] / tab_[i][enter];
        if (ratio < best - kPivotTol) {
          best = ratio;
          leave = i;
        } else if (ratio < best + kPivotTol && leave < tab_.size() &&
                   basis_[i] < basis_[leave]) {
          leave = i;
        }
      }
      if (leave == tab_.size()) throw std::runtime_error("lp unbounded");
      pivot(leave, enter);
    }
  }

  /// Pivots leftover zero-level artificials out of the basis; rows that
  /// cannot be cleared are redundant and get removed.
  void drop_artificials() {
    for (std::size_t i = 0; i < tab_.size();) {
      if (basis_[i] < art_begin_) {
        ++i;
        continue;
      }
      int col = -1;
      for (int j = 0; j < art_begin_; ++j) {
        if (std::abs(tab_[i][j]) > kPivotTol) {
          col = j;
          break;
        }
      }
      if (col >= 0) {
        pivot(i, col);
        ++i;
      } else {
        tab_.erase(tab_.begin() + static_cast<std::ptrdiff_t>(i));
        basis_.erase(basis_.begin() + static_cast<std::ptrdiff_t>(i));
      }
    }
  }

  int n_vars_;
  Vec c_;
  std::vector<Vec> rows_;
  Vec rhs_;
  std::vector<bool> is_eq_;

  std::vector<Vec> tab_;
  Vec obj1_;
  Vec obj2_;
  std::vector<int> basis_;
  int slack_begin_ = 0;
  int art_begin_ = 0;
  int total_cols_ = 0;
};

}  // namespace

void JointDistribution::validate() const {
  if (pr.empty() || pr[0].empty()) {
    throw std::invalid_argument("joint distribution is empty");
  }
  check_table(pr, num_labels(), num_points(), "joint");
  double total = 0.0;
  for (const auto& row : pr) {
    for (double v : row) total += v;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw std::invalid_argument("joint distribution must sum to 1");
  }
}

Vec JointDistribution::marginal_x() const {
  Vec out(static_cast<std::size_t>(num_points()), 0.0);
  for (const auto& row : pr) {
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += row[j];
  }
  return out;
}

Vec JointDistribution::marginal_s() const {
  Vec out;
  out.reserve(pr.size());
  for (const auto& row : pr) {
    double s = 0.0;
    for (double v : row) s += v;
    out.push_back(s);
  }
  return out;
}

void ObfuscationMatrix::validate() const {
  const int n = static_cast<int>(f.size());
  check_table(f, n, n, "obfuscation matrix");
  for (const auto& row : f) {
    double s = 0.0;
    for (double v : row) s += v;
    if (std::abs(s - 1.0) > 1e-9) {
      throw std::invalid_argument("obfuscation rows must sum to 1");
    }
  }
}

ObfuscationMatrix ObfuscationMatrix::identity(int n) {
  ObfuscationMatrix out;
  out.f.assign(static_cast<std::size_t>(n), Vec(static_cast<std::size_t>(n)));
  for (int i = 0; i < n; ++i) out.f[i][i] = 1.0;
  return out;
}

Table zero_one_privacy_loss(int num_labels) {
  Table t(static_cast<std::size_t>(num_labels),
          Vec(static_cast<std::size_t>(num_labels), 0.0));
  for (int i = 0; i < num_labels; ++i) t[i][i] = 1.0;
  return t;
}

Table unit_utility_loss(int num_points) {
  Table t(static_cast<std::size_t>(num_points),
          Vec(static_cast<std::size_t>(num_points), 1.0));
  for (int i = 0; i < num_points; ++i) t[i][i] = 0.0;
  return t;
}

double expected_utility_loss(const ObfuscationMatrix& f,
                             const JointDistribution& joint,
                             const Table& d_q) {
  const int n = joint.num_points();
  check_table(d_q, n, n, "d_q");
  const Vec px = joint.marginal_x();
  double loss = 0.0;
  for (int x = 0; x < n; ++x) {
    for (int xp = 0; xp < n; ++xp) {
      loss += px[x] * f.f[x][xp] * d_q[x][xp];
    }
  }
  return loss;
}

double expected_privacy_loss(const ObfuscationMatrix& f,
                             const JointDistribution& joint,
                             const Table& d_p) {
  const int n = joint.num_points();
  const int m = joint.num_labels();
  check_table(d_p, m, m, "d_p");
  double loss = 0.0;
  for (int xp = 0; xp < n; ++xp) {
    double best = -std::numeric_limits<double>::infinity();
    for (int shat = 0; shat < m; ++shat) {
      double gain = 0.0;
      for (int s = 0; s < m; ++s) {
        for (int x = 0; x < n; ++x) {
          gain += joint.pr[s][x] * f.f[x][xp] * d_p[s][shat];
        }
      }
      best = std::max(best, gain);
    }
    loss += best;
  }
  return loss;
}

std::pair<ObfuscationMatrix, double> solve_game_lp(
    const JointDistribution& joint, const Table& d_p, const Table& d_q,
    double beta) {
  joint.validate();
  const int n = joint.num_points();
  const int m = joint.num_labels();
  if (n > 64) throw std::invalid_argument("domain larger than 64 points");
  check_table(d_p, m, m, "d_p");
  check_table(d_q, n, n, "d_q");
  if (!(beta >= 0.0) || !std::isfinite(beta)) {
    throw std::invalid_argument("beta must be finite and nonnegative");
  }
  const Vec px = joint.marginal_x();

  // Variables: f(x'|x) at x*n + x', then y_x' at n*n + x'.
  const int nf = n * n;
  const int nv = nf + n;
  Vec cost(static_cast<std::size_t>(nv), 0.0);
  for (int xp = 0; xp < n; ++xp) cost[nf + xp] = 1.0;
  SimplexLP lp(nv, std::move(cost));

  // y_x' dominates every attacker response to x'.
  for (int xp = 0; xp < n; ++xp) {
    for (int shat = 0; shat < m; ++shat) {
      Vec row(static_cast<std::size_t>(nv), 0.0);
      for (int x = 0; x < n; ++x) {
        double coef = 0.0;
        for (int s = 0; s < m; ++s) coef += joint.pr[s][x] * d_p[s][shat];
        row[x * n + xp] = coef;
      }
      row[nf + xp] = -1.0;
      lp.add_le(std::move(row), 0.0);
    }
  }
  {
    Vec row(static_cast<std::size_t>(nv), 0.0);
    for (int x = 0; x < n; ++x) {
      for (int xp = 0; xp < n; ++xp) row[x * n + xp] = px[x] * d_q[x][xp];
    }
    lp.add_le(std::move(row), beta);
  }
  for (int x = 0; x < n; ++x) {
    Vec row(static_cast<std::size_t>(nv), 0.0);
    for (int xp = 0; xp < n; ++xp) row[x * n + xp] = 1.0;
    lp.add_eq(std::move(row), 1.0);
  }

  auto sol = lp.solve();
  if (!sol) throw std::runtime_error("game lp infeasible");
  ObfuscationMatrix f;
  f.f.assign(static_cast<std::size_t>(n), Vec(static_cast<std::size_t>(n)));
  for (int x = 0; x < n; ++x) {
    for (int xp = 0; xp < n; ++xp) {
      f.f[x][xp] = std::clamp(sol->first[x * n + xp], 0.0, 1.0);
    }
  }
  return {std::move(f), sol->second};
}

std::pair<ObfuscationMatrix, double> brute_force_game(
    const JointDistribution& joint, const Table& d_p, const Table& d_q,
    double beta, double step) {
  joint.validate();
  if (joint.num_points() != 2) {
    throw std::invalid_argument("brute force oracle covers two points only");
  }
  if (!(step > 0.0) || step > 1.0) {
    throw std::invalid_argument("step must lie in (0, 1]");
  }
  const int ticks = static_cast<int>(std::llround(1.0 / step));
  ObfuscationMatrix best = ObfuscationMatrix::identity(2);
  double best_obj = std::numeric_limits<double>::infinity();
  for (int ia = 0; ia <= ticks; ++ia) {
    for (int ib = 0; ib <= ticks; ++ib) {
      const double a = std::min(1.0, ia * step);
      const double b = std::min(1.0, ib * step);
      ObfuscationMatrix f;
      f.f = {{1.0 - a, a}, {b, 1.0 - b}};
      if (expected_utility_loss(f, joint, d_q) > beta + 1e-12) continue;
      const double obj = expected_privacy_loss(f, joint, d_p);
      if (obj < best_obj - 1e-15) {
        best_obj = obj;
        best = f;
      }
    }
  }
  if (!std::isfinite(best_obj)) throw std::runtime_error("no feasible grid point");
  return {std::move(best), best_obj};
}

GameInstance load_game_instance(const std::string& json_text) {
  nlohmann::json j = nlohmann::json::parse(json_text);
  GameInstance inst;
  const int s = j.at("S").get<int>();
  const int x = j.at("X").get<int>();
  if (s <= 0 || x <= 0) throw std::invalid_argument("S and X must be positive");
  inst.joint.pr = j.at("joint").get<Table>();
  check_table(inst.joint.pr, s, x, "joint");
  inst.joint.validate();
  inst.d_p = j.contains("d_p") ? j.at("d_p").get<Table>()
                               : zero_one_privacy_loss(s);
  check_table(inst.d_p, s, s, "d_p");
  inst.d_q =
      j.contains("d_q") ? j.at("d_q").get<Table>() : unit_utility_loss(x);
  check_table(inst.d_q, x, x, "d_q");
  inst.beta = j.at("beta").get<double>();
  if (!(inst.beta >= 0.0)) throw std::invalid_argument("beta must be >= 0");
  return inst;
}

std::string solution_csv(const ObfuscationMatrix& f, double objective) {
  std::string out;
  char buf[64];
  for (const auto& row : f.f) {
    for (std::size_t j = 0; j < row.size(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.6f", row[j]);
      if (j > 0) out += ',';
      out += buf;
    }
    out += '\n';
  }
  std::snprintf(buf, sizeof(buf), "objective,%.6f\n", objective);
  out += buf;
  return out;
}

}  // namespace attrishield::gametheory
