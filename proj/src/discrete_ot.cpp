#include "dpot/discrete_ot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "dpot/errors.hpp"

namespace dpot {

Matrix cost_matrix(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw InputError("cost_matrix: point dimensions differ");
  const Eigen::Index d = a.cols();
  Matrix c(a.rows(), b.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const double* ai = a.row(i).data();
    double* ci = c.row(i).data();
    for (Eigen::Index j = 0; j < b.rows(); ++j) {
      const double* bj = b.row(j).data();
      double s = 0.0;
      for (Eigen::Index k = 0; k < d; ++k) {
        const double diff = ai[k] - bj[k];
        s += diff * diff;
      }
      ci[j] = 0.5 * s;
    }
  }
  return c;
}

double plan_cost(const Matrix& cost, const std::vector<std::size_t>& assignment) {
  double s = 0.0;
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    s += cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(assignment[i]));
  }
  return assignment.empty() ? 0.0 : s / static_cast<double>(assignment.size());
}

namespace {

void validate_cost(const Matrix& c, const char* who) {
  if (c.rows() != c.cols()) {
    throw InputError(std::string(who) + ": cost matrix must be square, got " +
                     std::to_string(c.rows()) + "x" + std::to_string(c.cols()));
  }
  if (c.rows() == 0) throw InputError(std::string(who) + ": empty cost matrix");
  if (!c.allFinite()) throw InputError(std::string(who) + ": non-finite cost entry");
  if ((c.array() < 0.0).any()) throw InputError(std::string(who) + ": negative cost entry");
}

// Jonker & Volgenant (1987): column reduction with reduction transfer, then
// shortest augmenting paths (Dijkstra on reduced costs) for the free rows.
class JonkerVolgenant {
 public:
  explicit JonkerVolgenant(const Matrix& cost)
      : c_(cost.data()), n_(static_cast<long>(cost.rows())), x_(n_, -1), y_(n_, -1), v_(n_, 0.0) {}

  std::vector<std::size_t> solve() {
    std::vector<long> free_rows(static_cast<std::size_t>(n_));
    const long n_free = column_reduction(free_rows);
    if (n_free > 0) augment(free_rows, n_free);
    std::vector<std::size_t> out(static_cast<std::size_t>(n_));
    for (long i = 0; i < n_; ++i) out[static_cast<std::size_t>(i)] = static_cast<std::size_t>(x_[i]);
    return out;
  }

 private:
  double cost(long i, long j) const { return c_[i * n_ + j]; }

  long column_reduction(std::vector<long>& free_rows) {
    constexpr double kLarge = std::numeric_limits<double>::max();
    std::fill(v_.begin(), v_.end(), kLarge);
    std::vector<long> argmin(static_cast<std::size_t>(n_), 0);
    for (long i = 0; i < n_; ++i) {
      for (long j = 0; j < n_; ++j) {
        const double c = cost(i, j);
        if (c < v_[j]) {
          v_[j] = c;
          argmin[j] = i;
        }
      }
    }
    std::vector<char> unique(static_cast<std::size_t>(n_), 1);
    for (long j = n_ - 1; j >= 0; --j) {
      const long i = argmin[j];
      if (x_[i] < 0) {
        x_[i] = j;
        y_[j] = i;
      } else {
        unique[i] = 0;
        y_[j] = -1;
      }
    }
    long n_free = 0;
    for (long i = 0; i < n_; ++i) {
      if (x_[i] < 0) {
        free_rows[n_free++] = i;
      } else if (unique[i]) {
        // Reduction transfer: lower v of the assigned column by the second-best
        // reduced cost in the row.
        const long j = x_[i];
        double best = kLarge;
        for (long j2 = 0; j2 < n_; ++j2) {
          if (j2 == j) continue;
          best = std::min(best, cost(i, j2) - v_[j2]);
        }
        v_[j] -= best;
      }
    }
    return n_free;
  }

  // Moves every column at the minimum distance among cols[lo..n) to the front
  // of that range; returns the end of the new SCAN block.
  long find_minimum(long lo, std::vector<double>& d, std::vector<long>& cols) const {
    long hi = lo + 1;
    double mind = d[cols[lo]];
    for (long k = hi; k < n_; ++k) {
      const long j = cols[k];
      if (d[j] <= mind) {
        if (d[j] < mind) {
          hi = lo;
          mind = d[j];
        }
        cols[k] = cols[hi];
        cols[hi++] = j;
      }
    }
    return hi;
  }

  long scan(long& lo, long& hi, std::vector<double>& d, std::vector<long>& cols,
            std::vector<long>& pred) const {
    while (lo != hi) {
      long j = cols[lo++];
      const long i = y_[j];
      const double mind = d[j];
      const double h = cost(i, j) - v_[j] - mind;
      for (long k = hi; k < n_; ++k) {
        j = cols[k];
        const double reduced = cost(i, j) - v_[j] - h;
        if (reduced < d[j]) {
          d[j] = reduced;
          pred[j] = i;
          if (reduced == mind) {
            if (y_[j] < 0) return j;
            cols[k] = cols[hi];
            cols[hi++] = j;
          }
        }
      }
    }
    return -1;
  }

  long find_path(long start, std::vector<long>& pred) {
    std::vector<long> cols(static_cast<std::size_t>(n_));
    std::vector<double> d(static_cast<std::size_t>(n_));
    for (long j = 0; j < n_; ++j) {
      cols[j] = j;
      pred[j] = start;
      d[j] = cost(start, j) - v_[j];
    }
    long lo = 0, hi = 0, n_ready = 0, final_j = -1;
    while (final_j < 0) {
      if (lo == hi) {
        n_ready = lo;
        hi = find_minimum(lo, d, cols);
        for (long k = lo; k < hi; ++k) {
          if (y_[cols[k]] < 0) {
            final_j = cols[k];
            break;
          }
        }
      }
      if (final_j < 0) {
        long scan_lo = lo;
        final_j = scan(scan_lo, hi, d, cols, pred);
        if (final_j < 0) lo = scan_lo;
      }
    }
    const double mind = d[cols[lo]];
    for (long k = 0; k < n_ready; ++k) {
      const long j = cols[k];
      v_[j] += d[j] - mind;
    }
    return final_j;
  }

  void augment(const std::vector<long>& free_rows, long n_free) {
    std::vector<long> pred(static_cast<std::size_t>(n_));
    for (long f = 0; f < n_free; ++f) {
      const long start = free_rows[f];
      long j = find_path(start, pred);
      long i = -1;
      while (i != start) {
        i = pred[j];
        y_[j] = i;
        std::swap(j, x_[i]);
      }
    }
  }

  const double* c_;
  long n_;
  std::vector<long> x_;  // row -> column
  std::vector<long> y_;  // column -> row
  std::vector<double> v_;  // column duals
};

}  // namespace

TransportPlan solve_exact(const Matrix& cost) {
  validate_cost(cost, "solve_exact");
  TransportPlan plan;
  plan.solver = PlanSolver::exact;
  if (cost.rows() == 1) {
    plan.assignment = {0};
  } else {
    plan.assignment = JonkerVolgenant(cost).solve();
  }
  std::vector<char> seen(plan.assignment.size(), 0);
  for (std::size_t j : plan.assignment) {
    if (j >= seen.size() || seen[j]) throw NumericError("solve_exact: solver returned a non-permutation");
    seen[j] = 1;
  }
  plan.cost = plan_cost(cost, plan.assignment);
  return plan;
}

TransportPlan solve_oracle(const Matrix& cost) {
  validate_cost(cost, "solve_oracle");
  if (cost.rows() > 9) {
    throw InputError("solve_oracle: N = " + std::to_string(cost.rows()) + " exceeds 9");
  }
  const auto n = static_cast<std::size_t>(cost.rows());
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  TransportPlan best;
  best.solver = PlanSolver::oracle;
  best.cost = std::numeric_limits<double>::infinity();
  // next_permutation visits permutations in lexicographic order, so a strict
  // comparison keeps the lexicographically smallest among ties.
  do {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      s += cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(perm[i]));
    }
    s /= static_cast<double>(n);
    if (s < best.cost) {
      best.cost = s;
      best.assignment = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  best.cost = plan_cost(cost, best.assignment);
  return best;
}

double empirical_w2(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    throw InputError("empirical_w2: sizes differ (" + std::to_string(a.rows()) + " vs " +
                     std::to_string(b.rows()) + ")");
  }
  if (a.cols() != b.cols()) throw InputError("empirical_w2: dimensions differ");
  const Matrix c = cost_matrix(a, b);
  const TransportPlan plan = solve_exact(c);
  // Summing the matched pair costs in sorted order makes the value independent
  // of which cloud indexes the rows, so w2(a, b) == w2(b, a) bit for bit.
  std::vector<double> terms(plan.size());
  for (std::size_t i = 0; i < terms.size(); ++i)
    terms[i] = c(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(plan.assignment[i]));
  std::sort(terms.begin(), terms.end());
  const double total = std::accumulate(terms.begin(), terms.end(), 0.0);
  return std::sqrt(total / static_cast<double>(terms.size()));
}

namespace {

double log_sum_exp(const double* values, Eigen::Index n, Eigen::Index stride) {
  double m = -std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < n; ++k) m = std::max(m, values[k * stride]);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) s += std::exp(values[k * stride] - m);
  return m + std::log(s);
}

}  // namespace

EntropicPlan solve_entropic(const Matrix& cost, double reg, int max_iter, double tol) {
  validate_cost(cost, "solve_entropic");
  if (!(reg > 0.0)) throw DomainError("solve_entropic: regularisation must be positive");
  const Eigen::Index n = cost.rows();
  const double log_marginal = -std::log(static_cast<double>(n));
  const double target = 1.0 / static_cast<double>(n);

  // Dual potentials f, g; plan P_ij = exp((f_i + g_j - c_ij) / reg).
  Vector f = Vector::Zero(n);
  Vector g = Vector::Zero(n);
  Matrix scratch(n, n);
  double violation = std::numeric_limits<double>::infinity();

  auto fill_log_kernel = [&]() {
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) scratch(i, j) = (f[i] + g[j] - cost(i, j)) / reg;
    }
  };

  int it = 0;
  while (it < max_iter) {
    ++it;
    // Row update: enforce row sums exactly.
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) scratch(i, j) = (g[j] - cost(i, j)) / reg;
      f[i] = reg * (log_marginal - log_sum_exp(scratch.row(i).data(), n, 1));
    }
    // Column update: enforce column sums exactly.
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) scratch(i, j) = (f[i] - cost(i, j)) / reg;
    }
    for (Eigen::Index j = 0; j < n; ++j) {
      g[j] = reg * (log_marginal - log_sum_exp(scratch.data() + j, n, n));
    }
    // Columns are exact after the g update; measure the row violation.
    fill_log_kernel();
    violation = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double row = std::exp(log_sum_exp(scratch.row(i).data(), n, 1));
      violation = std::max(violation, std::abs(row - target));
    }
    if (violation <= tol) break;
  }
  if (violation > tol) {
    throw IterationLimitError("solve_entropic: no convergence in " + std::to_string(max_iter) +
                                  " iterations (marginal violation " + std::to_string(violation) + ")",
                              violation);
  }

  EntropicPlan out;
  out.coupling = scratch.array().exp().matrix();
  out.cost = out.coupling.cwiseProduct(cost).sum();
  out.iterations = it;
  const double row_v = (out.coupling.rowwise().sum().array() - target).abs().maxCoeff();
  const double col_v = (out.coupling.colwise().sum().array() - target).abs().maxCoeff();
  out.marginal_violation = std::max(row_v, col_v);
  return out;
}

}  // namespace dpot
