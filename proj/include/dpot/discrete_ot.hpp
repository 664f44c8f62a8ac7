#pragma once

// Exact discrete optimal transport between two equal-size uniform empirical
// measures.
//
// Cost convention: c(a, b) = 1/2 |a - b|^2 everywhere, so
//   W2(a, b) = sqrt( min_sigma (1/N) sum_i c(a_i, b_sigma(i)) ).
// Most OT libraries drop the factor 1/2; values here are smaller by sqrt(2).

#include <cstddef>
#include <vector>

#include "dpot/tensor.hpp"

namespace dpot {

enum class PlanSolver { exact, entropic, oracle };

/// A permutation plan: row i of the cost matrix is sent to column
/// assignment[i]; cost = (1/N) sum_i c(i, assignment[i]).
struct TransportPlan {
  std::vector<std::size_t> assignment;
  double cost = 0.0;
  PlanSolver solver = PlanSolver::exact;

  std::size_t size() const { return assignment.size(); }
};

/// c_ij = 1/2 |a_i - b_j|^2. a and b need not have the same number of rows.
Matrix cost_matrix(const Matrix& a, const Matrix& b);

/// (1/N) sum_i c(i, sigma(i)) summed in row order.
double plan_cost(const Matrix& cost, const std::vector<std::size_t>& assignment);

/// Globally optimal assignment (Jonker-Volgenant shortest augmenting path).
/// Throws InputError on non-square, non-finite or negative costs.
TransportPlan solve_exact(const Matrix& cost);

/// Exhaustive search over all N! permutations, N <= 9. Among equal-cost
/// permutations the lexicographically smallest wins.
TransportPlan solve_oracle(const Matrix& cost);

/// Empirical W2 between equal-size clouds with the 1/2 cost convention.
double empirical_w2(const Matrix& a, const Matrix& b);

struct EntropicPlan {
  Matrix coupling;  // N x N, row and column sums 1/N
  double cost = 0.0;  // <coupling, cost>
  int iterations = 0;
  double marginal_violation = 0.0;
};

/// Log-domain Sinkhorn iterations on uniform marginals. Stops when every row
/// and column sum is within `tol` of 1/N; throws IterationLimitError otherwise.
EntropicPlan solve_entropic(const Matrix& cost, double reg, int max_iter, double tol);

}  // namespace dpot
